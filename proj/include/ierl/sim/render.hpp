#pragma once

#include "ierl/sim/geometry.hpp"
#include "ierl/sim/scenario.hpp"

#include <bit>
#include <cstdint>
#include <vector>

namespace ierl::sim {

/// Drivable-surface bitmap over the scenario's world box, built from every
/// lane corridor (route lanes, traffic lanes, extra road).
class RoadMap {
 public:
  RoadMap() = default;
  explicit RoadMap(const ScenarioSpec& s, double resolution = 0.25) : origin_(s.world.min), res_(resolution) {
    cols_ = static_cast<int>(std::ceil((s.world.max.x - s.world.min.x) / res_));
    rows_ = static_cast<int>(std::ceil((s.world.max.y - s.world.min.y) / res_));
    cells_.assign(static_cast<std::size_t>(cols_) * rows_, 0);
    for (const auto& l : s.route_lanes) paint(l, s.lane_width);
    for (const auto& l : s.traffic_lanes) paint(l.center, l.width);
    for (const auto& l : s.extra_road) paint(l, s.lane_width);
  }

  bool drivable(Vec2 p) const {
    const int cx = static_cast<int>(std::floor((p.x - origin_.x) / res_));
    const int cy = static_cast<int>(std::floor((p.y - origin_.y) / res_));
    if (cx < 0 || cy < 0 || cx >= cols_ || cy >= rows_) return false;
    return cells_[static_cast<std::size_t>(cy) * cols_ + cx] != 0;
  }

  double resolution() const { return res_; }

 private:
  void paint(const Polyline& line, double width) {
    const double half = 0.5 * width;
    const auto& pts = line.points();
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const Vec2 a = pts[i], b = pts[i + 1];
      const int x0 = std::max(0, static_cast<int>(std::floor((std::min(a.x, b.x) - half - origin_.x) / res_)));
      const int x1 = std::min(cols_ - 1, static_cast<int>(std::floor((std::max(a.x, b.x) + half - origin_.x) / res_)));
      const int y0 = std::max(0, static_cast<int>(std::floor((std::min(a.y, b.y) - half - origin_.y) / res_)));
      const int y1 = std::min(rows_ - 1, static_cast<int>(std::floor((std::max(a.y, b.y) + half - origin_.y) / res_)));
      for (int cy = y0; cy <= y1; ++cy)
        for (int cx = x0; cx <= x1; ++cx) {
          const Vec2 center{origin_.x + (cx + 0.5) * res_, origin_.y + (cy + 0.5) * res_};
          if (segment_distance(center, a, b) <= half) cells_[static_cast<std::size_t>(cy) * cols_ + cx] = 1;
        }
    }
  }

  Vec2 origin_;
  double res_ = 0.25;
  int cols_ = 0;
  int rows_ = 0;
  std::vector<std::uint8_t> cells_;
};

inline constexpr int kChannels = 3;  // road, ego, other vehicles
inline constexpr int kFrames = 3;    // two previous frames + current
enum Channel : int { kRoad = 0, kEgo = 1, kOthers = 2 };

struct GridSpec {
  int size = 16;
  double window_m = 32.0;
  int supersample = 4;  // k x k samples per cell; values are coverage fractions

  double cell() const { return window_m / size; }
  std::size_t frame_size() const { return static_cast<std::size_t>(kChannels) * size * size; }
};

/// Index into one rendered frame: [channel][row][col]. Row 0 is the rearmost
/// row of the ego-aligned window, col 0 the leftmost.
inline std::size_t frame_index(const GridSpec& g, int channel, int row, int col) {
  return (static_cast<std::size_t>(channel) * g.size + row) * g.size + col;
}

/// World position of sub-sample (i, j) of cell (row, col) for an ego pose.
inline Vec2 grid_sample_point(const GridSpec& g, const OrientedRect& ego, int row, int col, int i, int j) {
  const double cell = g.cell();
  const double k = g.supersample;
  const double forward = (row + (i + 0.5) / k) * cell - 0.5 * g.window_m;
  const double left = 0.5 * g.window_m - (col + (j + 0.5) / k) * cell;
  return ego.center + unit_from_heading(ego.heading) * forward + left_normal(ego.heading) * left;
}

/// Rasterizes road, ego and surrounding vehicles into an ego-centered,
/// ego-aligned frame. Every value is a coverage fraction in [0, 1].
inline std::vector<float> render_frame(const GridSpec& g, const RoadMap& road, const OrientedRect& ego,
                                       const std::vector<OrientedRect>& others) {
  std::vector<float> frame(g.frame_size(), 0.0f);
  const int k = g.supersample;
  const float per_sample = 1.0f / static_cast<float>(k * k);
  const Vec2 fwd = unit_from_heading(ego.heading);
  const Vec2 lft = left_normal(ego.heading);
  const double half_window = 0.5 * g.window_m;

  for (int row = 0; row < g.size; ++row)
    for (int col = 0; col < g.size; ++col) {
      int road_hits = 0, ego_hits = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const Vec2 p = grid_sample_point(g, ego, row, col, i, j);
          road_hits += road.drivable(p) ? 1 : 0;
          ego_hits += ego.contains(p) ? 1 : 0;
        }
      frame[frame_index(g, kRoad, row, col)] = static_cast<float>(road_hits) * per_sample;
      frame[frame_index(g, kEgo, row, col)] = static_cast<float>(ego_hits) * per_sample;
    }

  // Other vehicles: only the cells under each vehicle's bounding box are visited.
  std::vector<std::uint16_t> hits(static_cast<std::size_t>(g.size) * g.size, 0);
  const double cell = g.cell();
  for (const auto& o : others) {
    double fmin = 1e18, fmax = -1e18, lmin = 1e18, lmax = -1e18;
    for (const Vec2& c : o.corners()) {
      const Vec2 d = c - ego.center;
      fmin = std::min(fmin, d.dot(fwd));
      fmax = std::max(fmax, d.dot(fwd));
      lmin = std::min(lmin, d.dot(lft));
      lmax = std::max(lmax, d.dot(lft));
    }
    if (fmax < -half_window || fmin > half_window || lmax < -half_window || lmin > half_window) continue;
    const int r0 = std::max(0, static_cast<int>(std::floor((fmin + half_window) / cell)));
    const int r1 = std::min(g.size - 1, static_cast<int>(std::floor((fmax + half_window) / cell)));
    const int c0 = std::max(0, static_cast<int>(std::floor((half_window - lmax) / cell)));
    const int c1 = std::min(g.size - 1, static_cast<int>(std::floor((half_window - lmin) / cell)));
    for (int row = r0; row <= r1; ++row)
      for (int col = c0; col <= c1; ++col) {
        std::uint16_t& mask = hits[static_cast<std::size_t>(row) * g.size + col];
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j)
            if (o.contains(grid_sample_point(g, ego, row, col, i, j))) mask |= static_cast<std::uint16_t>(1u << (i * k + j));
      }
  }
  for (int row = 0; row < g.size; ++row)
    for (int col = 0; col < g.size; ++col)
      frame[frame_index(g, kOthers, row, col)] =
          static_cast<float>(std::popcount(hits[static_cast<std::size_t>(row) * g.size + col])) * per_sample;
  return frame;
}

}  // namespace ierl::sim

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace ierl::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  bool operator==(const Vec2&) const = default;
};

inline Vec2 unit_from_heading(double heading) { return {std::cos(heading), std::sin(heading)}; }
/// Left-hand normal of a heading (rotate +90 degrees).
inline Vec2 left_normal(double heading) { return {-std::sin(heading), std::cos(heading)}; }

inline double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

/// Axis-aligned rectangle in world coordinates (m).
struct Box {
  Vec2 min;
  Vec2 max;
  bool contains(Vec2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
};

/// Vehicle footprint: center, heading (rad), length along heading, width across.
struct OrientedRect {
  Vec2 center;
  double heading = 0.0;
  double length = 4.6;
  double width = 1.8;

  std::array<Vec2, 4> corners() const {
    const Vec2 f = unit_from_heading(heading) * (0.5 * length);
    const Vec2 l = left_normal(heading) * (0.5 * width);
    return {center + f + l, center + f - l, center - f - l, center - f + l};
  }

  bool contains(Vec2 p) const {
    const Vec2 d = p - center;
    const double along = d.dot(unit_from_heading(heading));
    const double across = d.dot(left_normal(heading));
    return std::abs(along) <= 0.5 * length && std::abs(across) <= 0.5 * width;
  }
};

/// Separating-axis test for two oriented rectangles (touching counts as overlap).
inline bool overlaps(const OrientedRect& a, const OrientedRect& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes{unit_from_heading(a.heading), left_normal(a.heading), unit_from_heading(b.heading),
                                 left_normal(b.heading)};
  for (const Vec2& axis : axes) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (const Vec2& p : ca) {
      amin = std::min(amin, p.dot(axis));
      amax = std::max(amax, p.dot(axis));
    }
    for (const Vec2& p : cb) {
      bmin = std::min(bmin, p.dot(axis));
      bmax = std::max(bmax, p.dot(axis));
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

/// Point-to-segment distance.
inline double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + ab * t)).norm();
}

/// Piecewise-linear curve parameterized by arc length (station). A closed
/// polyline wraps stations modulo its length.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> points, bool closed = false) : points_(std::move(points)), closed_(closed) {
    if (points_.size() < 2) throw std::invalid_argument("polyline needs at least 2 points");
    if (closed_ && !(points_.front() == points_.back())) points_.push_back(points_.front());
    stations_.assign(points_.size(), 0.0);
    for (std::size_t i = 1; i < points_.size(); ++i)
      stations_[i] = stations_[i - 1] + (points_[i] - points_[i - 1]).norm();
    if (stations_.back() <= 0.0) throw std::invalid_argument("polyline has zero length");
  }

  const std::vector<Vec2>& points() const { return points_; }
  bool closed() const { return closed_; }
  double length() const { return stations_.back(); }

  double normalize_station(double s) const {
    if (closed_) {
      s = std::fmod(s, length());
      if (s < 0.0) s += length();
      return s;
    }
    return std::clamp(s, 0.0, length());
  }

  Vec2 point_at(double s) const {
    const auto [i, t] = locate(s);
    return points_[i] + (points_[i + 1] - points_[i]) * t;
  }

  double heading_at(double s) const {
    const auto [i, t] = locate(s);
    const Vec2 d = points_[i + 1] - points_[i];
    return std::atan2(d.y, d.x);
  }

  struct Projection {
    double station = 0.0;
    double lateral = 0.0;  // signed, positive to the left of travel
    double distance = std::numeric_limits<double>::infinity();
  };

  Projection project(Vec2 p) const {
    Projection best;
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
      const Vec2 a = points_[i];
      const Vec2 ab = points_[i + 1] - a;
      const double len2 = ab.dot(ab);
      if (len2 <= 0.0) continue;
      const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
      const Vec2 q = a + ab * t;
      const double dist = (p - q).norm();
      if (dist < best.distance) {
        best.distance = dist;
        best.station = stations_[i] + t * std::sqrt(len2);
        best.lateral = ab.cross(p - a) / std::sqrt(len2);
      }
    }
    return best;
  }

 private:
  std::pair<std::size_t, double> locate(double s) const {
    s = normalize_station(s);
    auto it = std::upper_bound(stations_.begin(), stations_.end(), s);
    std::size_t i = it == stations_.begin() ? 0 : static_cast<std::size_t>(it - stations_.begin()) - 1;
    i = std::min(i, points_.size() - 2);
    const double seg = stations_[i + 1] - stations_[i];
    return {i, seg > 0.0 ? (s - stations_[i]) / seg : 0.0};
  }

  std::vector<Vec2> points_;
  std::vector<double> stations_;
  bool closed_ = false;
};

/// Lateral offset of a polyline (positive = left of travel), vertex normals
/// averaged between adjacent segments.
inline Polyline offset_polyline(const Polyline& base, double offset) {
  const auto& p = base.points();
  const std::size_t n = p.size();
  std::vector<Vec2> out;
  out.reserve(n);
  auto seg_normal = [&](std::size_t i) {
    const Vec2 d = p[i + 1] - p[i];
    return left_normal(std::atan2(d.y, d.x));
  };
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 nrm;
    if (i == 0) {
      nrm = base.closed() ? seg_normal(0) + seg_normal(n - 2) : seg_normal(0);
    } else if (i == n - 1) {
      nrm = base.closed() ? seg_normal(0) + seg_normal(n - 2) : seg_normal(n - 2);
    } else {
      nrm = seg_normal(i - 1) + seg_normal(i);
    }
    const double len = nrm.norm();
    nrm = len > 0.0 ? nrm * (1.0 / len) : nrm;
    out.push_back(p[i] + nrm * offset);
  }
  if (base.closed()) out.pop_back();
  return Polyline(std::move(out), base.closed());
}

/// Samples a circular arc from angle a0 to a1 (rad, counterclockwise when a1 > a0).
inline std::vector<Vec2> arc_points(Vec2 center, double radius, double a0, double a1, double max_step = 1.0) {
  const int n = std::max(2, static_cast<int>(std::ceil(std::abs(a1 - a0) * radius / max_step)) + 1);
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double a = a0 + (a1 - a0) * static_cast<double>(i) / (n - 1);
    pts.push_back(center + Vec2{std::cos(a), std::sin(a)} * radius);
  }
  return pts;
}

/// Cubic Bezier sampled uniformly in the curve parameter.
inline std::vector<Vec2> bezier_points(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, int samples = 24) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples;
    const double u = 1.0 - t;
    pts.push_back(p0 * (u * u * u) + p1 * (3 * u * u * t) + p2 * (3 * u * t * t) + p3 * (t * t * t));
  }
  return pts;
}

}  // namespace ierl::sim

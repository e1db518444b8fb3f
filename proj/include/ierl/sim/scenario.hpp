#pragma once

#include "ierl/sim/config.hpp"
#include "ierl/sim/geometry.hpp"

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace ierl::sim {

/// A lane driven by environment vehicles. Open lanes spawn at station 0 and
/// despawn at their end; closed lanes (roundabout rings) keep a fixed population.
struct TrafficLane {
  std::string name;
  Polyline center;
  double width = 3.5;
  double speed_scale = 1.0;     // multiplies each actor's desired speed on this lane
  double loop_population = 0;   // vehicles placed on a closed lane at reset
};

/// Where the ego route (lane 0) runs through a traffic lane's band.
struct Conflict {
  std::size_t traffic_lane = 0;
  double route_enter = 0.0;      // first route station inside the band
  double route_exit = 0.0;       // first station back outside (route end for merges)
  double traffic_station = 0.0;  // station on the traffic lane where the route enters it
  bool merge = false;            // route stays in the lane until its end (or leaves along it)
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::LeftTurn;
  /// Ego route as parallel lanes; [0] is the rightmost lane and the station
  /// reference, higher indices are offset to the left by `lane_width` each.
  std::vector<Polyline> route_lanes;
  double lane_width = 3.5;
  Box goal;
  double max_episode_time = 40.0;
  double start_station = 0.0;
  double stop_station = 0.0;  // ego center station for a full stop before the first conflict
  std::vector<TrafficLane> traffic_lanes;
  std::vector<Polyline> extra_road;  // drivable surface not used by any actor
  Box world;
  std::vector<Conflict> conflicts;
};

inline void validate(const ScenarioSpec& s) {
  if (s.route_lanes.empty()) throw ConfigError("scenario has no route lanes");
  for (const auto& l : s.route_lanes)
    if (l.points().size() < 2) throw ConfigError("route lane polyline needs >= 2 points");
  if (s.lane_width <= 0.0) throw ConfigError("lane width must be positive");
  if (s.max_episode_time <= 0.0) throw ConfigError("max episode time must be positive");
  if (!(s.goal.max.x > s.goal.min.x && s.goal.max.y > s.goal.min.y)) throw ConfigError("goal region is empty");
  bool on_route = false;
  for (const auto& lane : s.route_lanes) {
    for (double st = 0.0; st <= lane.length(); st += 0.5)
      if (s.goal.contains(lane.point_at(st))) on_route = true;
  }
  if (!on_route) throw ConfigError("goal region does not lie on a route lane");
  if (s.start_station < 0.0 || s.start_station >= s.route_lanes.front().length())
    throw ConfigError("start station outside the route");
}

inline std::vector<Conflict> compute_conflicts(const ScenarioSpec& s) {
  std::vector<Conflict> out;
  const Polyline& route = s.route_lanes.front();
  constexpr double kStep = 0.25;
  for (std::size_t li = 0; li < s.traffic_lanes.size(); ++li) {
    const auto& lane = s.traffic_lanes[li];
    const double half = 0.5 * lane.width;
    double enter = -1.0;
    double exit = -1.0;
    for (double st = s.start_station; st <= route.length(); st += kStep) {
      const bool inside = lane.center.project(route.point_at(st)).distance < half;
      if (inside && enter < 0.0) enter = st;
      if (!inside && enter >= 0.0) {
        exit = st;
        break;
      }
    }
    if (enter < 0.0) continue;
    Conflict c;
    c.traffic_lane = li;
    c.route_enter = enter;
    c.merge = exit < 0.0 || (exit - enter) > 2.5 * lane.width;
    c.route_exit = exit < 0.0 ? route.length() : exit;
    const double probe = c.merge ? enter : 0.5 * (enter + c.route_exit);
    c.traffic_station = lane.center.project(route.point_at(probe)).station;
    out.push_back(c);
  }
  return out;
}

namespace detail {
inline std::vector<Vec2> concat(std::vector<Vec2> a, const std::vector<Vec2>& b) {
  for (const Vec2& p : b)
    if (a.empty() || (p - a.back()).norm() > 1e-9) a.push_back(p);
  return a;
}
inline Polyline straight(Vec2 a, Vec2 b) { return Polyline({a, b}); }
}  // namespace detail

/// Unprotected left turn from a two-lane minor road (approaching northbound)
/// across a two-way four-lane major road into its rightmost westbound lane.
/// Right-hand traffic; major road along the x axis, lanes 3.5 m wide.
inline ScenarioSpec make_left_turn(const SimConfig& cfg) {
  using detail::concat;
  ScenarioSpec s;
  s.kind = ScenarioKind::LeftTurn;
  s.lane_width = 3.5;
  const double r = 10.0;
  const Vec2 arc_center{1.75 - r, 5.25 - r};
  auto pts = concat({{1.75, -40.0}}, arc_points(arc_center, r, 0.0, std::numbers::pi / 2.0, 0.5));
  pts = concat(pts, {{-60.0, 5.25}});
  s.route_lanes.emplace_back(pts);
  s.goal = {{-38.0, 3.5}, {-30.0, 7.0}};
  s.max_episode_time = cfg.episode_time();
  s.start_station = 15.0;  // ego center at y = -25
  // Ego front 2 m short of the major road edge (y = -7).
  s.stop_station = (-7.0 - 2.0 - 2.3) - (-40.0);
  s.traffic_lanes = {
      {"eastbound_outer", detail::straight({-70.0, -5.25}, {70.0, -5.25}), 3.5, 1.0, 0},
      {"eastbound_inner", detail::straight({-70.0, -1.75}, {70.0, -1.75}), 3.5, 1.0, 0},
      {"westbound_inner", detail::straight({70.0, 1.75}, {-70.0, 1.75}), 3.5, 1.0, 0},
      {"westbound_outer", detail::straight({70.0, 5.25}, {-70.0, 5.25}), 3.5, 1.0, 0},
  };
  s.extra_road = {detail::straight({-1.75, -7.0}, {-1.75, -45.0})};
  s.world = {{-80.0, -50.0}, {80.0, 50.0}};
  s.conflicts = compute_conflicts(s);
  validate(s);
  return s;
}

/// Two-lane counterclockwise roundabout: enter from the south arm, leave by the
/// west arm. Outer ring traffic is slower than the inner ring.
inline ScenarioSpec make_roundabout(const SimConfig& cfg) {
  using detail::concat;
  ScenarioSpec s;
  s.kind = ScenarioKind::Roundabout;
  s.lane_width = 3.5;
  const double pi = std::numbers::pi;
  const double r_outer = 19.25;
  const double r_inner = 15.75;
  const Vec2 c{0.0, 0.0};
  const double a_in = -pi / 3.0;          // merge point on the outer ring
  const double a_out = 5.0 * pi / 6.0;    // diverge point
  const Vec2 p_in = Vec2{std::cos(a_in), std::sin(a_in)} * r_outer;
  const Vec2 t_in = unit_from_heading(a_in + pi / 2.0);
  const Vec2 p_out = Vec2{std::cos(a_out), std::sin(a_out)} * r_outer;
  const Vec2 t_out = unit_from_heading(a_out + pi / 2.0);

  std::vector<Vec2> pts{{5.25, -55.0}};
  pts = concat(pts, bezier_points({5.25, -30.0}, {5.25, -24.0}, p_in - t_in * 6.0, p_in));
  pts = concat(pts, arc_points(c, r_outer, a_in, a_out, 1.0));
  pts = concat(pts, bezier_points(p_out, p_out + t_out * 5.0, {-25.0, 5.25}, {-31.0, 5.25}));
  pts = concat(pts, {{-60.0, 5.25}});
  s.route_lanes.emplace_back(pts);
  s.route_lanes.push_back(offset_polyline(s.route_lanes.front(), s.lane_width));
  s.goal = {{-48.0, 0.0}, {-40.0, 7.0}};
  s.max_episode_time = cfg.episode_time();
  s.start_station = 15.0;  // ego center at y = -40

  const auto ring = [&](double radius) {
    auto ring_pts = arc_points(c, radius, 0.0, 2.0 * pi, 1.0);
    ring_pts.pop_back();
    return Polyline(ring_pts, true);
  };
  s.traffic_lanes = {
      {"ring_outer", ring(r_outer), 3.5, 0.7, 6},
      {"ring_inner", ring(r_inner), 3.5, 1.0, 4},
  };
  // Arms: two lanes each way on every side of the ring (drivable, no actors).
  const double arm_in = 20.0, arm_out = 60.0;
  for (int k = 0; k < 4; ++k) {
    const double ang = k * pi / 2.0 - pi / 2.0;  // south, east, north, west
    const Vec2 dir{std::cos(ang), std::sin(ang)};
    const Vec2 side = left_normal(ang);
    for (double off : {-5.25, -1.75, 1.75, 5.25})
      s.extra_road.push_back(detail::straight(dir * arm_in + side * off, dir * arm_out + side * off));
  }
  s.world = {{-70.0, -70.0}, {70.0, 70.0}};
  s.conflicts = compute_conflicts(s);
  // Ego front 2 m outside the ring's outer edge.
  const Polyline& route = s.route_lanes.front();
  s.stop_station = 0.0;
  for (double st = 0.0; st < route.length(); st += 0.25) {
    if (route.point_at(st).norm() <= 21.0 + 2.0 + 2.3) {
      s.stop_station = st;
      break;
    }
  }
  validate(s);
  return s;
}

inline ScenarioSpec make_scenario(const SimConfig& cfg) {
  return cfg.kind == ScenarioKind::LeftTurn ? make_left_turn(cfg) : make_roundabout(cfg);
}

}  // namespace ierl::sim

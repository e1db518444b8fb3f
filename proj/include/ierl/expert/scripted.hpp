#pragma once

#include "ierl/service/commands.hpp"
#include "ierl/sim/env.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ierl::expert {

enum class Behavior { Conservative, Aggressive, Neutral };

inline const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::Conservative: return "conservative";
    case Behavior::Aggressive: return "aggressive";
    case Behavior::Neutral: return "neutral";
  }
  return "?";
}

inline Behavior behavior_from_string(const std::string& s) {
  if (s == "conservative") return Behavior::Conservative;
  if (s == "aggressive") return Behavior::Aggressive;
  if (s == "neutral") return Behavior::Neutral;
  throw std::invalid_argument("unknown behavior label: " + s);
}

struct ScriptedParams {
  double cruise_speed = 8.0;    // m/s
  double margin_s = 1.0;        // s, time buffer around the ego's pass through a crossing
  double margin_m = 1.5;        // m, extra length of the crossing zone
  double stop_decel = 2.0;      // m/s^2 used to plan the stop before the conflict zone
  bool nudge = true;            // creep into the intersection to make drivers yield

  static ScriptedParams for_behavior(Behavior b) {
    switch (b) {
      case Behavior::Conservative: return {8.0, 1.5, 2.0, 2.0, false};
      case Behavior::Aggressive: return {10.0, 0.6, 1.0, 2.5, true};
      case Behavior::Neutral: break;
    }
    return {};
  }
};

/// Rule-based driver that issues the same discrete commands a human operator
/// would (speed up / slow down by 2 m/s, lane left / right). It only looks at
/// vehicles inside the ego's observation window.
class ScriptedDriver {
 public:
  explicit ScriptedDriver(ScriptedParams p = {}) : p_(p) {}

  void reset() {
    committed_ = false;
    lane_done_ = false;
    waited_ = 0.0;
  }

  /// Commands for this tick given the current world (at most one speed and
  /// one lane command).
  std::vector<service::Command> decide(const sim::TrafficEnv& env, const service::HeldTargets& held) {
    const auto& sc = env.scenario();
    const auto& ego = env.ego();
    const double desired = sc.kind == sim::ScenarioKind::LeftTurn ? desired_left_turn(env) : desired_roundabout(env);

    std::vector<service::Command> out;
    const double want = std::clamp(std::floor(desired / service::kSpeedStep + 1e-9) * service::kSpeedStep, 0.0, 10.0);
    if (want > held.speed + 1e-9) out.push_back(service::Command::SpeedUp);
    if (want < held.speed - 1e-9) out.push_back(service::Command::SlowDown);

    if (sc.kind == sim::ScenarioKind::Roundabout && !lane_done_ && held.lane == sim::LaneCommand::Keep &&
        ego.lane_index == 0 && wants_inner_lane(env)) {
      out.push_back(service::Command::LaneLeft);
      lane_done_ = true;
    }
    return out;
  }

  bool committed() const { return committed_; }

  /// Vehicles whose center lies inside the ego-aligned observation window.
  static std::vector<const sim::EnvVehicle*> visible(const sim::TrafficEnv& env) {
    std::vector<const sim::EnvVehicle*> out;
    const auto& ego = env.ego();
    const double half = 0.5 * env.config().window_m;
    const sim::Vec2 f = sim::unit_from_heading(ego.heading);
    const sim::Vec2 l = sim::left_normal(ego.heading);
    for (const auto& v : env.vehicles()) {
      const sim::Vec2 d = env.vehicle_footprint(v).center - ego.position;
      if (std::abs(d.dot(f)) <= half && std::abs(d.dot(l)) <= half) out.push_back(&v);
    }
    return out;
  }

 private:
  /// Speed that still allows stopping with the front bumper at `station`.
  double stopping_speed(double ego_station, double station) const {
    const double d = station - ego_station;
    if (d <= 0.0) return 0.0;
    return std::sqrt(2.0 * p_.stop_decel * d);
  }

  /// Times (s from now) at which the ego, flooring it from its current state,
  /// enters and clears the crossing of conflict c.
  std::pair<double, double> ego_window(const sim::TrafficEnv& env, const sim::Conflict& c) const {
    const auto& cfg = env.config();
    const auto& ego = env.ego();
    const double enter = c.route_enter - 0.3;
    const double leave = c.merge ? c.route_enter + 6.0 : c.route_exit + 0.3;
    double s = ego.station, v = ego.speed, t = 0.0;
    double t_in = -1.0;
    while (t < 10.0) {
      if (t_in < 0.0 && s + 0.5 * ego.length >= enter) t_in = t;
      if (s - 0.5 * ego.length >= leave) return {std::max(t_in, 0.0), t};
      const double a = std::clamp(cfg.speed_gain * (cfg.max_speed - v), -cfg.ego_accel_limit, cfg.ego_accel_limit);
      v = std::clamp(v + a * cfg.dt, 0.0, cfg.max_speed);
      s += v * cfg.dt;
      t += cfg.dt;
    }
    return {std::max(t_in, 0.0), 10.0};
  }

  /// True when some visible vehicle would occupy the crossing of conflict c
  /// while the ego passes through it.
  bool conflict_blocked(const sim::TrafficEnv& env, const sim::Conflict& c) const {
    const auto& lane = env.scenario().traffic_lanes[c.traffic_lane];
    const auto [t_in, t_out] = ego_window(env, c);
    const double dt = env.config().dt;
    for (const sim::EnvVehicle* v : visible(env)) {
      if (v->lane != c.traffic_lane) continue;
      double d = c.traffic_station - v->station;
      if (lane.center.closed()) {
        d = std::fmod(d, lane.center.length());
        if (d < -0.5 * lane.center.length()) d += lane.center.length();
        if (d > 0.5 * lane.center.length()) d -= lane.center.length();
      }
      const double zone = 2.2 + 0.5 * v->length + p_.margin_m;
      if (d < -zone) continue;  // already past
      // Constant-acceleration forecast (no speeding up beyond mild acceleration).
      const double acc = std::min(v->accel, 0.5);
      double pos = 0.0, spd = v->speed, t = 0.0, t_arr = -1.0, t_leave = -1.0;
      const double horizon = t_out + p_.margin_s;
      while (t <= horizon) {
        if (t_arr < 0.0 && d - pos <= zone) t_arr = t;
        if (d - pos < -zone) {
          t_leave = t;
          break;
        }
        spd = std::clamp(spd + acc * dt, 0.0, 10.0);
        pos += spd * dt;
        t += dt;
      }
      if (t_arr < 0.0) continue;  // does not reach the crossing in time
      if (t_leave < 0.0) t_leave = std::numeric_limits<double>::infinity();
      if (t_arr - p_.margin_s < t_out && t_leave + p_.margin_s > t_in) return true;
    }
    return false;
  }

  double first_enter(const sim::ScenarioSpec& sc) const {
    double e = std::numeric_limits<double>::infinity();
    for (const auto& c : sc.conflicts) e = std::min(e, c.route_enter);
    return e;
  }

  /// Approach, stop at the line, creep up to the lane edge so cooperative
  /// drivers can yield, and go once every crossing is clear.
  double desired_crossing(const sim::TrafficEnv& env) {
    const auto& sc = env.scenario();
    const auto& ego = env.ego();
    const double front = env.ego_front_station();
    if (committed_) return -1.0;
    bool blocked = false;
    for (const auto& c : sc.conflicts)
      if (conflict_blocked(env, c)) blocked = true;
    const double stop_front = sc.stop_station + 0.5 * ego.length;
    if (!blocked && front >= stop_front - 6.0 && ego.speed <= 6.0) {
      committed_ = true;
      return -1.0;
    }
    if (front < stop_front - 0.5) return std::min(p_.cruise_speed, stopping_speed(front, stop_front));
    if (ego.speed < 0.3) waited_ += 0.1;
    if (waited_ < 1.0 || !p_.nudge) return 0.0;
    return front < first_enter(sc) - 1.2 ? 2.0 : 0.0;
  }

  double desired_left_turn(const sim::TrafficEnv& env) {
    const double d = desired_crossing(env);
    if (d >= 0.0) return d;
    return follow_leader(env, 10.0);
  }

  double desired_roundabout(const sim::TrafficEnv& env) {
    if (const double d = desired_crossing(env); d >= 0.0) return d;
    return follow_leader(env, p_.cruise_speed);
  }

  static double follow_speed(double leader_speed, double gap) {
    const double linear = leader_speed + 0.5 * (gap - 6.0);
    const double braking = std::sqrt(std::max(0.0, leader_speed * leader_speed + 5.0 * (gap - 5.0)));
    return std::max(0.0, std::min(linear, braking));
  }

  /// Caps the speed behind the nearest visible vehicle in the ego's path:
  /// straight ahead in the ego frame, or ahead along a lane the route merges into.
  double follow_leader(const sim::TrafficEnv& env, double limit) const {
    const auto& ego = env.ego();
    const sim::Vec2 fwd = sim::unit_from_heading(ego.heading);
    const sim::Vec2 lft = sim::left_normal(ego.heading);
    const auto seen = visible(env);
    for (const sim::EnvVehicle* v : seen) {
      const sim::Vec2 d = env.vehicle_footprint(*v).center - ego.position;
      const double along = d.dot(fwd);
      if (along <= 0.0 || std::abs(d.dot(lft)) > 2.2) continue;
      limit = std::min(limit, follow_speed(v->speed, along - 0.5 * (ego.length + v->length)));
    }
    for (const auto& c : env.scenario().conflicts) {
      if (!c.merge || ego.station < c.route_enter - 15.0) continue;
      const auto& lane = env.scenario().traffic_lanes[c.traffic_lane].center;
      const double ego_s = c.traffic_station + (ego.station - c.route_enter);
      for (const sim::EnvVehicle* v : seen) {
        if (v->lane != c.traffic_lane) continue;
        double ahead = v->station - ego_s;
        if (lane.closed()) {
          ahead = std::fmod(ahead, lane.length());
          if (ahead < 0.0) ahead += lane.length();
          if (ahead > 0.5 * lane.length()) continue;
        }
        if (ahead <= 0.0) continue;
        // Vehicles still upstream of the merge point are crossing traffic, not leaders.
        double past_merge = v->station - c.traffic_station;
        if (lane.closed()) past_merge = std::remainder(past_merge, lane.length());
        if (past_merge < -2.0) continue;
        limit = std::min(limit, follow_speed(v->speed, ahead - 0.5 * (ego.length + v->length)));
      }
    }
    return limit;
  }

  /// Inner ring is faster; move over once in the ring with a clear gap.
  bool wants_inner_lane(const sim::TrafficEnv& env) const {
    if (!committed_) return false;
    const auto& sc = env.scenario();
    const auto& ego = env.ego();
    if (ego.position.norm() > 20.5) return false;  // not yet on the ring
    if (sc.traffic_lanes.size() < 2) return false;
    const auto& inner = sc.traffic_lanes[1].center;
    const double s_ego = inner.project(ego.position).station;
    for (const sim::EnvVehicle* v : visible(env)) {
      if (v->lane != 1) continue;
      double d = v->station - s_ego;
      d = std::fmod(d, inner.length());
      if (d < -0.5 * inner.length()) d += inner.length();
      if (d > 0.5 * inner.length()) d -= inner.length();
      if (d > -12.0 && d < 10.0) return false;
    }
    return true;
  }

  ScriptedParams p_;
  bool committed_ = false;
  bool lane_done_ = false;
  double waited_ = 0.0;
};

struct ScriptedEpisode {
  std::vector<std::vector<float>> states;
  std::vector<sim::Action> actions;
  sim::Outcome outcome = sim::Outcome::Running;
  int ticks = 0;
};

/// Runs one episode with the scripted driver; every tick records the
/// observation the driver acted on and the translated action.
inline ScriptedEpisode run_scripted_episode(sim::TrafficEnv& env, const sim::TrafficFlow& flow, std::uint64_t episode,
                                            ScriptedDriver driver) {
  ScriptedEpisode ep;
  env.reset(flow, episode);
  driver.reset();
  service::HeldTargets held;
  while (!env.done()) {
    for (service::Command c : driver.decide(env, held)) service::apply_command(held, c, env.ego(), env.config().max_speed);
    const sim::Action a = service::translate_command(held, env.config().max_speed);
    ep.states.push_back(env.observation().values);
    ep.actions.push_back(a);
    env.step(a);
    service::release_lane_latch(held, env.ego());
  }
  ep.outcome = env.outcome();
  ep.ticks = env.tick();
  return ep;
}

}  // namespace ierl::expert

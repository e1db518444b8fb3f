#pragma once

#include "ierl/sim/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace ierl::sim {

struct IdmParams {
  double desired_speed = 10.0;  // m/s
  double time_headway = 1.5;    // s
  double max_accel = 2.0;       // m/s^2
  double max_decel = 6.0;       // m/s^2, hard clamp
  double min_gap = 2.0;         // m, jam distance
  double exponent = 4.0;

  double comfortable_decel() const { return 0.5 * max_decel; }
};

/// Intelligent Driver Model acceleration, clamped to [-max_decel, max_accel].
/// `gap` is bumper-to-bumper distance to the leader; pass +infinity for a
/// free road. A non-positive gap yields the emergency clamp.
inline double idm_follow(double gap, double speed, double lead_speed, const IdmParams& p) {
  if (!(gap > 0.0)) return -p.max_decel;
  const double v0 = std::max(p.desired_speed, 0.1);
  const double free_term = std::pow(std::max(speed, 0.0) / v0, p.exponent);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double dv = speed - lead_speed;
    const double s_star =
        p.min_gap + std::max(0.0, speed * p.time_headway + speed * dv / (2.0 * std::sqrt(p.max_accel * p.comfortable_decel())));
    interaction = (s_star / gap) * (s_star / gap);
  }
  const double a = p.max_accel * (1.0 - free_term - interaction);
  return std::clamp(a, -p.max_decel, p.max_accel);
}

/// One driver archetype inside a traffic flow.
struct ActorType {
  IdmParams idm;
  double impatience = 0.0;   // [0,1]; impatient drivers abandon a yield sooner
  double cooperation = 0.0;  // [0,1]; probability of yielding to an intruding ego
  double weight = 1.0;       // relative share of spawned vehicles

  /// Seconds a yielding driver waits at standstill before pushing on.
  double patience_s() const { return 1.0 + 9.0 * (1.0 - impatience); }
};

/// A seeded mix of actor types plus the arrival intensity; the same seed
/// always reproduces the same flow.
struct TrafficFlow {
  std::uint64_t seed = 0;
  std::vector<ActorType> actors;
  double arrival_rate = 0.3;  // vehicles per second per entry lane
};

inline double draw(std::mt19937_64& rng, const ParamRange& r) {
  if (r.max <= r.min) return r.min;
  return std::uniform_real_distribution<double>(r.min, r.max)(rng);
}

inline TrafficFlow make_flow(std::uint64_t seed, const TrafficBounds& bounds) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x1234567ULL);
  TrafficFlow flow;
  flow.seed = seed;
  for (int k = 0; k < bounds.actor_types; ++k) {
    ActorType a;
    a.idm.desired_speed = draw(rng, bounds.desired_speed);
    a.idm.time_headway = draw(rng, bounds.time_headway);
    a.idm.max_accel = draw(rng, bounds.max_accel);
    a.idm.max_decel = draw(rng, bounds.max_decel);
    a.impatience = draw(rng, bounds.impatience);
    a.cooperation = draw(rng, bounds.cooperation);
    a.weight = draw(rng, {0.5, 1.5});
    flow.actors.push_back(a);
  }
  flow.arrival_rate = draw(rng, bounds.arrival_rate);
  return flow;
}

/// Flows for a seed range, e.g. the 20 training or 50 testing flows.
inline std::vector<TrafficFlow> make_flows(const SeedRange& range, const TrafficBounds& bounds) {
  std::vector<TrafficFlow> flows;
  for (std::uint64_t i = 0; i < range.count; ++i) flows.push_back(make_flow(range.first + i, bounds));
  return flows;
}

struct EnvVehicle {
  int id = 0;
  std::size_t lane = 0;
  std::size_t actor = 0;
  double station = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  double length = 4.6;
  double width = 1.8;
  bool cooperative = false;  // drawn once per vehicle from the actor's cooperation
  bool yielding = false;
  double waited_s = 0.0;     // time spent yielding at (near) standstill
};

}  // namespace ierl::sim

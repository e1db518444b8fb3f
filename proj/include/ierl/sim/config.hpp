#pragma once

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ierl::sim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ScenarioKind { LeftTurn, Roundabout };

inline const char* to_string(ScenarioKind k) { return k == ScenarioKind::LeftTurn ? "left_turn" : "roundabout"; }

inline ScenarioKind scenario_from_string(const std::string& s) {
  if (s == "left_turn" || s == "LeftTurn") return ScenarioKind::LeftTurn;
  if (s == "roundabout" || s == "Roundabout") return ScenarioKind::Roundabout;
  throw ConfigError("unknown scenario kind: " + s);
}

struct ParamRange {
  double min = 0.0;
  double max = 0.0;
};

/// Bounds from which each traffic flow draws its actor types.
struct TrafficBounds {
  ParamRange desired_speed{5.0, 8.0};  // m/s
  ParamRange time_headway{0.8, 1.8};    // s
  ParamRange max_accel{1.5, 3.0};       // m/s^2
  ParamRange max_decel{4.0, 7.0};       // m/s^2, hard clamp; comfortable braking is half of it
  ParamRange impatience{0.0, 1.0};
  ParamRange cooperation{0.7, 1.0};
  ParamRange arrival_rate{0.22, 0.38};  // vehicles per second per entry lane
  int actor_types = 3;
};

struct SeedRange {
  std::uint64_t first = 0;
  std::uint64_t count = 0;
};

struct SimConfig {
  ScenarioKind kind = ScenarioKind::LeftTurn;
  int grid_size = 16;
  double window_m = 32.0;
  double dt = 0.1;
  double max_time_s = 0.0;  // <= 0: scenario default (40 s left turn, 60 s roundabout)
  double max_speed = 10.0;
  double ego_accel_limit = 4.0;
  double speed_gain = 2.0;  // 1/s, first-order tracking of the target speed
  double lane_change_duration = 1.0;
  SeedRange train_seeds{1000, 20};
  SeedRange test_seeds{5000, 50};
  TrafficBounds traffic{};

  double cell_m() const { return window_m / grid_size; }
  double episode_time() const {
    if (max_time_s > 0.0) return max_time_s;
    return kind == ScenarioKind::LeftTurn ? 40.0 : 60.0;
  }
  int max_ticks() const { return static_cast<int>(std::lround(episode_time() / dt)); }
};

inline void validate(const SimConfig& c) {
  if (c.grid_size <= 0) throw ConfigError("grid.size must be positive");
  if (c.window_m <= 0.0) throw ConfigError("window.meters must be positive");
  if (c.dt <= 0.0) throw ConfigError("sim.dt must be positive");
  if (c.lane_change_duration <= 0.0) throw ConfigError("lane change duration must be positive");
  const bool overlap = c.train_seeds.first < c.test_seeds.first + c.test_seeds.count &&
                       c.test_seeds.first < c.train_seeds.first + c.train_seeds.count;
  if (overlap) throw ConfigError("training and testing seed ranges must be disjoint");
  auto check = [](const ParamRange& r, const char* name) {
    if (r.max < r.min) throw ConfigError(std::string("inverted bounds for traffic.param_bounds.") + name);
  };
  check(c.traffic.desired_speed, "desired_speed");
  check(c.traffic.time_headway, "time_headway");
  check(c.traffic.max_accel, "max_accel");
  check(c.traffic.max_decel, "max_decel");
  check(c.traffic.impatience, "impatience");
  check(c.traffic.cooperation, "cooperation");
  check(c.traffic.arrival_rate, "arrival_rate");
  if (c.traffic.actor_types < 1) throw ConfigError("traffic.param_bounds.actor_types must be >= 1");
}

namespace detail {
inline void range_from_json(const nlohmann::json& j, const char* key, ParamRange& r) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) throw ConfigError(std::string("expected [min, max] for ") + key);
  r = {v[0].get<double>(), v[1].get<double>()};
}
inline nlohmann::json range_to_json(const ParamRange& r) { return nlohmann::json::array({r.min, r.max}); }
}  // namespace detail

/// Reads the documented keys: scenario.kind, grid.size, window.meters,
/// traffic.seed_range {train:[first,count], test:[first,count]},
/// traffic.param_bounds {...}, episode.max_time_s, sim.dt. Missing keys keep defaults.
inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  try {
    if (j.contains("scenario")) c.kind = scenario_from_string(j["scenario"].value("kind", std::string("left_turn")));
    if (j.contains("grid")) c.grid_size = j["grid"].value("size", c.grid_size);
    if (j.contains("window")) c.window_m = j["window"].value("meters", c.window_m);
    if (j.contains("episode")) c.max_time_s = j["episode"].value("max_time_s", c.max_time_s);
    if (j.contains("sim")) {
      const auto& s = j["sim"];
      c.dt = s.value("dt", c.dt);
      c.max_speed = s.value("max_speed", c.max_speed);
      c.ego_accel_limit = s.value("ego_accel_limit", c.ego_accel_limit);
      c.speed_gain = s.value("speed_gain", c.speed_gain);
      c.lane_change_duration = s.value("lane_change_duration", c.lane_change_duration);
    }
    if (j.contains("traffic")) {
      const auto& t = j["traffic"];
      if (t.contains("seed_range")) {
        const auto& sr = t["seed_range"];
        if (sr.contains("train")) c.train_seeds = {sr["train"][0].get<std::uint64_t>(), sr["train"][1].get<std::uint64_t>()};
        if (sr.contains("test")) c.test_seeds = {sr["test"][0].get<std::uint64_t>(), sr["test"][1].get<std::uint64_t>()};
      }
      if (t.contains("param_bounds")) {
        const auto& b = t["param_bounds"];
        detail::range_from_json(b, "desired_speed", c.traffic.desired_speed);
        detail::range_from_json(b, "time_headway", c.traffic.time_headway);
        detail::range_from_json(b, "max_accel", c.traffic.max_accel);
        detail::range_from_json(b, "max_decel", c.traffic.max_decel);
        detail::range_from_json(b, "impatience", c.traffic.impatience);
        detail::range_from_json(b, "cooperation", c.traffic.cooperation);
        detail::range_from_json(b, "arrival_rate", c.traffic.arrival_rate);
        c.traffic.actor_types = b.value("actor_types", c.traffic.actor_types);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed simulator config: ") + e.what());
  }
  validate(c);
  return c;
}

inline nlohmann::json to_json(const SimConfig& c) {
  using detail::range_to_json;
  return {
      {"scenario", {{"kind", to_string(c.kind)}}},
      {"grid", {{"size", c.grid_size}}},
      {"window", {{"meters", c.window_m}}},
      {"episode", {{"max_time_s", c.episode_time()}}},
      {"sim",
       {{"dt", c.dt},
        {"max_speed", c.max_speed},
        {"ego_accel_limit", c.ego_accel_limit},
        {"speed_gain", c.speed_gain},
        {"lane_change_duration", c.lane_change_duration}}},
      {"traffic",
       {{"seed_range",
         {{"train", {c.train_seeds.first, c.train_seeds.count}}, {"test", {c.test_seeds.first, c.test_seeds.count}}}},
        {"param_bounds",
         {{"desired_speed", range_to_json(c.traffic.desired_speed)},
          {"time_headway", range_to_json(c.traffic.time_headway)},
          {"max_accel", range_to_json(c.traffic.max_accel)},
          {"max_decel", range_to_json(c.traffic.max_decel)},
          {"impatience", range_to_json(c.traffic.impatience)},
          {"cooperation", range_to_json(c.traffic.cooperation)},
          {"arrival_rate", range_to_json(c.traffic.arrival_rate)},
          {"actor_types", c.traffic.actor_types}}}}},
  };
}

}  // namespace ierl::sim

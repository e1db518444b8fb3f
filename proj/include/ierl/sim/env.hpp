#pragma once

#include "ierl/sim/config.hpp"
#include "ierl/sim/geometry.hpp"
#include "ierl/sim/render.hpp"
#include "ierl/sim/scenario.hpp"
#include "ierl/sim/traffic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ierl::sim {

/// Raised for lifecycle misuse such as stepping a finished episode.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Outcome { Running, GoalReached, Collision, OffRoad, Timeout };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Running: return "running";
    case Outcome::GoalReached: return "goal_reached";
    case Outcome::Collision: return "collision";
    case Outcome::OffRoad: return "off_road";
    case Outcome::Timeout: return "timeout";
  }
  return "?";
}

inline Outcome outcome_from_string(const std::string& s) {
  for (Outcome o : {Outcome::Running, Outcome::GoalReached, Outcome::Collision, Outcome::OffRoad, Outcome::Timeout})
    if (s == to_string(o)) return o;
  throw std::invalid_argument("unknown outcome: " + s);
}

/// True for outcomes that end the episode for real (not a horizon cut).
inline bool is_terminal_state(Outcome o) {
  return o == Outcome::GoalReached || o == Outcome::Collision || o == Outcome::OffRoad;
}

/// Normalized agent action: v_norm maps affinely to a target speed in
/// [0, max_speed]; l_norm is binned into left / keep / right.
struct Action {
  double v_norm = -1.0;
  double l_norm = 0.0;
};

enum class LaneCommand : int { Left = -1, Keep = 0, Right = 1 };

/// [-1, -1/3) left, [-1/3, 1/3] keep, (1/3, 1] right; the shared endpoints
/// belong to the keep bin.
inline LaneCommand lane_bin(double l_norm) {
  if (l_norm < -1.0 / 3.0) return LaneCommand::Left;
  if (l_norm > 1.0 / 3.0) return LaneCommand::Right;
  return LaneCommand::Keep;
}

inline double target_speed_from(double v_norm, double max_speed) {
  return 0.5 * (std::clamp(v_norm, -1.0, 1.0) + 1.0) * max_speed;
}

enum class RewardMode { Sparse, Shaped };

inline const char* to_string(RewardMode m) { return m == RewardMode::Sparse ? "sparse" : "shaped"; }

/// +1 at the goal, -1 on collision or leaving the road, 0 otherwise (timeouts included).
inline double sparse_reward(Outcome o) {
  switch (o) {
    case Outcome::GoalReached: return 1.0;
    case Outcome::Collision:
    case Outcome::OffRoad: return -1.0;
    default: return 0.0;
  }
}

inline double shaped_reward(Outcome o, double speed) {
  if (speed < 0.0) throw std::invalid_argument("shaped_reward: negative speed");
  return 0.001 * speed + sparse_reward(o);
}

struct EgoState {
  double station = 0.0;  // along route lane 0
  double speed = 0.0;
  double accel = 0.0;
  double target_speed = 0.0;
  int lane_index = 0;
  double lane_change_progress = 0.0;
  int change_direction = 0;  // +1 toward higher lane index (left), -1 right, 0 none
  int change_ticks = 0;
  double length = 4.6;
  double width = 1.8;
  Vec2 position;
  double heading = 0.0;
  double curvature = 0.0;

  OrientedRect footprint() const { return {position, heading, length, width}; }
};

/// Stacked ego-centric occupancy grid, layout [frame][channel][row][col] with
/// frame 0 the oldest and frame kFrames-1 the current one.
struct Observation {
  int grid = 16;
  std::vector<float> values;

  static constexpr int channels = kChannels;
  static constexpr int frames = kFrames;

  std::size_t frame_size() const { return static_cast<std::size_t>(channels) * grid * grid; }
  float at(int frame, int channel, int row, int col) const {
    return values[frame * frame_size() + (static_cast<std::size_t>(channel) * grid + row) * grid + col];
  }
  bool operator==(const Observation&) const = default;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Outcome outcome = Outcome::Running;
};

struct TraceRow {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  double curvature = 0.0;
  int lane = 0;
};

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t,x,y,speed,accel,curvature,lane\n" << std::setprecision(9);
  for (const auto& r : rows)
    out << r.t << ',' << r.x << ',' << r.y << ',' << r.speed << ',' << r.accel << ',' << r.curvature << ',' << r.lane
        << '\n';
}

/// Deterministic 2D driving environment: kinematic lane-following ego,
/// IDM environment vehicles with probabilistic yielding, ego-centric grids.
class TrafficEnv {
 public:
  static constexpr double kAnticipation = 1.0;  // s

  explicit TrafficEnv(SimConfig config) : TrafficEnv(config, make_scenario(config)) {}

  TrafficEnv(SimConfig config, ScenarioSpec scenario)
      : config_(config), scenario_(std::make_shared<const ScenarioSpec>(std::move(scenario))) {
    validate(config_);
    validate(*scenario_);
    road_ = std::make_shared<const RoadMap>(*scenario_);
    grid_ = {config_.grid_size, config_.window_m, 4};
  }

  const SimConfig& config() const { return config_; }
  const ScenarioSpec& scenario() const { return *scenario_; }
  const RoadMap& road() const { return *road_; }
  const GridSpec& grid() const { return grid_; }
  const EgoState& ego() const { return ego_; }
  const std::vector<EnvVehicle>& vehicles() const { return vehicles_; }
  const TrafficFlow& flow() const { return flow_; }
  int tick() const { return tick_; }
  double time() const { return tick_ * config_.dt; }
  Outcome outcome() const { return outcome_; }
  bool done() const { return outcome_ != Outcome::Running; }
  bool active() const { return started_ && !done(); }
  const Observation& observation() const { return observation_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  std::size_t observation_size() const { return static_cast<std::size_t>(kFrames) * grid_.frame_size(); }

  RewardMode reward_mode() const { return reward_mode_; }
  void set_reward_mode(RewardMode m) { reward_mode_ = m; }

  OrientedRect vehicle_footprint(const EnvVehicle& v) const {
    const auto& lane = scenario_->traffic_lanes[v.lane].center;
    return {lane.point_at(v.station), lane.heading_at(v.station), v.length, v.width};
  }

  std::vector<OrientedRect> vehicle_footprints() const {
    std::vector<OrientedRect> out;
    out.reserve(vehicles_.size());
    for (const auto& v : vehicles_) out.push_back(vehicle_footprint(v));
    return out;
  }

  /// Starts an episode. The flow fixes the actor mix; `episode` seeds the
  /// per-episode initial conditions (spawn positions, spawn timing).
  const Observation& reset(const TrafficFlow& flow, std::uint64_t episode = 0) {
    if (flow.actors.empty()) throw ConfigError("traffic flow has no actor types");
    flow_ = flow;
    rng_.seed(flow.seed * 0x100000001B3ULL ^ (episode + 1) * 0x9E3779B97F4A7C15ULL);
    tick_ = 0;
    next_id_ = 0;
    outcome_ = Outcome::Running;
    started_ = true;
    trace_.clear();
    vehicles_.clear();

    ego_ = EgoState{};
    ego_.station = scenario_->start_station;
    update_ego_pose();

    const double t0 = 0.0;
    next_spawn_.assign(scenario_->traffic_lanes.size(), t0);
    for (std::size_t li = 0; li < scenario_->traffic_lanes.size(); ++li) populate_lane(li);
    // Keep the ego's own footprint free at spawn.
    const OrientedRect ego_rect = ego_.footprint();
    std::erase_if(vehicles_, [&](const EnvVehicle& v) {
      OrientedRect r = vehicle_footprint(v);
      r.length += 6.0;
      r.width += 2.0;
      return overlaps(r, ego_rect);
    });

    const std::vector<float> frame = render_current();
    frames_.assign(kFrames, frame);
    rebuild_observation();
    record_trace();
    return observation_;
  }

  StepResult step(const Action& action) {
    if (!started_) throw ProtocolError("step() before reset()");
    if (done()) throw ProtocolError("step() after the episode finished");
    const double dt = config_.dt;

    // Environment vehicles react to the world as it is at the start of the tick.
    std::vector<double> accels(vehicles_.size());
    for (std::size_t i = 0; i < vehicles_.size(); ++i) accels[i] = vehicle_accel(vehicles_[i]);

    // Ego longitudinal: first-order tracking of the target speed.
    ego_.target_speed = target_speed_from(action.v_norm, config_.max_speed);
    const double a = std::clamp(config_.speed_gain * (ego_.target_speed - ego_.speed), -config_.ego_accel_limit,
                                config_.ego_accel_limit);
    const double new_speed = std::clamp(ego_.speed + a * dt, 0.0, config_.max_speed);
    ego_.accel = (new_speed - ego_.speed) / dt;
    ego_.speed = new_speed;
    ego_.station += ego_.speed * dt;

    // Lateral: the change bin must be held on consecutive ticks.
    bool left_route = false;
    const LaneCommand cmd = lane_bin(action.l_norm);
    const int needed = std::max(1, static_cast<int>(std::lround(config_.lane_change_duration / dt)));
    if (cmd == LaneCommand::Keep) {
      ego_.change_direction = 0;
      ego_.change_ticks = 0;
    } else {
      const int dir = cmd == LaneCommand::Left ? 1 : -1;
      if (dir != ego_.change_direction) {
        ego_.change_direction = dir;
        ego_.change_ticks = 0;
      }
      ++ego_.change_ticks;
      if (ego_.change_ticks >= needed) {
        const int target = ego_.lane_index + dir;
        ego_.change_direction = 0;
        ego_.change_ticks = 0;
        if (target < 0 || target >= static_cast<int>(scenario_->route_lanes.size()))
          left_route = true;
        else
          ego_.lane_index = target;
      }
    }
    ego_.lane_change_progress = static_cast<double>(ego_.change_ticks) / needed;
    const double prev_heading = ego_.heading;
    const Vec2 prev_pos = ego_.position;
    update_ego_pose();
    const double travelled = (ego_.position - prev_pos).norm();
    ego_.curvature = travelled > 1e-6 ? wrap_angle(ego_.heading - prev_heading) / travelled : 0.0;

    for (std::size_t i = 0; i < vehicles_.size(); ++i) advance_vehicle(vehicles_[i], accels[i]);
    ++tick_;
    despawn_and_spawn();

    outcome_ = detect_outcome(left_route);
    frames_.pop_front();
    frames_.push_back(render_current());
    rebuild_observation();
    record_trace();

    StepResult r;
    r.observation = observation_;
    r.outcome = outcome_;
    r.done = done();
    r.reward = reward_mode_ == RewardMode::Sparse ? sparse_reward(outcome_) : shaped_reward(outcome_, ego_.speed);
    return r;
  }

  std::vector<float> render_current() const { return render_frame(grid_, *road_, ego_.footprint(), vehicle_footprints()); }

  /// Route station of the ego's front bumper.
  double ego_front_station() const { return ego_.station + 0.5 * ego_.length; }

  /// Whether vehicles on the conflict's lane treat the ego as intruding: it
  /// has nosed into the intersection and has not yet cleared that lane.
  bool ego_intrudes(const Conflict& c) const {
    double first_enter = c.route_enter;
    for (const auto& o : scenario_->conflicts) first_enter = std::min(first_enter, o.route_enter);
    const double front = ego_.station + 0.5 * ego_.length;
    const double rear = ego_.station - 0.5 * ego_.length;
    if (front < first_enter - 1.0) return false;
    if (c.merge) return rear <= c.route_enter + 2.0;
    return rear <= c.route_exit;
  }

 private:
  void update_ego_pose() {
    const Polyline& ref = scenario_->route_lanes.front();
    const double s = ref.normalize_station(ego_.station);
    const double heading = ref.heading_at(s);
    const double lateral =
        scenario_->lane_width * (ego_.lane_index + ego_.change_direction * ego_.lane_change_progress);
    Vec2 base = ref.point_at(s);
    if (ego_.lane_index > 0 && ego_.lane_index < static_cast<int>(scenario_->route_lanes.size())) {
      // Follow the stored lane polyline so the ego stays on its lane's corridor.
      const Polyline& lane = scenario_->route_lanes[static_cast<std::size_t>(ego_.lane_index)];
      const double ls = s * lane.length() / ref.length();
      base = lane.point_at(ls);
      const double extra = scenario_->lane_width * ego_.change_direction * ego_.lane_change_progress;
      ego_.position = base + left_normal(lane.heading_at(ls)) * extra;
      ego_.heading = lane.heading_at(ls);
      return;
    }
    ego_.position = base + left_normal(heading) * lateral;
    ego_.heading = heading;
  }

  void rebuild_observation() {
    observation_.grid = grid_.size;
    observation_.values.clear();
    observation_.values.reserve(observation_size());
    for (const auto& f : frames_) observation_.values.insert(observation_.values.end(), f.begin(), f.end());
  }

  void record_trace() {
    trace_.push_back({time(), ego_.position.x, ego_.position.y, ego_.speed, ego_.accel, ego_.curvature, ego_.lane_index});
  }

  std::size_t pick_actor() {
    double total = 0.0;
    for (const auto& a : flow_.actors) total += a.weight;
    double u = std::uniform_real_distribution<double>(0.0, total)(rng_);
    for (std::size_t i = 0; i < flow_.actors.size(); ++i) {
      u -= flow_.actors[i].weight;
      if (u <= 0.0) return i;
    }
    return flow_.actors.size() - 1;
  }

  EnvVehicle new_vehicle(std::size_t lane, double station) {
    EnvVehicle v;
    v.id = next_id_++;
    v.lane = lane;
    v.actor = pick_actor();
    v.station = station;
    const auto& actor = flow_.actors[v.actor];
    v.speed = desired_speed(v) * std::uniform_real_distribution<double>(0.85, 1.0)(rng_);
    v.cooperative = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < actor.cooperation;
    return v;
  }

  double desired_speed(const EnvVehicle& v) const {
    return flow_.actors[v.actor].idm.desired_speed * scenario_->traffic_lanes[v.lane].speed_scale;
  }

  double exp_interval() {
    return std::exponential_distribution<double>(std::max(flow_.arrival_rate, 1e-6))(rng_);
  }

  void populate_lane(std::size_t li) {
    const TrafficLane& lane = scenario_->traffic_lanes[li];
    if (lane.center.closed()) {
      const int n = static_cast<int>(lane.loop_population);
      if (n <= 0) return;
      const double spacing = lane.center.length() / n;
      const double phase = std::uniform_real_distribution<double>(0.0, spacing)(rng_);
      for (int k = 0; k < n; ++k) {
        const double jitter = std::uniform_real_distribution<double>(-0.25, 0.25)(rng_) * spacing;
        vehicles_.push_back(new_vehicle(li, lane.center.normalize_station(phase + k * spacing + jitter)));
      }
      return;
    }
    // Open lane: Poisson arrivals laid out along the lane at their travel speed.
    double s = lane.center.length() - std::uniform_real_distribution<double>(0.0, 10.0)(rng_);
    while (s > 0.0) {
      EnvVehicle v = new_vehicle(li, s);
      const double spacing = std::max(v.length + 6.0, v.speed * exp_interval());
      vehicles_.push_back(v);
      s -= spacing;
    }
    next_spawn_[li] = exp_interval();
  }

  void despawn_and_spawn() {
    std::erase_if(vehicles_, [&](const EnvVehicle& v) {
      const auto& lane = scenario_->traffic_lanes[v.lane].center;
      return !lane.closed() && v.station > lane.length();
    });
    for (std::size_t li = 0; li < scenario_->traffic_lanes.size(); ++li) {
      const TrafficLane& lane = scenario_->traffic_lanes[li];
      if (lane.center.closed() || time() < next_spawn_[li]) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (const auto& v : vehicles_)
        if (v.lane == li) nearest = std::min(nearest, v.station - 0.5 * v.length);
      if (nearest < 10.0) continue;  // entry blocked, retry next tick
      EnvVehicle v = new_vehicle(li, 0.0);
      vehicles_.push_back(v);
      next_spawn_[li] = time() + exp_interval();
    }
  }

  /// Forward distance along a lane from `from` to `to` (wraps on closed lanes).
  static double ahead_distance(const Polyline& lane, double from, double to) {
    double d = to - from;
    if (lane.closed()) {
      d = std::fmod(d, lane.length());
      if (d < 0.0) d += lane.length();
    }
    return d;
  }

  double vehicle_accel(EnvVehicle& v) {
    const TrafficLane& lane = scenario_->traffic_lanes[v.lane];
    const ActorType& actor = flow_.actors[v.actor];
    IdmParams p = actor.idm;
    p.desired_speed = desired_speed(v);

    // Leader on the same lane.
    double gap = std::numeric_limits<double>::infinity();
    double lead_speed = 0.0;
    for (const auto& o : vehicles_) {
      if (o.id == v.id || o.lane != v.lane) continue;
      const double d = ahead_distance(lane.center, v.station, o.station);
      if (!lane.center.closed() && d <= 0.0) continue;
      const double g = d - 0.5 * (v.length + o.length);
      if (g < gap) {
        gap = g;
        lead_speed = o.speed;
      }
    }
    double a = idm_follow(gap, v.speed, lead_speed, p);

    // The ego as an obstacle when any part of it sits in this lane ahead.
    if (const double ego_gap = ego_gap_on_lane(v); std::isfinite(ego_gap)) {
      const double along = std::cos(ego_.heading - lane.center.heading_at(v.station));
      a = std::min(a, idm_follow(ego_gap, v.speed, std::max(0.0, ego_.speed * along), p));
    }

    // Yielding to an ego that intrudes at a conflict point ahead.
    v.yielding = false;
    if (v.cooperative && v.waited_s < actor.patience_s()) {
      for (const auto& c : scenario_->conflicts) {
        if (c.traffic_lane != v.lane || !ego_intrudes(c)) continue;
        const double to_conflict = ahead_distance(lane.center, v.station, c.traffic_station);
        if (lane.center.closed() && to_conflict > 0.5 * lane.center.length()) continue;
        const double stop_gap = to_conflict - 0.5 * lane.width - 1.0 - 0.5 * v.length;
        if (stop_gap < -0.5 * v.length) continue;  // already at / past the conflict
        const double needed = v.speed * v.speed / (2.0 * std::max(stop_gap, 0.1));
        if (needed > p.max_decel) continue;  // cannot stop in time
        v.yielding = true;
        a = std::min(a, idm_follow(std::max(stop_gap, 0.05), v.speed, 0.0, p));
      }
    }
    return a;
  }

  /// Bumper gap from vehicle `v` to the nearest part of the ego that lies in
  /// v's lane ahead of it, or +inf.
  double ego_gap_on_lane(const EnvVehicle& v) const {
    const TrafficLane& lane = scenario_->traffic_lanes[v.lane];
    const OrientedRect ego = ego_.footprint();
    const auto corners = ego.corners();
    std::array<Vec2, 9> probes{};
    for (int i = 0; i < 4; ++i) {
      probes[static_cast<std::size_t>(i)] = corners[static_cast<std::size_t>(i)];
      probes[static_cast<std::size_t>(4 + i)] =
          (corners[static_cast<std::size_t>(i)] + corners[static_cast<std::size_t>((i + 1) % 4)]) * 0.5;
    }
    probes[8] = ego.center;
    // Drivers anticipate where a moving ego will be shortly.
    const Vec2 ahead = unit_from_heading(ego_.heading) * (ego_.speed * kAnticipation);
    double best = std::numeric_limits<double>::infinity();
    const double look = lane.center.closed() ? 0.5 * lane.center.length() : 60.0;
    // No anticipation when the ego is already in this lane behind the vehicle.
    const auto center = lane.center.project(ego.center);
    const double center_ahead = ahead_distance(lane.center, v.station, center.station);
    const bool follower = std::abs(center.lateral) <= 0.5 * lane.width && (center_ahead <= 0.0 || center_ahead > look);
    for (int k = 0; k < 2; ++k) {
      if (k == 1 && (ego_.speed < 0.5 || follower || !v.cooperative)) break;
      for (std::size_t i = 0; i < probes.size(); ++i) {
        // Uncooperative drivers only react once the ego's center is in their lane.
        if (!v.cooperative && i != 8) continue;
        const Vec2 p = k == 0 ? probes[i] : probes[i] + ahead;
        const auto proj = lane.center.project(p);
        if (std::abs(proj.lateral) > 0.5 * lane.width) continue;
        const double d = ahead_distance(lane.center, v.station, proj.station);
        if (d <= 0.0 || d > look) continue;
        best = std::min(best, d - 0.5 * v.length);
      }
    }
    return best;
  }

  void advance_vehicle(EnvVehicle& v, double a) {
    const double dt = config_.dt;
    const double new_speed = std::max(0.0, v.speed + a * dt);
    v.accel = (new_speed - v.speed) / dt;
    v.speed = new_speed;
    v.station += v.speed * dt;
    const auto& lane = scenario_->traffic_lanes[v.lane].center;
    if (lane.closed()) v.station = lane.normalize_station(v.station);
    if (v.yielding && v.speed < 0.5)
      v.waited_s += dt;
  }

  Outcome detect_outcome(bool left_route) const {
    const OrientedRect ego = ego_.footprint();
    for (const auto& v : vehicles_)
      if (overlaps(ego, vehicle_footprint(v))) return Outcome::Collision;
    if (left_route) return Outcome::OffRoad;
    for (const Vec2& c : ego.corners())
      if (!road_->drivable(c)) return Outcome::OffRoad;
    if (ego_.station >= scenario_->route_lanes.front().length() - 0.5) return Outcome::OffRoad;
    if (scenario_->goal.contains(ego_.position)) return Outcome::GoalReached;
    if (tick_ >= config_.max_ticks()) return Outcome::Timeout;
    return Outcome::Running;
  }

  SimConfig config_;
  std::shared_ptr<const ScenarioSpec> scenario_;
  std::shared_ptr<const RoadMap> road_;
  GridSpec grid_;
  TrafficFlow flow_;
  std::mt19937_64 rng_;
  EgoState ego_;
  std::vector<EnvVehicle> vehicles_;
  std::vector<double> next_spawn_;
  std::deque<std::vector<float>> frames_;
  Observation observation_;
  std::vector<TraceRow> trace_;
  RewardMode reward_mode_ = RewardMode::Sparse;
  int tick_ = 0;
  int next_id_ = 0;
  bool started_ = false;
  Outcome outcome_ = Outcome::Running;
};

}  // namespace ierl::sim

#pragma once

#include "ierl/expert/dataset.hpp"
#include "ierl/service/commands.hpp"
#include "ierl/sim/env.hpp"
#include "ierl/sim/rollout.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ierl::service {

inline constexpr int kWireVersion = 1;

enum class Mode { Demonstrate, Spectate, Replay };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Demonstrate: return "demonstrate";
    case Mode::Spectate: return "spectate";
    case Mode::Replay: return "replay";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  for (Mode m : {Mode::Demonstrate, Mode::Spectate, Mode::Replay})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown session mode '" + s + "'");
}

// ---------------------------------------------------------------- command log

/// A command as it was applied: before the simulator step of `tick`.
struct LoggedCommand {
  int tick = 0;
  Command command = Command::SpeedUp;

  bool operator==(const LoggedCommand&) const = default;
};

/// Everything needed to re-drive one episode headlessly.
struct CommandLog {
  sim::SimConfig sim;
  std::uint64_t flow_seed = 0;
  std::uint64_t episode = 0;
  std::string behavior = "human";
  int record_start_tick = 0;
  std::vector<LoggedCommand> commands;
};

inline nlohmann::json to_json(const CommandLog& log) {
  nlohmann::json cmds = nlohmann::json::array();
  for (const auto& c : log.commands) cmds.push_back({{"tick", c.tick}, {"command", to_string(c.command)}});
  return {{"format", "ierl.cmdlog"},  {"version", 1},
          {"sim", sim::to_json(log.sim)}, {"flow_seed", log.flow_seed},
          {"episode", log.episode},   {"behavior", log.behavior},
          {"record_start_tick", log.record_start_tick}, {"commands", std::move(cmds)}};
}

inline CommandLog command_log_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "ierl.cmdlog" || j.value("version", 0) != 1)
    throw std::runtime_error("not a version 1 command log");
  CommandLog log;
  log.sim = sim::sim_config_from_json(j.at("sim"));
  log.flow_seed = j.at("flow_seed").get<std::uint64_t>();
  log.episode = j.at("episode").get<std::uint64_t>();
  log.behavior = j.value("behavior", std::string("human"));
  log.record_start_tick = j.value("record_start_tick", 0);
  int last = 0;
  for (const auto& c : j.at("commands")) {
    const auto cmd = command_from_string(c.at("command").get<std::string>());
    if (!cmd) throw std::runtime_error("unknown command in log: " + c.at("command").dump());
    const int tick = c.at("tick").get<int>();
    if (tick < last) throw std::runtime_error("command log ticks must be non-decreasing");
    last = tick;
    log.commands.push_back({tick, *cmd});
  }
  return log;
}

inline void save_command_log(const std::filesystem::path& path, const CommandLog& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(log).dump(1);
}

inline CommandLog load_command_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return command_log_from_json(nlohmann::json::parse(in));
}

/// Desk replay: re-drives the episode from its command log. Pairs are
/// collected from `record_start_tick` on, exactly as a live session records.
inline expert::Demonstration replay_command_log(const CommandLog& log) {
  sim::TrafficEnv env(log.sim);
  env.reset(sim::make_flow(log.flow_seed, log.sim.traffic), log.episode);
  HeldTargets held;
  expert::Demonstration d;
  d.scenario = sim::to_string(log.sim.kind);
  d.behavior = log.behavior;
  d.source = "human";
  d.dt = log.sim.dt;
  d.flow_seed = log.flow_seed;
  d.episode = log.episode;
  std::size_t next = 0;
  while (!env.done()) {
    while (next < log.commands.size() && log.commands[next].tick <= env.tick())
      apply_command(held, log.commands[next++].command, env.ego(), env.config().max_speed);
    const sim::Action a = translate_command(held, env.config().max_speed);
    if (env.tick() >= log.record_start_tick) d.pairs.push_back({env.observation().values, {a.v_norm, a.l_norm}});
    env.step(a);
    release_lane_latch(held, env.ego());
  }
  d.outcome = sim::to_string(env.outcome());
  return d;
}

// ---------------------------------------------------------------- wire messages

/// One rendered tick as sent to clients. Only the current frame is sent,
/// quantized to 8 bits; recordings keep full precision.
struct WireFrame {
  std::string session;
  int tick = 0;
  int grid = 16;
  int channels = sim::kChannels;
  std::vector<std::uint8_t> cells;  // [channel][row][col]
  double speed = 0.0;
  double target_speed = 0.0;
  int lane = 0;
  bool recording = false;
  std::optional<sim::Outcome> outcome;  // set on the terminal frame only
};

inline std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline nlohmann::json to_json(const WireFrame& f) {
  nlohmann::json j = {{"type", "frame"},     {"v", kWireVersion},       {"session", f.session},
                      {"tick", f.tick},      {"grid", f.grid},          {"channels", f.channels},
                      {"cells", f.cells},    {"speed", f.speed},        {"target_speed", f.target_speed},
                      {"lane", f.lane},      {"recording", f.recording}};
  if (f.outcome) j["outcome"] = sim::to_string(*f.outcome);
  return j;
}

inline WireFrame wire_frame_from_json(const nlohmann::json& j) {
  if (j.at("type") != "frame" || j.at("v") != kWireVersion) throw std::runtime_error("not a v1 frame");
  WireFrame f;
  f.session = j.at("session").get<std::string>();
  f.tick = j.at("tick").get<int>();
  f.grid = j.at("grid").get<int>();
  f.channels = j.at("channels").get<int>();
  f.cells = j.at("cells").get<std::vector<std::uint8_t>>();
  f.speed = j.at("speed").get<double>();
  f.target_speed = j.at("target_speed").get<double>();
  f.lane = j.at("lane").get<int>();
  f.recording = j.value("recording", false);
  if (j.contains("outcome")) f.outcome = sim::outcome_from_string(j["outcome"].get<std::string>());
  if (f.cells.size() != static_cast<std::size_t>(f.grid) * f.grid * f.channels)
    throw std::runtime_error("frame payload size does not match grid and channels");
  return f;
}

inline nlohmann::json event_message(const std::string& name, nlohmann::json fields = nlohmann::json::object()) {
  fields["type"] = "event";
  fields["v"] = kWireVersion;
  fields["event"] = name;
  return fields;
}

inline nlohmann::json error_message(const std::string& what) {
  return {{"type", "error"}, {"v", kWireVersion}, {"message", what}};
}

inline nlohmann::json command_message(Command c) {
  return {{"type", "command"}, {"v", kWireVersion}, {"command", to_string(c)}};
}

/// Parses a client message; anything but a well-formed v1 command yields an error text.
inline std::variant<Command, std::string> parse_client_message(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return std::string("malformed JSON");
  }
  if (!j.is_object()) return std::string("message must be an object");
  if (!j.contains("v") || j["v"] != kWireVersion) return std::string("unsupported protocol version");
  if (j.value("type", std::string()) != "command") return std::string("clients may only send commands");
  if (!j.contains("command") || !j["command"].is_string()) return std::string("missing command");
  const auto c = command_from_string(j["command"].get<std::string>());
  if (!c) return "unknown command '" + j["command"].get<std::string>() + "'";
  return *c;
}

// ---------------------------------------------------------------- session

struct SessionConfig {
  sim::SimConfig sim;
  Mode mode = Mode::Demonstrate;
  std::uint64_t flow_seed = 1000;
  std::filesystem::path record_dir = "demos";
  std::string behavior = "human";
};

/// What one tick produced: the frame plus any events to broadcast.
struct TickOutput {
  WireFrame frame;
  std::vector<nlohmann::json> events;
};

/// One operator session over one simulator. Not thread-safe; the server
/// serializes commands into it between ticks.
class Session {
 public:
  Session(std::string id, SessionConfig cfg, sim::PolicyFn policy = {})
      : id_(std::move(id)), cfg_(std::move(cfg)), env_(cfg_.sim), policy_(std::move(policy)) {
    if (cfg_.mode == Mode::Replay && !policy_) throw std::invalid_argument("replay sessions need a policy");
    start_episode();
  }

  const std::string& id() const { return id_; }
  Mode mode() const { return cfg_.mode; }
  const HeldTargets& held() const { return held_; }
  const sim::TrafficEnv& env() const { return env_; }
  std::uint64_t episode() const { return episode_; }
  bool recording() const { return recording_; }
  const CommandLog& command_log() const { return log_; }
  const std::vector<std::filesystem::path>& saved() const { return saved_; }

  /// Applies a command at the current tick boundary; returns events to send.
  std::vector<nlohmann::json> command(Command c) {
    std::vector<nlohmann::json> ev;
    if (c == Command::ResetEpisode) {
      if (recording_) ev.push_back(discard("reset"));
      ++episode_;
      start_episode();
      ev.push_back(event_message("episode_reset", {{"episode", episode_}}));
      return ev;
    }
    if (cfg_.mode != Mode::Demonstrate) {
      ev.push_back(error_message(std::string("command ") + to_string(c) + " is not available in " + to_string(cfg_.mode) +
                                 " mode"));
      return ev;
    }
    if (env_.done()) {
      ev.push_back(error_message("episode finished; send ResetEpisode"));
      return ev;
    }
    if (c == Command::StartRecording) {
      if (!recording_) {
        recording_ = true;
        log_.record_start_tick = env_.tick();
        pairs_.clear();
        ev.push_back(event_message("recording_started", {{"tick", env_.tick()}}));
      }
      return ev;
    }
    if (c == Command::StopRecording) {
      if (recording_) ev.push_back(discard("stopped"));
      return ev;
    }
    apply_command(held_, c, env_.ego(), env_.config().max_speed);
    log_.commands.push_back({env_.tick(), c});
    return ev;
  }

  /// Advances one simulator tick (no-op frame once the episode is over).
  TickOutput tick() {
    TickOutput out;
    if (env_.done()) {
      out.frame = frame();
      return out;
    }
    const sim::Action a = cfg_.mode == Mode::Replay ? sim::clip_action(policy_(env_.observation()))
                                                    : translate_command(held_, env_.config().max_speed);
    if (recording_) pairs_.push_back({env_.observation().values, {a.v_norm, a.l_norm}});
    env_.step(a);
    release_lane_latch(held_, env_.ego());
    out.frame = frame();
    if (env_.done()) {
      out.frame.outcome = env_.outcome();
      out.events.push_back(event_message("episode_end", {{"outcome", sim::to_string(env_.outcome())},
                                                         {"ticks", env_.tick()},
                                                         {"duration_s", env_.tick() * env_.config().dt}}));
      if (recording_) out.events.push_back(finish_recording());
    }
    return out;
  }

  WireFrame frame() const {
    WireFrame f;
    f.session = id_;
    f.tick = env_.tick();
    f.grid = env_.grid().size;
    const auto& v = env_.observation().values;
    const std::size_t fs = env_.grid().frame_size();
    f.cells.reserve(fs);
    for (std::size_t i = v.size() - fs; i < v.size(); ++i) f.cells.push_back(quantize(v[i]));
    f.speed = env_.ego().speed;
    f.target_speed = env_.ego().target_speed;
    f.lane = env_.ego().lane_index;
    f.recording = recording_;
    return f;
  }

 private:
  void start_episode() {
    env_.reset(sim::make_flow(cfg_.flow_seed, cfg_.sim.traffic), episode_);
    held_ = HeldTargets{};
    recording_ = false;
    pairs_.clear();
    log_ = CommandLog{};
    log_.sim = cfg_.sim;
    log_.flow_seed = cfg_.flow_seed;
    log_.episode = episode_;
    log_.behavior = cfg_.behavior;
  }

  nlohmann::json discard(const std::string& why) {
    recording_ = false;
    const auto n = pairs_.size();
    pairs_.clear();
    return event_message("recording_discarded", {{"reason", why}, {"pairs", n}});
  }

  nlohmann::json finish_recording() {
    if (env_.outcome() != sim::Outcome::GoalReached) return discard(sim::to_string(env_.outcome()));
    expert::Demonstration d;
    d.scenario = sim::to_string(cfg_.sim.kind);
    d.behavior = cfg_.behavior;
    d.source = "human";
    d.dt = cfg_.sim.dt;
    d.flow_seed = cfg_.flow_seed;
    d.episode = episode_;
    d.outcome = sim::to_string(env_.outcome());
    d.pairs = std::move(pairs_);
    pairs_.clear();
    recording_ = false;
    const std::string stem = id_ + "_flow" + std::to_string(cfg_.flow_seed) + "_ep" + std::to_string(episode_);
    const auto path = cfg_.record_dir / (stem + ".json");
    expert::save_demonstration(path, d);
    save_command_log(cfg_.record_dir / (stem + ".cmdlog"), log_);
    saved_.push_back(path);
    return event_message("recording_saved", {{"path", path.string()}, {"pairs", d.pairs.size()}});
  }

  std::string id_;
  SessionConfig cfg_;
  sim::TrafficEnv env_;
  sim::PolicyFn policy_;
  HeldTargets held_;
  std::uint64_t episode_ = 0;
  bool recording_ = false;
  std::vector<expert::DemoPair> pairs_;
  CommandLog log_;
  std::vector<std::filesystem::path> saved_;
};

}  // namespace ierl::service

#pragma once

#include "ierl/sim/env.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>

namespace ierl::service {

enum class Command { SpeedUp, SlowDown, LaneLeft, LaneRight, ResetEpisode, StartRecording, StopRecording };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::SpeedUp: return "SpeedUp";
    case Command::SlowDown: return "SlowDown";
    case Command::LaneLeft: return "LaneLeft";
    case Command::LaneRight: return "LaneRight";
    case Command::ResetEpisode: return "ResetEpisode";
    case Command::StartRecording: return "StartRecording";
    case Command::StopRecording: return "StopRecording";
  }
  return "?";
}

inline std::optional<Command> command_from_string(const std::string& s) {
  for (Command c : {Command::SpeedUp, Command::SlowDown, Command::LaneLeft, Command::LaneRight, Command::ResetEpisode,
                    Command::StartRecording, Command::StopRecording})
    if (s == to_string(c)) return c;
  return std::nullopt;
}

inline constexpr double kSpeedStep = 2.0;  // m/s per SpeedUp / SlowDown

/// Targets the operator last set; the vehicle keeps executing them until a
/// new command arrives.
struct HeldTargets {
  double speed = 0.0;  // m/s, multiple of kSpeedStep within [0, max_speed]
  sim::LaneCommand lane = sim::LaneCommand::Keep;
  int latched_from_lane = 0;  // ego lane index when the change was latched

  bool operator==(const HeldTargets&) const = default;
};

/// Applies a driving command. Lane commands latch until the maneuver
/// completes; see release_lane_latch.
inline void apply_command(HeldTargets& h, Command c, const sim::EgoState& ego, double max_speed = 10.0) {
  switch (c) {
    case Command::SpeedUp: h.speed = std::min(max_speed, h.speed + kSpeedStep); break;
    case Command::SlowDown: h.speed = std::max(0.0, h.speed - kSpeedStep); break;
    case Command::LaneLeft:
      h.lane = sim::LaneCommand::Left;
      h.latched_from_lane = ego.lane_index;
      break;
    case Command::LaneRight:
      h.lane = sim::LaneCommand::Right;
      h.latched_from_lane = ego.lane_index;
      break;
    default: break;
  }
}

/// Called after each tick: a latched change reverts to keep once the ego has
/// arrived in the new lane.
inline void release_lane_latch(HeldTargets& h, const sim::EgoState& ego) {
  if (h.lane != sim::LaneCommand::Keep && ego.lane_index != h.latched_from_lane) h.lane = sim::LaneCommand::Keep;
}

/// Held targets to the agent action space: bin centers for the lane command.
inline sim::Action translate_command(const HeldTargets& h, double max_speed = 10.0) {
  sim::Action a;
  a.v_norm = 2.0 * h.speed / max_speed - 1.0;
  switch (h.lane) {
    case sim::LaneCommand::Left: a.l_norm = -2.0 / 3.0; break;
    case sim::LaneCommand::Keep: a.l_norm = 0.0; break;
    case sim::LaneCommand::Right: a.l_norm = 2.0 / 3.0; break;
  }
  return a;
}

}  // namespace ierl::service

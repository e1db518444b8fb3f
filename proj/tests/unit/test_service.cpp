#include "ierl/expert/scripted.hpp"
#include "ierl/service/session.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace ierl;
using namespace ierl::service;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SessionConfig demo_config(const fs::path& dir, std::uint64_t flow = 1000) {
  SessionConfig c;
  c.flow_seed = flow;
  c.record_dir = dir;
  c.behavior = "neutral";
  return c;
}

/// Drives a session with the scripted expert's keypresses until the episode ends.
std::vector<TickOutput> drive_scripted(Session& s) {
  expert::ScriptedDriver driver(expert::ScriptedParams::for_behavior(expert::Behavior::Neutral));
  driver.reset();
  std::vector<TickOutput> out;
  while (!s.env().done()) {
    for (Command c : driver.decide(s.env(), s.held())) s.command(c);
    out.push_back(s.tick());
  }
  return out;
}

class Recording : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("ierl_service_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

}  // namespace

// ------------------------------------------------------------ commands

TEST(Commands, SpeedStepsAndClamping) {
  HeldTargets h;
  const sim::EgoState ego;
  apply_command(h, Command::SpeedUp, ego);
  apply_command(h, Command::SpeedUp, ego);
  EXPECT_EQ(h.speed, 4.0);
  for (int i = 0; i < 5; ++i) apply_command(h, Command::SpeedUp, ego);
  EXPECT_EQ(h.speed, 10.0);
  for (int i = 0; i < 7; ++i) apply_command(h, Command::SlowDown, ego);
  EXPECT_EQ(h.speed, 0.0);
}

TEST(Commands, TranslateToActionSpace) {
  HeldTargets h;
  h.speed = 5.0;
  auto a = translate_command(h);
  EXPECT_DOUBLE_EQ(a.v_norm, 0.0);
  EXPECT_DOUBLE_EQ(a.l_norm, 0.0);
  h.speed = 10.0;
  h.lane = sim::LaneCommand::Left;
  a = translate_command(h);
  EXPECT_DOUBLE_EQ(a.v_norm, 1.0);
  EXPECT_DOUBLE_EQ(a.l_norm, -2.0 / 3.0);
  EXPECT_EQ(sim::lane_bin(a.l_norm), sim::LaneCommand::Left);
  h.speed = 0.0;
  h.lane = sim::LaneCommand::Right;
  a = translate_command(h);
  EXPECT_DOUBLE_EQ(a.v_norm, -1.0);
  EXPECT_EQ(sim::lane_bin(a.l_norm), sim::LaneCommand::Right);
}

TEST(Commands, NamesRoundTrip) {
  for (Command c : {Command::SpeedUp, Command::SlowDown, Command::LaneLeft, Command::LaneRight, Command::ResetEpisode,
                    Command::StartRecording, Command::StopRecording})
    EXPECT_EQ(command_from_string(to_string(c)), c);
  EXPECT_FALSE(command_from_string("Honk"));
}

TEST(Commands, LaneLatchHoldsUntilManeuverCompletes) {
  sim::SimConfig cfg;
  cfg.kind = sim::ScenarioKind::Roundabout;
  cfg.traffic.arrival_rate = {0.0, 0.0};
  sim::TrafficEnv env(cfg);
  env.reset(sim::make_flow(1000, cfg.traffic), 0);
  HeldTargets h;
  apply_command(h, Command::LaneLeft, env.ego());
  int ticks = 0;
  while (h.lane == sim::LaneCommand::Left && ticks < 50) {
    env.step(translate_command(h));
    release_lane_latch(h, env.ego());
    ++ticks;
  }
  EXPECT_EQ(ticks, 10);
  EXPECT_EQ(env.ego().lane_index, 1);
  EXPECT_EQ(h.lane, sim::LaneCommand::Keep);
}

// ------------------------------------------------------------ wire protocol

TEST(Wire, ParseClientMessages) {
  EXPECT_EQ(std::get<Command>(parse_client_message(command_message(Command::LaneRight).dump())), Command::LaneRight);
  for (const char* bad : {"{", "[1]", R"({"type":"command","command":"SpeedUp"})", R"({"type":"command","v":2,"command":"SpeedUp"})",
                          R"({"type":"frame","v":1})", R"({"type":"command","v":1})", R"({"type":"command","v":1,"command":"Fly"})"})
    EXPECT_TRUE(std::holds_alternative<std::string>(parse_client_message(bad))) << bad;
  const auto e = error_message("x");
  EXPECT_EQ(e["type"], "error");
  EXPECT_EQ(e["v"], 1);
  EXPECT_EQ(event_message("episode_end")["type"], "event");
}

TEST(Wire, FrameRoundTripAndQuantization) {
  EXPECT_EQ(quantize(0.0f), 0);
  EXPECT_EQ(quantize(1.0f), 255);
  EXPECT_EQ(quantize(0.5f), 128);
  EXPECT_EQ(quantize(2.0f), 255);
  Session s("s1", demo_config(fs::temp_directory_path()));
  s.command(Command::SpeedUp);
  const auto out = s.tick();
  const auto j = to_json(out.frame);
  EXPECT_EQ(j["type"], "frame");
  EXPECT_EQ(j["v"], 1);
  EXPECT_EQ(j["tick"], 1);
  EXPECT_FALSE(j.contains("outcome"));
  const WireFrame back = wire_frame_from_json(j);
  EXPECT_EQ(back.cells.size(), 768u);
  EXPECT_EQ(back.cells, out.frame.cells);
  // the payload is the current frame of the observation
  const auto& obs = s.env().observation();
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) EXPECT_EQ(back.cells[sim::frame_index(s.env().grid(), sim::kOthers, r, c)], quantize(obs.at(2, sim::kOthers, r, c)));
  auto broken = j;
  broken["cells"] = std::vector<int>(10, 0);
  EXPECT_THROW(wire_frame_from_json(broken), std::runtime_error);
}

// ------------------------------------------------------------ sessions

TEST(Session, NoCommandsHoldsZeroSpeed) {
  Session s("s", demo_config(fs::temp_directory_path()));
  for (int i = 0; i < 30; ++i) {
    const auto f = s.tick().frame;
    EXPECT_EQ(f.tick, i + 1);
    EXPECT_EQ(f.target_speed, 0.0);
    EXPECT_EQ(f.speed, 0.0);
  }
}

TEST_F(Recording, SuccessfulRecordingIsPersistedAndReplaysBitExactly) {
  Session s("op", demo_config(dir, 1003));
  s.command(Command::StartRecording);
  const auto frames = drive_scripted(s);
  ASSERT_EQ(s.env().outcome(), sim::Outcome::GoalReached);
  ASSERT_EQ(s.saved().size(), 1u);
  const fs::path file = s.saved().front();
  const auto demo = expert::load_demonstration(file);
  EXPECT_EQ(demo.pairs.size(), static_cast<std::size_t>(s.env().tick()));
  EXPECT_EQ(demo.outcome, "goal_reached");
  EXPECT_EQ(demo.source, "human");

  fs::path cmdlog = file;
  cmdlog.replace_extension(".cmdlog");
  ASSERT_TRUE(fs::exists(cmdlog));
  const auto replayed = replay_command_log(load_command_log(cmdlog));
  EXPECT_TRUE(replayed == demo);
  expert::save_demonstration(dir / "desk.json", replayed);
  EXPECT_EQ(slurp(dir / "desk.json"), slurp(file));

  // the terminal frame carries the outcome, and only that one
  int with_outcome = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(frames[i].frame.tick, static_cast<int>(i) + 1);
    with_outcome += frames[i].frame.outcome.has_value();
  }
  EXPECT_EQ(with_outcome, 1);
  EXPECT_TRUE(frames.back().frame.outcome.has_value());
  EXPECT_EQ(s.tick().frame.tick, frames.back().frame.tick);
}

TEST_F(Recording, LateStartRecordsFromThatTick) {
  Session s("op", demo_config(dir, 1004));
  for (int i = 0; i < 15; ++i) s.tick();
  s.command(Command::StartRecording);
  drive_scripted(s);
  ASSERT_EQ(s.env().outcome(), sim::Outcome::GoalReached);
  const auto demo = expert::load_demonstration(s.saved().front());
  EXPECT_EQ(demo.pairs.size(), static_cast<std::size_t>(s.env().tick() - 15));
  fs::path cmdlog = s.saved().front();
  EXPECT_TRUE(replay_command_log(load_command_log(cmdlog.replace_extension(".cmdlog"))) == demo);
}

TEST_F(Recording, FailedEpisodeIsDiscarded) {
  SessionConfig cfg = demo_config(dir, 5000);
  cfg.sim.kind = sim::ScenarioKind::Roundabout;
  Session s("op", cfg);
  s.command(Command::StartRecording);
  for (int i = 0; i < 5; ++i) s.command(Command::SpeedUp);
  std::vector<nlohmann::json> events;
  while (!s.env().done()) {
    auto out = s.tick();
    events.insert(events.end(), out.events.begin(), out.events.end());
  }
  EXPECT_NE(s.env().outcome(), sim::Outcome::GoalReached);
  EXPECT_TRUE(s.saved().empty());
  EXPECT_FALSE(fs::exists(dir) && !fs::is_empty(dir));
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0]["event"], "episode_end");
  EXPECT_EQ(events[1]["event"], "recording_discarded");
}

TEST_F(Recording, StopAndResetDiscard) {
  Session s("op", demo_config(dir));
  s.command(Command::StartRecording);
  s.tick();
  auto ev = s.command(Command::StopRecording);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0]["event"], "recording_discarded");
  EXPECT_FALSE(s.recording());
  s.command(Command::StartRecording);
  s.command(Command::SpeedUp);
  ev = s.command(Command::ResetEpisode);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[1]["event"], "episode_reset");
  EXPECT_EQ(s.episode(), 1u);
  EXPECT_EQ(s.env().tick(), 0);
  EXPECT_EQ(s.held(), HeldTargets{});
  EXPECT_TRUE(s.command_log().commands.empty());
}

TEST(Session, SpectatorCommandsAreRejected) {
  SessionConfig cfg;
  cfg.mode = Mode::Spectate;
  Session s("watch", cfg);
  const auto ev = s.command(Command::SpeedUp);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0]["type"], "error");
  EXPECT_EQ(s.held().speed, 0.0);
  EXPECT_EQ(s.tick().frame.tick, 1);
}

TEST(Session, PolicyReplayIsDeterministic) {
  SessionConfig cfg;
  cfg.mode = Mode::Replay;
  cfg.flow_seed = 5003;
  const nn::Mlp<float> net({2304, 8, 4}, 2);
  const sim::PolicyFn policy = [&](const sim::Observation& o) {
    const nn::Matrix<float> h = net.forward(Eigen::Map<const nn::Vector<float>>(o.values.data(), 2304));
    return sim::Action{h(0, 0) + 0.5, h(1, 0)};
  };
  auto run = [&] {
    Session s("replay", cfg, policy);
    std::vector<nlohmann::json> stream;
    nlohmann::json end;
    while (!s.env().done()) {
      auto out = s.tick();
      stream.push_back(to_json(out.frame));
      for (auto& e : out.events) end = e;
    }
    return std::make_pair(stream, end);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_LE(a.first.size(), 400u);
  EXPECT_EQ(a.second["ticks"], static_cast<int>(a.first.size()));
  EXPECT_DOUBLE_EQ(a.second["duration_s"].get<double>(), 0.1 * static_cast<double>(a.first.size()));
  EXPECT_THROW(Session("x", cfg), std::invalid_argument);
}

TEST(CommandLogFile, JsonRoundTripAndErrors) {
  CommandLog log;
  log.flow_seed = 1007;
  log.episode = 3;
  log.record_start_tick = 4;
  log.commands = {{0, Command::SpeedUp}, {12, Command::LaneLeft}};
  const auto back = command_log_from_json(to_json(log));
  EXPECT_EQ(back.commands, log.commands);
  EXPECT_EQ(back.record_start_tick, 4);
  EXPECT_EQ(sim::to_json(back.sim), sim::to_json(log.sim));
  auto j = to_json(log);
  j["commands"][1]["tick"] = -1;
  EXPECT_THROW(command_log_from_json(j), std::runtime_error);
  j = to_json(log);
  j["format"] = "other";
  EXPECT_THROW(command_log_from_json(j), std::runtime_error);
}

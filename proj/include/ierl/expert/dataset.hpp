#pragma once

#include "ierl/expert/scripted.hpp"
#include "ierl/nn/mlp.hpp"
#include "ierl/sim/env.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ierl::expert {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDemoFormatVersion = 1;

struct DemoPair {
  std::vector<float> state;     // flattened observation, values in [0, 1]
  std::array<double, 2> action; // (v_norm, l_norm), values in [-1, 1]

  bool operator==(const DemoPair&) const = default;
};

/// One demonstrated episode.
struct Demonstration {
  int version = kDemoFormatVersion;
  std::string scenario = "left_turn";
  std::string behavior = "neutral";
  std::string source = "scripted";  // "human" or "scripted"
  double dt = 0.1;
  std::uint64_t flow_seed = 0;
  std::uint64_t episode = 0;
  std::string outcome = "goal_reached";
  std::vector<DemoPair> pairs;

  bool operator==(const Demonstration&) const = default;
};

inline nlohmann::json to_json(const Demonstration& d) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : d.pairs) pairs.push_back({{"state", p.state}, {"action", {p.action[0], p.action[1]}}});
  return {{"version", d.version},   {"scenario", d.scenario},   {"behavior", d.behavior},
          {"source", d.source},     {"dt", d.dt},               {"flow_seed", d.flow_seed},
          {"episode", d.episode},   {"outcome", d.outcome},     {"pairs", std::move(pairs)}};
}

/// Parses and validates a demonstration record; ranges are enforced here.
inline Demonstration demonstration_from_json(const nlohmann::json& j) {
  Demonstration d;
  try {
    d.version = j.at("version").get<int>();
    if (d.version != kDemoFormatVersion)
      throw DatasetError("unsupported demonstration version " + std::to_string(d.version));
    d.scenario = j.at("scenario").get<std::string>();
    d.behavior = j.value("behavior", std::string("neutral"));
    d.source = j.value("source", std::string("human"));
    d.dt = j.value("dt", 0.1);
    d.flow_seed = j.value("flow_seed", std::uint64_t{0});
    d.episode = j.value("episode", std::uint64_t{0});
    d.outcome = j.at("outcome").get<std::string>();
    for (const auto& p : j.at("pairs")) {
      DemoPair pair;
      pair.state = p.at("state").get<std::vector<float>>();
      const auto a = p.at("action");
      if (!a.is_array() || a.size() != 2) throw DatasetError("action must be a 2-vector");
      pair.action = {a[0].get<double>(), a[1].get<double>()};
      d.pairs.push_back(std::move(pair));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed demonstration: ") + e.what());
  }
  std::size_t width = d.pairs.empty() ? 0 : d.pairs.front().state.size();
  for (const auto& p : d.pairs) {
    if (p.state.size() != width) throw DatasetError("inconsistent state sizes in demonstration");
    for (float v : p.state)
      if (!(v >= 0.0f && v <= 1.0f)) throw DatasetError("state value outside [0, 1]");
    for (double v : p.action)
      if (!(v >= -1.0 && v <= 1.0)) throw DatasetError("action value outside [-1, 1]");
  }
  return d;
}

inline void save_demonstration(const std::filesystem::path& path, const Demonstration& d) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DatasetError("cannot write " + tmp.string());
    out << to_json(d).dump();
    if (!out) throw DatasetError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Demonstration load_demonstration(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
  return demonstration_from_json(j);
}

/// Demonstration set for behavioral cloning. Only successful episodes belong here.
struct DemoDataset {
  std::vector<Demonstration> trajectories;

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.pairs.size();
    return n;
  }
  std::size_t state_size() const {
    for (const auto& t : trajectories)
      if (!t.pairs.empty()) return t.pairs.front().state.size();
    return 0;
  }
  bool empty() const { return pair_count() == 0; }

  /// Adds a trajectory; anything but a goal-reaching episode is rejected.
  void add(Demonstration d) {
    if (d.outcome != sim::to_string(sim::Outcome::GoalReached))
      throw DatasetError("only successful demonstrations may enter the dataset (got " + d.outcome + ")");
    if (!trajectories.empty() && !d.pairs.empty() && state_size() != 0 && d.pairs.front().state.size() != state_size())
      throw DatasetError("state size does not match the dataset");
    trajectories.push_back(std::move(d));
  }

  DemoDataset first(std::size_t n) const {
    if (n > trajectories.size()) throw DatasetError("dataset has only " + std::to_string(trajectories.size()) +
                                                    " trajectories, asked for " + std::to_string(n));
    DemoDataset out;
    out.trajectories.assign(trajectories.begin(), trajectories.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }
};

/// Loads every *.json demonstration in a directory (sorted by file name).
/// Unsuccessful episodes are skipped and counted in `skipped` when given.
inline DemoDataset load_dataset(const std::filesystem::path& dir, std::size_t* skipped = nullptr) {
  if (!std::filesystem::is_directory(dir)) throw DatasetError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  DemoDataset ds;
  std::size_t skip = 0;
  for (const auto& f : files) {
    Demonstration d = load_demonstration(f);
    if (d.outcome != sim::to_string(sim::Outcome::GoalReached)) {
      ++skip;
      continue;
    }
    ds.add(std::move(d));
  }
  if (skipped) *skipped = skip;
  return ds;
}

/// Flattened training matrices: states (state_size x N), actions (2 x N).
struct DemoMatrices {
  nn::Matrix<float> states;
  nn::Matrix<float> actions;
};

inline DemoMatrices to_matrices(const DemoDataset& ds) {
  const auto n = static_cast<Eigen::Index>(ds.pair_count());
  if (n == 0) throw DatasetError("empty dataset");
  DemoMatrices m;
  m.states.resize(static_cast<Eigen::Index>(ds.state_size()), n);
  m.actions.resize(2, n);
  Eigen::Index col = 0;
  for (const auto& t : ds.trajectories)
    for (const auto& p : t.pairs) {
      m.states.col(col) = Eigen::Map<const nn::Vector<float>>(p.state.data(), static_cast<Eigen::Index>(p.state.size()));
      m.actions(0, col) = static_cast<float>(p.action[0]);
      m.actions(1, col) = static_cast<float>(p.action[1]);
      ++col;
    }
  return m;
}

/// Adds N(0, sigma^2) to every recorded action and clamps back into [-1, 1].
inline DemoDataset augment_actions(const DemoDataset& ds, double sigma, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw std::invalid_argument("augment_actions: sigma must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  DemoDataset out = ds;
  for (auto& t : out.trajectories)
    for (auto& p : t.pairs)
      for (double& a : p.action) a = std::clamp(a + noise(rng), -1.0, 1.0);
  return out;
}

/// Records a scripted episode as a demonstration (regardless of outcome).
inline Demonstration to_demonstration(const ScriptedEpisode& ep, const sim::TrafficEnv& env, Behavior behavior,
                                      std::uint64_t flow_seed, std::uint64_t episode) {
  Demonstration d;
  d.scenario = sim::to_string(env.scenario().kind);
  d.behavior = to_string(behavior);
  d.source = "scripted";
  d.dt = env.config().dt;
  d.flow_seed = flow_seed;
  d.episode = episode;
  d.outcome = sim::to_string(ep.outcome);
  d.pairs.reserve(ep.states.size());
  for (std::size_t i = 0; i < ep.states.size(); ++i)
    d.pairs.push_back({ep.states[i], {ep.actions[i].v_norm, ep.actions[i].l_norm}});
  return d;
}

/// Runs the scripted driver over the training flows (cycling) until `count`
/// successful episodes are collected. Failed attempts are discarded.
inline DemoDataset generate_scripted_demos(const sim::SimConfig& cfg, Behavior behavior, std::size_t count,
                                           std::uint64_t episode_base = 0, std::size_t max_attempts = 0) {
  sim::TrafficEnv env(cfg);
  const auto flows = sim::make_flows(cfg.train_seeds, cfg.traffic);
  if (max_attempts == 0) max_attempts = 20 * count + 20;
  DemoDataset ds;
  for (std::size_t attempt = 0; ds.trajectories.size() < count; ++attempt) {
    if (attempt >= max_attempts)
      throw DatasetError("scripted driver produced only " + std::to_string(ds.trajectories.size()) +
                         " successes in " + std::to_string(max_attempts) + " attempts");
    const auto& flow = flows[attempt % flows.size()];
    const std::uint64_t episode = episode_base + attempt;
    const ScriptedEpisode ep =
        run_scripted_episode(env, flow, episode, ScriptedDriver(ScriptedParams::for_behavior(behavior)));
    if (ep.outcome != sim::Outcome::GoalReached) continue;
    ds.add(to_demonstration(ep, env, behavior, flow.seed, episode));
  }
  return ds;
}

}  // namespace ierl::expert

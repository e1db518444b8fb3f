#pragma once

#include "ierl/bench/curves.hpp"
#include "ierl/expert/eval.hpp"
#include "ierl/rl/trainer.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace ierl::bench {

namespace fs = std::filesystem;

/// What produced the tested policy.
enum class Method { Sac, ValuePenalty, PolicyConstraint, Bc };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Sac: return "sac";
    case Method::ValuePenalty: return "value_penalty";
    case Method::PolicyConstraint: return "policy_constraint";
    case Method::Bc: return "bc";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "sac" || s == "SAC") return Method::Sac;
  if (s == "value_penalty" || s == "vp") return Method::ValuePenalty;
  if (s == "policy_constraint" || s == "pc") return Method::PolicyConstraint;
  if (s == "bc" || s == "BC") return Method::Bc;
  throw std::invalid_argument("unknown method: " + s);
}

inline rl::Variant variant_of(Method m) {
  switch (m) {
    case Method::Sac: return rl::Variant::Sac;
    case Method::ValuePenalty: return rl::Variant::ValuePenalty;
    case Method::PolicyConstraint: return rl::Variant::PolicyConstraint;
    case Method::Bc: break;
  }
  throw std::invalid_argument("behavioral cloning has no RL variant");
}

inline bool needs_expert(Method m) { return m != Method::Sac; }

struct RunSpec {
  Method method = Method::ValuePenalty;
  sim::ScenarioKind scenario = sim::ScenarioKind::LeftTurn;
  expert::Behavior behavior = expert::Behavior::Aggressive;
  expert::ExpertMode expert_mode = expert::ExpertMode::Ensemble;
  int demo_count = 40;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  sim::RewardMode reward = sim::RewardMode::Sparse;
  int total_steps = 30000;
  int warmup_steps = 5000;
  std::vector<int> hidden{64, 64};
  std::uint64_t expert_seed = 1;

  /// Directory-safe name for everything that shapes one seed's run.
  std::string label() const {
    std::string s = std::string(to_string(method)) + "_" + sim::to_string(scenario);
    if (needs_expert(method))
      s += std::string("_") + expert::to_string(behavior) + "_" + expert::to_string(expert_mode) + "_n" +
           std::to_string(demo_count);
    s += std::string("_") + sim::to_string(reward) + "_" + std::to_string(total_steps);
    return s;
  }
};

inline void validate(const RunSpec& s) {
  if (s.reward == sim::RewardMode::Shaped && s.method != Method::Sac)
    throw std::invalid_argument("shaped reward is only available to the SAC baseline");
  if (needs_expert(s.method) && s.demo_count <= 0) throw std::invalid_argument("demo sample size must be positive");
  if (s.seeds.empty()) throw std::invalid_argument("need at least one seed");
  if (s.total_steps <= 0 || s.warmup_steps < 0) throw std::invalid_argument("invalid step budget");
}

inline nlohmann::json to_json(const RunSpec& s) {
  return {{"method", to_string(s.method)},
          {"scenario", sim::to_string(s.scenario)},
          {"behavior", expert::to_string(s.behavior)},
          {"expert_mode", expert::to_string(s.expert_mode)},
          {"demo_count", s.demo_count},
          {"seeds", s.seeds},
          {"reward", sim::to_string(s.reward)},
          {"total_steps", s.total_steps},
          {"warmup_steps", s.warmup_steps},
          {"hidden", s.hidden},
          {"expert_seed", s.expert_seed}};
}

inline RunSpec run_spec_from_json(const nlohmann::json& j) {
  RunSpec s;
  if (j.contains("method")) s.method = method_from_string(j["method"].get<std::string>());
  if (j.contains("scenario")) s.scenario = sim::scenario_from_string(j["scenario"].get<std::string>());
  if (j.contains("behavior")) s.behavior = expert::behavior_from_string(j["behavior"].get<std::string>());
  if (j.contains("expert_mode")) s.expert_mode = expert::expert_mode_from_string(j["expert_mode"].get<std::string>());
  s.demo_count = j.value("demo_count", s.demo_count);
  s.seeds = j.value("seeds", s.seeds);
  if (j.contains("reward"))
    s.reward = j["reward"].get<std::string>() == "shaped" ? sim::RewardMode::Shaped : sim::RewardMode::Sparse;
  s.total_steps = j.value("total_steps", s.total_steps);
  s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
  s.hidden = j.value("hidden", s.hidden);
  s.expert_seed = j.value("expert_seed", s.expert_seed);
  validate(s);
  return s;
}

inline sim::SimConfig sim_config_for(const RunSpec& s, const sim::SimConfig& base = {}) {
  sim::SimConfig c = base;
  c.kind = s.scenario;
  return c;
}

inline rl::TrainConfig train_config_for(const RunSpec& s, std::uint64_t seed) {
  rl::TrainConfig c;
  c.variant = variant_of(s.method);
  c.reward = s.reward;
  c.total_steps = s.total_steps;
  c.warmup_steps = s.warmup_steps;
  c.hidden = s.hidden;
  c.seed = seed;
  return c;
}

using Log = std::function<void(const std::string&)>;

// ---------------------------------------------------------------- demos and experts

/// Scripted demonstrations for one (scenario, behavior), generated once into
/// `root/demos/...` and reused; smaller sample sizes take the first n files.
inline expert::DemoDataset ensure_demos(const fs::path& root, const sim::SimConfig& cfg, expert::Behavior behavior,
                                        int count, const Log& log = {}) {
  const fs::path dir = root / "demos" / (std::string(sim::to_string(cfg.kind)) + "_" + expert::to_string(behavior));
  const int pool = std::max(count, 40);
  std::size_t have = 0;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir)) have += e.path().extension() == ".json" ? 1 : 0;
  if (have < static_cast<std::size_t>(pool)) {
    if (log) log("generating " + std::to_string(pool) + " scripted demonstrations in " + dir.string());
    const auto ds = expert::generate_scripted_demos(cfg, behavior, static_cast<std::size_t>(pool));
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "demo_%04zu.json", i);
      expert::save_demonstration(dir / name, ds.trajectories[i]);
    }
  }
  return expert::load_dataset(dir).first(static_cast<std::size_t>(count));
}

inline expert::ExpertConfig expert_config_for(const RunSpec& s) {
  expert::ExpertConfig c;
  c.mode = s.expert_mode;
  c.seed = s.expert_seed;
  c.bc.hidden = s.hidden;
  return c;
}

inline fs::path expert_path(const fs::path& root, const RunSpec& s) {
  return root / "experts" /
         (std::string(sim::to_string(s.scenario)) + "_" + expert::to_string(s.behavior) + "_" +
          expert::to_string(s.expert_mode) + "_n" + std::to_string(s.demo_count) + "_s" + std::to_string(s.expert_seed) +
          ".json");
}

/// Trains (or loads the cached) expert for a spec.
inline std::shared_ptr<expert::ExpertPolicy> ensure_expert(const fs::path& root, const RunSpec& s, const Log& log = {}) {
  const fs::path path = expert_path(root, s);
  if (fs::exists(path)) return std::make_shared<expert::ExpertPolicy>(expert::ExpertPolicy::load(path));
  const sim::SimConfig cfg = sim_config_for(s);
  const auto ds = ensure_demos(root, cfg, s.behavior, s.demo_count, log);
  if (log) log("training " + std::string(expert::to_string(s.expert_mode)) + " expert on " +
               std::to_string(ds.pair_count()) + " pairs -> " + path.string());
  auto ex = std::make_shared<expert::ExpertPolicy>(expert::train_expert(ds, expert_config_for(s)));
  fs::create_directories(path.parent_path());
  ex->save(path);
  return ex;
}

// ---------------------------------------------------------------- testing

struct TestResult {
  int episodes = 0;
  int successes = 0;
  double success_percent = 0.0;
  double duration_mean = 0.0;  // over successful episodes only
  double duration_std = 0.0;
  int collisions = 0;
  int off_road = 0;
  int timeouts = 0;
};

inline nlohmann::json to_json(const TestResult& t) {
  return {{"episodes", t.episodes},         {"successes", t.successes},     {"success_percent", t.success_percent},
          {"duration_mean", t.duration_mean}, {"duration_std", t.duration_std}, {"collisions", t.collisions},
          {"off_road", t.off_road},         {"timeouts", t.timeouts}};
}

inline TestResult test_result_from_json(const nlohmann::json& j) {
  TestResult t;
  t.episodes = j.at("episodes").get<int>();
  t.successes = j.at("successes").get<int>();
  t.success_percent = j.at("success_percent").get<double>();
  t.duration_mean = j.at("duration_mean").get<double>();
  t.duration_std = j.at("duration_std").get<double>();
  t.collisions = j.value("collisions", 0);
  t.off_road = j.value("off_road", 0);
  t.timeouts = j.value("timeouts", 0);
  return t;
}

inline TestResult summarize(const sim::EvalResult& r) {
  TestResult t;
  t.episodes = static_cast<int>(r.episodes.size());
  t.successes = r.successes();
  t.success_percent = r.success_percent();
  std::tie(t.duration_mean, t.duration_std) = r.duration_stats();
  for (const auto& e : r.episodes) {
    t.collisions += e.outcome == sim::Outcome::Collision ? 1 : 0;
    t.off_road += e.outcome == sim::Outcome::OffRoad ? 1 : 0;
    t.timeouts += e.outcome == sim::Outcome::Timeout ? 1 : 0;
  }
  return t;
}

/// Mean-action control on the held-out flows (one episode each).
inline TestResult run_testing(const sim::PolicyFn& policy, const sim::SimConfig& cfg) {
  sim::TrafficEnv env(cfg);
  return summarize(sim::evaluate_policy(env, sim::make_flows(cfg.test_seeds, cfg.traffic), policy));
}

inline TestResult run_testing(const fs::path& checkpoint_dir, const sim::SimConfig& cfg) {
  const rl::PolicyCheckpoint p = rl::load_policy(checkpoint_dir);
  return run_testing(p.as_policy(), cfg);
}

// ---------------------------------------------------------------- training

struct SeedRun {
  std::uint64_t seed = 0;
  fs::path dir;
  MetricsLog log;               // empty for BC
  std::vector<double> smoothed; // per-step smoothed success rate (empty for BC)
  TestResult test;
};

inline fs::path seed_dir(const fs::path& root, const RunSpec& s, std::uint64_t seed) {
  return root / "runs" / s.label() / ("seed_" + std::to_string(seed));
}

/// Trains and tests one seed. A finished seed directory whose snapshot matches
/// the spec is reused as is (runs are pure functions of their config).
inline SeedRun run_seed(const fs::path& root, const RunSpec& s, std::uint64_t seed, const Log& log = {}) {
  validate(s);
  SeedRun out;
  out.seed = seed;
  out.dir = seed_dir(root, s, seed);
  const sim::SimConfig cfg = sim_config_for(s);
  nlohmann::json snapshot = to_json(s);
  snapshot["seeds"] = {seed};
  snapshot["sim"] = sim::to_json(cfg);
  const fs::path done = out.dir / "test.json";
  if (fs::exists(done) && fs::exists(out.dir / "config.json") && nn::read_json_file(out.dir / "config.json") == snapshot) {
    out.test = test_result_from_json(nn::read_json_file(done));
    if (s.method != Method::Bc) {
      out.log = read_metrics_csv(out.dir / "metrics.csv");
      out.smoothed = smoothed_success(out.log);
    }
    return out;
  }
  fs::create_directories(out.dir);
  std::shared_ptr<expert::ExpertPolicy> ex;
  if (needs_expert(s.method)) ex = ensure_expert(root, s, log);
  if (s.method == Method::Bc) {
    out.test = run_testing(
        [&](const sim::Observation& o) {
          const auto m = ex->mean_action(o.values);
          return sim::Action{m[0], m[1]};
        },
        cfg);
  } else {
    if (log) log("training " + s.label() + " seed " + std::to_string(seed));
    rl::Trainer trainer(cfg, train_config_for(s, seed), ex);
    {
      rl::MetricsWriter writer(out.dir / "metrics.csv");
      trainer.run([&](const rl::StepMetrics& m) { writer.write(m); });
    }
    trainer.save(out.dir / "checkpoint");
    out.test = run_testing(trainer.mean_policy(), cfg);
    out.log = read_metrics_csv(out.dir / "metrics.csv");
    out.smoothed = smoothed_success(out.log);
  }
  nn::write_json_file(out.dir / "test.json", to_json(out.test));
  nn::write_json_file(out.dir / "config.json", snapshot);
  return out;
}

inline std::vector<SeedRun> run_training(const fs::path& root, const RunSpec& s, const Log& log = {}) {
  validate(s);
  std::vector<SeedRun> runs;
  for (std::uint64_t seed : s.seeds) runs.push_back(run_seed(root, s, seed, log));
  return runs;
}

inline std::vector<double> test_percents(const std::vector<SeedRun>& runs) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.test.success_percent);
  return v;
}

/// Writes the per-step mean curve with its 95% band (every 100 steps).
inline void write_curve_csv(const fs::path& path, const std::vector<SeedRun>& runs) {
  std::vector<std::vector<double>> curves;
  for (const auto& r : runs) curves.push_back(r.smoothed);
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "step,mean,ci95\n";
  for (const auto& p : aggregate_curves(curves, 100)) out << p.step << ',' << p.mean << ',' << p.half_width << '\n';
}

// ---------------------------------------------------------------- tables

struct TableRow {
  std::string key;
  std::string scenario;
  std::vector<double> per_seed;  // testing success %
  double median = 0.0;
  MeanCi mean;
  double duration_mean = 0.0;    // averaged over seeds with successes
};

inline TableRow table_row(const std::string& key, const RunSpec& s, const std::vector<SeedRun>& runs) {
  TableRow row;
  row.key = key;
  row.scenario = sim::to_string(s.scenario);
  row.per_seed = test_percents(runs);
  row.median = median(row.per_seed);
  row.mean = mean_ci95(row.per_seed);
  int n = 0;
  for (const auto& r : runs)
    if (r.test.successes > 0) {
      row.duration_mean += r.test.duration_mean;
      ++n;
    }
  if (n > 0) row.duration_mean /= n;
  return row;
}

inline void write_table(const fs::path& stem, const std::vector<TableRow>& rows) {
  fs::create_directories(stem.parent_path());
  {
    std::ofstream csv(stem.string() + ".csv");
    csv << "key,scenario,median_success_pct,mean_success_pct,ci95,duration_s,per_seed\n";
    for (const auto& r : rows) {
      csv << r.key << ',' << r.scenario << ',' << r.median << ',' << r.mean.mean << ',' << r.mean.half_width << ','
          << r.duration_mean << ',';
      for (std::size_t i = 0; i < r.per_seed.size(); ++i) csv << (i ? ";" : "") << r.per_seed[i];
      csv << '\n';
    }
  }
  std::ofstream txt(stem.string() + ".txt");
  txt << std::left << std::setw(34) << "key" << std::setw(12) << "scenario" << std::right << std::setw(10) << "median%"
      << std::setw(10) << "mean%" << std::setw(8) << "+-" << std::setw(10) << "dur(s)" << "  per-seed\n";
  for (const auto& r : rows) {
    txt << std::left << std::setw(34) << r.key << std::setw(12) << r.scenario << std::right << std::fixed
        << std::setprecision(1) << std::setw(10) << r.median << std::setw(10) << r.mean.mean << std::setw(8)
        << r.mean.half_width << std::setw(10) << r.duration_mean << "  ";
    for (double v : r.per_seed) txt << v << ' ';
    txt << '\n';
  }
}

/// Runs every spec and collects one table row each, keyed by `keys`.
inline std::vector<TableRow> run_ablation(const fs::path& root, const std::vector<std::pair<std::string, RunSpec>>& grid,
                                          const Log& log = {}) {
  std::vector<TableRow> rows;
  for (const auto& [key, spec] : grid) rows.push_back(table_row(key, spec, run_training(root, spec, log)));
  return rows;
}

}  // namespace ierl::bench

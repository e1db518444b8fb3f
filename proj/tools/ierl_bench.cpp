// ierl_bench: training, testing and ablation driver.
#include "ierl/bench/pipeline.hpp"
#include "ierl/service/session.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

using namespace ierl;
namespace fs = std::filesystem;

namespace {

void say(const std::string& s) { std::cerr << "[ierl] " << s << std::endl; }

/// Flags shared by everything that builds a RunSpec.
struct SpecFlags {
  std::string method = "value_penalty";
  std::string scenario = "left_turn";
  std::string behavior = "aggressive";
  std::string expert_mode = "ensemble";
  std::string reward = "sparse";
  int demos = 40;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int steps = 30000;
  int warmup = 5000;
  std::vector<int> hidden{64, 64};
  std::uint64_t expert_seed = 1;

  void add(CLI::App* app) {
    app->add_option("--method", method, "sac | value_penalty | policy_constraint | bc")->capture_default_str();
    app->add_option("--scenario", scenario, "left_turn | roundabout")->capture_default_str();
    app->add_option("--behavior", behavior, "aggressive | conservative | neutral")->capture_default_str();
    app->add_option("--expert-mode", expert_mode, "ensemble | single_gaussian | fixed_std")->capture_default_str();
    app->add_option("--reward", reward, "sparse | shaped (shaped only with sac)")->capture_default_str();
    app->add_option("--demos", demos, "demonstration trajectories for the expert")->capture_default_str();
    app->add_option("--seeds", seeds, "training seeds")->capture_default_str();
    app->add_option("--steps", steps, "environment steps per run")->capture_default_str();
    app->add_option("--warmup", warmup, "uniform-random steps before updates")->capture_default_str();
    app->add_option("--hidden", hidden, "hidden layer widths")->capture_default_str();
    app->add_option("--expert-seed", expert_seed, "expert initialization seed")->capture_default_str();
  }

  bench::RunSpec spec() const {
    bench::RunSpec s;
    s.method = bench::method_from_string(method);
    s.scenario = sim::scenario_from_string(scenario);
    s.behavior = expert::behavior_from_string(behavior);
    s.expert_mode = expert::expert_mode_from_string(expert_mode);
    if (reward != "sparse" && reward != "shaped") throw std::invalid_argument("unknown reward mode: " + reward);
    s.reward = reward == "shaped" ? sim::RewardMode::Shaped : sim::RewardMode::Sparse;
    s.demo_count = demos;
    s.seeds = seeds;
    s.total_steps = steps;
    s.warmup_steps = warmup;
    s.hidden = hidden;
    s.expert_seed = expert_seed;
    bench::validate(s);
    return s;
  }
};

void print_test(const std::string& what, const bench::TestResult& t) {
  std::cout << what << ": success " << t.success_percent << "% (" << t.successes << "/" << t.episodes << ")";
  if (t.successes > 0) std::cout << ", duration " << t.duration_mean << " +- " << t.duration_std << " s";
  std::cout << ", collisions " << t.collisions << ", off-road " << t.off_road << ", timeouts " << t.timeouts << '\n';
}

int cmd_train(const fs::path& root, const SpecFlags& f) {
  const auto spec = f.spec();
  const auto runs = bench::run_training(root, spec, say);
  for (const auto& r : runs) print_test(spec.label() + " seed " + std::to_string(r.seed), r.test);
  if (spec.method != bench::Method::Bc) {
    const fs::path curve = root / "curves" / (spec.label() + ".csv");
    bench::write_curve_csv(curve, runs);
    std::cout << "curve: " << curve.string() << '\n';
  }
  const auto row = bench::table_row(spec.label(), spec, runs);
  std::cout << "median " << row.median << "%, mean " << row.mean.mean << " +- " << row.mean.half_width << "%\n";
  return 0;
}

int cmd_test(const fs::path& checkpoint, const std::string& scenario) {
  sim::SimConfig cfg;
  cfg.kind = sim::scenario_from_string(scenario);
  const auto t = bench::run_testing(checkpoint, cfg);
  print_test(checkpoint.string(), t);
  std::cout << bench::to_json(t).dump(2) << '\n';
  return 0;
}

int cmd_ablate(const fs::path& root, const std::string& kind, const SpecFlags& f) {
  std::vector<std::pair<std::string, bench::RunSpec>> grid;
  bench::RunSpec base = f.spec();
  if (kind == "uncertainty") {
    for (auto m : {expert::ExpertMode::Ensemble, expert::ExpertMode::SingleGaussian, expert::ExpertMode::FixedStd}) {
      auto s = base;
      s.expert_mode = m;
      grid.emplace_back(expert::to_string(m), s);
    }
  } else if (kind == "sample-size") {
    for (int n : {10, 20, 40}) {
      auto s = base;
      s.demo_count = n;
      grid.emplace_back("n" + std::to_string(n), s);
    }
  } else {
    throw std::invalid_argument("unknown ablation '" + kind + "' (uncertainty | sample-size)");
  }
  const auto rows = bench::run_ablation(root, grid, say);
  const fs::path stem = root / "tables" / (kind + "_" + sim::to_string(base.scenario) + "_" + bench::to_string(base.method));
  bench::write_table(stem, rows);
  std::ifstream txt(stem.string() + ".txt");
  std::cout << txt.rdbuf();
  return 0;
}

int cmd_demo_record(const std::string& scenario, const std::string& behavior, int count, const fs::path& out,
                    const fs::path& cmdlog) {
  if (!cmdlog.empty()) {
    const auto d = service::replay_command_log(service::load_command_log(cmdlog));
    if (d.outcome != sim::to_string(sim::Outcome::GoalReached)) {
      std::cout << "replayed episode ended with " << d.outcome << "; nothing written\n";
      return 1;
    }
    const fs::path target = out.extension() == ".json" ? out : out / (cmdlog.stem().string() + ".json");
    expert::save_demonstration(target, d);
    std::cout << target.string() << ": " << d.pairs.size() << " pairs\n";
    return 0;
  }
  sim::SimConfig cfg;
  cfg.kind = sim::scenario_from_string(scenario);
  const auto ds = expert::generate_scripted_demos(cfg, expert::behavior_from_string(behavior), static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "demo_%04zu.json", i);
    expert::save_demonstration(out / name, ds.trajectories[i]);
  }
  std::cout << ds.trajectories.size() << " demonstrations (" << ds.pair_count() << " pairs) in " << out.string() << '\n';
  return 0;
}

int cmd_expert_train(const fs::path& demos, const fs::path& out, const std::string& mode, int members, int count,
                     std::uint64_t seed, const std::vector<int>& hidden) {
  std::size_t skipped = 0;
  auto ds = expert::load_dataset(demos, &skipped);
  if (skipped) say("skipped " + std::to_string(skipped) + " unsuccessful demonstrations");
  if (count > 0) ds = ds.first(static_cast<std::size_t>(count));
  expert::ExpertConfig cfg;
  cfg.mode = expert::expert_mode_from_string(mode);
  cfg.members = members;
  cfg.seed = seed;
  cfg.bc.hidden = hidden;
  std::vector<expert::BcResult> runs;
  const auto ex = expert::train_expert(ds, cfg, &runs);
  ex.save(out);
  std::cout << "trained " << expert::to_string(cfg.mode) << " expert (" << ex.member_count() << " members) on "
            << ds.pair_count() << " pairs -> " << out.string() << '\n';
  const auto m = expert::to_matrices(ds);
  std::cout << "median in-distribution variance: " << expert::median_variance(ex, m.states) << '\n';
  return 0;
}

int cmd_report(const fs::path& root, const std::string& a, const std::string& b, double level) {
  const fs::path runs_dir = root / "runs";
  if (!fs::is_directory(runs_dir)) throw std::runtime_error("no runs under " + root.string());
  std::vector<bench::TableRow> rows;
  std::map<std::string, std::vector<std::vector<double>>> curves;
  std::vector<fs::path> labels;
  for (const auto& e : fs::directory_iterator(runs_dir))
    if (e.is_directory()) labels.push_back(e.path());
  std::sort(labels.begin(), labels.end());
  for (const auto& dir : labels) {
    std::vector<bench::SeedRun> seeds;
    bench::RunSpec spec;
    for (const auto& s : fs::directory_iterator(dir)) {
      if (!fs::exists(s.path() / "test.json") || !fs::exists(s.path() / "config.json")) continue;
      spec = bench::run_spec_from_json(nn::read_json_file(s.path() / "config.json"));
      bench::SeedRun r;
      r.dir = s.path();
      r.test = bench::test_result_from_json(nn::read_json_file(s.path() / "test.json"));
      if (fs::exists(s.path() / "metrics.csv")) {
        r.log = bench::read_metrics_csv(s.path() / "metrics.csv");
        r.smoothed = bench::smoothed_success(r.log);
        curves[dir.filename().string()].push_back(r.smoothed);
      }
      seeds.push_back(std::move(r));
    }
    if (!seeds.empty()) rows.push_back(bench::table_row(dir.filename().string(), spec, seeds));
  }
  bench::write_table(root / "tables" / "report", rows);
  std::ifstream txt((root / "tables" / "report.txt").string());
  std::cout << txt.rdbuf();
  if (!a.empty() && !b.empty()) {
    if (!curves.count(a) || !curves.count(b)) throw std::runtime_error("no curves for " + a + " or " + b);
    auto mean_curve = [](const std::vector<std::vector<double>>& cs) {
      std::size_t len = cs.front().size();
      for (const auto& c : cs) len = std::min(len, c.size());
      std::vector<double> m(len, 0.0);
      for (const auto& c : cs)
        for (std::size_t i = 0; i < len; ++i) m[i] += c[i] / static_cast<double>(cs.size());
      return m;
    };
    const auto e = bench::sample_efficiency(mean_curve(curves[a]), mean_curve(curves[b]), level);
    if (e.reachable)
      std::cout << "sample efficiency at " << level << ": " << e.step_a << " / " << e.step_b << " = " << e.ratio << '\n';
    else
      std::cout << "sample efficiency at " << level << ": unreachable (" << (e.step_a ? "" : a + " ")
                << (e.step_b ? "" : b + " ") << "never reached it)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert-prior reinforcement learning benchmark"};
  app.require_subcommand(1);
  fs::path root = "ierl_runs";
  app.add_option("--root", root, "run directory")->capture_default_str();

  SpecFlags train_flags;
  auto* train = app.add_subcommand("train", "train a method across seeds and test it on held-out flows");
  train_flags.add(train);

  fs::path checkpoint;
  std::string test_scenario = "left_turn";
  auto* test = app.add_subcommand("test", "test a saved checkpoint on the 50 held-out flows");
  test->add_option("checkpoint", checkpoint, "checkpoint directory")->required();
  test->add_option("--scenario", test_scenario)->capture_default_str();

  SpecFlags ablate_flags;
  std::string ablation = "uncertainty";
  auto* ablate = app.add_subcommand("ablate", "expert uncertainty or demo sample-size ablation");
  ablate->add_option("kind", ablation, "uncertainty | sample-size")->required();
  ablate_flags.add(ablate);

  std::string rec_scenario = "left_turn", rec_behavior = "aggressive";
  int rec_count = 40;
  fs::path rec_out = "demos", rec_cmdlog;
  auto* record = app.add_subcommand("demo-record", "generate scripted demonstrations, or replay a command log");
  record->add_option("--scenario", rec_scenario)->capture_default_str();
  record->add_option("--behavior", rec_behavior)->capture_default_str();
  record->add_option("--count", rec_count)->capture_default_str();
  record->add_option("--out", rec_out, "output directory (or .json file with --cmdlog)")->capture_default_str();
  record->add_option("--cmdlog", rec_cmdlog, "re-drive a recorded .cmdlog headlessly");

  fs::path ex_demos, ex_out = "expert.json";
  std::string ex_mode = "ensemble";
  int ex_members = 5, ex_count = 0;
  std::uint64_t ex_seed = 1;
  std::vector<int> ex_hidden{64, 64};
  auto* ex = app.add_subcommand("expert-train", "train an imitative expert from demonstration files");
  ex->add_option("--demos", ex_demos, "demonstration directory")->required();
  ex->add_option("--out", ex_out)->capture_default_str();
  ex->add_option("--mode", ex_mode, "ensemble | single_gaussian | fixed_std")->capture_default_str();
  ex->add_option("--members", ex_members)->capture_default_str();
  ex->add_option("--count", ex_count, "use only the first n demonstrations (0 = all)")->capture_default_str();
  ex->add_option("--seed", ex_seed)->capture_default_str();
  ex->add_option("--hidden", ex_hidden)->capture_default_str();

  std::string eff_a, eff_b;
  double eff_level = 0.5;
  auto* report = app.add_subcommand("report", "tabulate every finished run under --root");
  report->add_option("--efficiency-a", eff_a, "run label A for the sample-efficiency ratio");
  report->add_option("--efficiency-b", eff_b, "run label B");
  report->add_option("--level", eff_level)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(root, train_flags);
    if (*test) return cmd_test(checkpoint, test_scenario);
    if (*ablate) return cmd_ablate(root, ablation, ablate_flags);
    if (*record) return cmd_demo_record(rec_scenario, rec_behavior, rec_count, rec_out, rec_cmdlog);
    if (*ex) return cmd_expert_train(ex_demos, ex_out, ex_mode, ex_members, ex_count, ex_seed, ex_hidden);
    if (*report) return cmd_report(root, eff_a, eff_b, eff_level);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}

#pragma once

#include "ierl/sim/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace ierl::sim {

/// Clips an action into the [-1, 1]^2 box (the environment boundary).
inline Action clip_action(Action a) {
  return {std::clamp(a.v_norm, -1.0, 1.0), std::clamp(a.l_norm, -1.0, 1.0)};
}

struct EpisodeSummary {
  std::uint64_t flow_seed = 0;
  Outcome outcome = Outcome::Running;
  int ticks = 0;
  double duration_s = 0.0;
  double episodic_return = 0.0;
};

using PolicyFn = std::function<Action(const Observation&)>;

inline EpisodeSummary run_episode(TrafficEnv& env, const TrafficFlow& flow, std::uint64_t episode, const PolicyFn& policy) {
  env.reset(flow, episode);
  EpisodeSummary s;
  s.flow_seed = flow.seed;
  while (!env.done()) {
    const StepResult r = env.step(clip_action(policy(env.observation())));
    s.episodic_return += r.reward;
  }
  s.outcome = env.outcome();
  s.ticks = env.tick();
  s.duration_s = env.tick() * env.config().dt;
  return s;
}

struct EvalResult {
  std::vector<EpisodeSummary> episodes;

  int successes() const {
    return static_cast<int>(std::count_if(episodes.begin(), episodes.end(),
                                          [](const EpisodeSummary& e) { return e.outcome == Outcome::GoalReached; }));
  }
  double success_rate() const { return episodes.empty() ? 0.0 : static_cast<double>(successes()) / episodes.size(); }
  double success_percent() const { return 100.0 * success_rate(); }

  /// Mean and (population) std of durations over successful episodes only.
  std::pair<double, double> duration_stats() const {
    std::vector<double> d;
    for (const auto& e : episodes)
      if (e.outcome == Outcome::GoalReached) d.push_back(e.duration_s);
    if (d.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= d.size();
    double var = 0.0;
    for (double x : d) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / d.size())};
  }
};

/// One episode per flow, each flow with episode index `episode`.
inline EvalResult evaluate_policy(TrafficEnv& env, const std::vector<TrafficFlow>& flows, const PolicyFn& policy,
                                  std::uint64_t episode = 0) {
  EvalResult r;
  for (const auto& f : flows) r.episodes.push_back(run_episode(env, f, episode, policy));
  return r;
}

}  // namespace ierl::sim

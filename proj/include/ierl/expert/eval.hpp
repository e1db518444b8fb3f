#pragma once

#include "ierl/expert/ensemble.hpp"
#include "ierl/sim/rollout.hpp"

namespace ierl::expert {

/// Drives the environment with the expert's mean action (the BC baseline).
inline sim::EvalResult eval_bc_policy(const ExpertPolicy& expert, sim::TrafficEnv& env,
                                      const std::vector<sim::TrafficFlow>& flows, std::uint64_t episode = 0) {
  return sim::evaluate_policy(
      env, flows,
      [&](const sim::Observation& o) {
        const auto m = expert.mean_action(o.values);
        return sim::Action{m[0], m[1]};
      },
      episode);
}

/// Median pre-floor variance (summed over action dims) across a batch of states.
inline double median_variance(const ExpertPolicy& expert, const Matrix<float>& states) {
  const auto q = expert.query(states);
  std::vector<double> v;
  for (Eigen::Index c = 0; c < q.variance.cols(); ++c) v.push_back(q.variance.col(c).sum());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace ierl::expert

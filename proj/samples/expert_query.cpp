// Trains a small expert ensemble on scripted demonstrations and queries it
// on and off the demonstrated states.
#include "ierl/expert/eval.hpp"

#include <iostream>

using namespace ierl;

int main() {
  sim::SimConfig cfg;
  const auto ds = expert::generate_scripted_demos(cfg, expert::Behavior::Aggressive, 10);
  expert::ExpertConfig ec;
  ec.bc.epochs = 30;
  const auto ex = expert::train_expert(ds, ec);
  const auto m = expert::to_matrices(ds);
  const Eigen::Index cols[3] = {0, m.states.cols() / 3, 2 * m.states.cols() / 3};
  nn::Matrix<float> picked(m.states.rows(), 3), acts(2, 3);
  for (int i = 0; i < 3; ++i) picked.col(i) = m.states.col(cols[i]), acts.col(i) = m.actions.col(cols[i]);
  const auto q = ex.query(picked);
  for (int i = 0; i < 3; ++i)
    std::cout << "state " << i << ": demo (" << acts(0, i) << ", " << acts(1, i) << ")  expert mean ("
              << q.mean(0, i) << ", " << q.mean(1, i) << ") std (" << q.std(0, i) << ", " << q.std(1, i) << ")\n";
  std::cout << "median variance, demonstrated states: " << expert::median_variance(ex, m.states) << '\n';
  std::cout << "median variance, empty grids:         " << expert::median_variance(ex, nn::Matrix<float>::Zero(m.states.rows(), 20))
            << '\n';
  sim::TrafficEnv env(cfg);
  const auto r = expert::eval_bc_policy(ex, env, sim::make_flows({cfg.test_seeds.first, 10}, cfg.traffic));
  std::cout << "mean-action success on 10 test flows: " << r.success_percent() << "%\n";
}

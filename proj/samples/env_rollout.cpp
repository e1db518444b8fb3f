// Drives one left-turn episode at a constant target speed and writes the ego trace.
#include "ierl/sim/rollout.hpp"

#include <iostream>

using namespace ierl;

int main(int argc, char** argv) {
  sim::SimConfig cfg;
  if (argc > 1) cfg.kind = sim::scenario_from_string(argv[1]);
  const double v_norm = argc > 2 ? std::stod(argv[2]) : 0.2;
  sim::TrafficEnv env(cfg);
  const auto flow = sim::make_flow(cfg.test_seeds.first, cfg.traffic);
  const auto summary = sim::run_episode(env, flow, 0, [&](const sim::Observation&) { return sim::Action{v_norm, 0.0}; });
  std::cout << sim::to_string(cfg.kind) << ": " << sim::to_string(summary.outcome) << " after " << summary.ticks
            << " ticks (" << summary.duration_s << " s), return " << summary.episodic_return << '\n';
  sim::write_trace_csv("trace.csv", env.trace());
  std::cout << "observation: " << env.observation_size() << " floats; trace written to trace.csv\n";
}

// A short value-penalty run (a few thousand steps) with per-1000-step progress.
#include "ierl/bench/curves.hpp"
#include "ierl/rl/trainer.hpp"

#include <iostream>

using namespace ierl;

int main(int argc, char** argv) {
  const int steps = argc > 1 ? std::stoi(argv[1]) : 3000;
  sim::SimConfig cfg;
  const auto ds = expert::generate_scripted_demos(cfg, expert::Behavior::Aggressive, 10);
  expert::ExpertConfig ec;
  ec.members = 2;
  ec.bc.epochs = 30;
  auto ex = std::make_shared<expert::ExpertPolicy>(expert::train_expert(ds, ec));

  rl::TrainConfig tc;
  tc.total_steps = steps;
  tc.warmup_steps = steps / 3;
  rl::Trainer trainer(cfg, tc, ex);
  std::vector<int> outcomes;
  double kl = 0.0;
  trainer.run([&](const rl::StepMetrics& m) {
    if (m.episode_end) outcomes.push_back(m.success);
    kl += m.kl_mean;
    if (m.step % 1000 == 0) {
      std::cout << "step " << m.step << "  episodes " << outcomes.size() << "  success(last 20) "
                << bench::success_rate_last(outcomes) << "  mean KL " << kl / 1000.0 << '\n';
      kl = 0.0;
    }
  });
  trainer.save("tiny_checkpoint");
  std::cout << "checkpoint written to tiny_checkpoint/\n";
}

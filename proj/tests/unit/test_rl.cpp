#include "ierl/rl/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace ierl;
using nn::Matrix;

namespace {

rl::Transition transition(int dim, float tag) {
  rl::Transition t;
  t.state.assign(static_cast<std::size_t>(dim), tag);
  t.next_state.assign(static_cast<std::size_t>(dim), tag + 0.5f);
  t.action = {tag, -tag};
  t.reward = tag;
  t.expert_mean = {0.1f * tag, 0.0f};
  t.expert_std = {1.0f, 2.0f};
  return t;
}

rl::TrainConfig small(rl::Variant v) {
  rl::TrainConfig c;
  c.variant = v;
  c.hidden = {16};
  c.warmup_steps = 100;
  c.total_steps = 300;
  c.buffer_capacity = 1000;
  c.batch_size = 8;
  return c;
}

std::shared_ptr<const expert::ExpertPolicy> untrained_expert(int dim) {
  return std::make_shared<expert::ExpertPolicy>(expert::ExpertMode::Ensemble,
                                                std::vector<nn::Mlp<float>>{nn::Mlp<float>({dim, 8, 4}, 4)}, 0.1, 0.2);
}

}  // namespace

// ------------------------------------------------------------ replay

TEST(Replay, SizeIsMinOfPushesAndCapacity) {
  rl::ReplayBuffer buf(5, 3, true);
  for (int i = 0; i < 12; ++i) {
    buf.push(transition(3, static_cast<float>(i)));
    EXPECT_EQ(buf.size(), std::min<std::size_t>(i + 1, 5));
  }
  EXPECT_EQ(buf.total_pushed(), 12u);
  // the oldest entries were overwritten: only 7..11 remain
  const auto b = buf.gather({0, 1, 2, 3, 4});
  std::multiset<float> seen(b.rewards.data(), b.rewards.data() + 5);
  EXPECT_EQ(seen, (std::multiset<float>{7, 8, 9, 10, 11}));
  for (Eigen::Index k = 0; k < 5; ++k) {
    EXPECT_EQ(b.states(0, k), b.rewards(k));
    EXPECT_EQ(b.next_states(2, k), b.rewards(k) + 0.5f);
    EXPECT_EQ(b.actions(1, k), -b.rewards(k));
    EXPECT_FLOAT_EQ(b.expert_mean(0, k), 0.1f * b.rewards(k));
    EXPECT_EQ(b.expert_std(1, k), 2.0f);
  }
}

TEST(Replay, SamplesDistinctIndices) {
  rl::ReplayBuffer buf(64, 2, false);
  for (int i = 0; i < 40; ++i) buf.push(transition(2, static_cast<float>(i)));
  std::mt19937_64 rng(5);
  std::vector<int> counts(40, 0);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto idx = buf.sample_indices(32, rng);
    ASSERT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 32u);
    for (auto i : idx) {
      ASSERT_LT(i, 40u);
      ++counts[i];
    }
  }
  // each slot is chosen with probability 32/40
  for (int c : counts) EXPECT_NEAR(c / 2000.0, 0.8, 0.05);
  const auto all = buf.sample_indices(40, rng);
  EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), 40u);
}

TEST(Replay, Errors) {
  EXPECT_THROW(rl::ReplayBuffer(0, 2, false), std::invalid_argument);
  rl::ReplayBuffer buf(4, 2, false);
  std::mt19937_64 rng(1);
  EXPECT_THROW(buf.sample_indices(1, rng), std::invalid_argument);
  EXPECT_THROW(buf.push(transition(3, 0.0f)), std::invalid_argument);
  buf.push(transition(2, 0.0f));
  EXPECT_THROW(buf.sample_indices(2, rng), std::invalid_argument);
  EXPECT_THROW(buf.gather({1}), std::out_of_range);
}

// ------------------------------------------------------------ trainer

TEST(Trainer, NoUpdatesDuringWarmup) {
  rl::Trainer t(sim::SimConfig{}, small(rl::Variant::ActorCritic));
  for (int i = 0; i < 100; ++i) EXPECT_FALSE(t.step().updated);
  EXPECT_EQ(t.updates(), 0);
  EXPECT_EQ(t.buffer().size(), 100u);
  EXPECT_TRUE(t.step().updated);
  EXPECT_EQ(t.updates(), 1);
}

TEST(Trainer, RunIsDeterministic) {
  for (auto v : {rl::Variant::ValuePenalty, rl::Variant::Sac}) {
    auto go = [&](std::uint64_t seed) {
      auto cfg = small(v);
      cfg.seed = seed;
      rl::Trainer t(sim::SimConfig{}, cfg, rl::uses_expert(v) ? untrained_expert(2304) : nullptr);
      std::vector<std::string> rows;
      t.run([&](const rl::StepMetrics& m) { rows.push_back(rl::metrics_row(m)); });
      return std::make_pair(rows, t.nets().policy.params().flatten());
    };
    const auto a = go(3), b = go(3), c = go(4);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
    EXPECT_NE(a.second, c.second);
    EXPECT_EQ(a.first.size(), 300u);
  }
}

TEST(Trainer, PriorVariantsNeedAnExpert) {
  EXPECT_THROW(rl::Trainer(sim::SimConfig{}, small(rl::Variant::ValuePenalty)), std::invalid_argument);
  EXPECT_THROW(rl::Trainer(sim::SimConfig{}, small(rl::Variant::PolicyConstraint), untrained_expert(10)),
               std::invalid_argument);
  auto shaped = small(rl::Variant::ValuePenalty);
  shaped.reward = sim::RewardMode::Shaped;
  EXPECT_THROW(rl::Trainer(sim::SimConfig{}, shaped, untrained_expert(2304)), std::invalid_argument);
}

TEST(Trainer, StrongPenaltyPullsPolicyToExpert) {
  // A bandit-like fixed batch with zero reward: the only signal is the prior.
  auto run = [](double alpha) {
    auto cfg = small(alpha > 0 ? rl::Variant::ValuePenalty : rl::Variant::ActorCritic);
    cfg.kl_alpha = alpha;
    cfg.learning_rate = 3e-3;
    rl::Trainer t(sim::SimConfig{}, cfg, alpha > 0 ? untrained_expert(2304) : nullptr);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(0, 1);
    rl::Batch<float> b;
    b.states = Matrix<float>::NullaryExpr(2304, 16, [&] { return u(rng); });
    b.next_states = b.states;
    b.actions = Matrix<float>::Zero(2, 16);
    b.rewards = nn::RowVector<float>::Zero(16);
    b.terminal = nn::RowVector<float>::Ones(16);
    b.expert_mean = Matrix<float>::Constant(2, 16, 0.5f);
    b.expert_std = Matrix<float>::Constant(2, 16, 0.2f);
    std::normal_distribution<float> n01(0, 1);
    for (int i = 0; i < 400; ++i) t.update_on(b, Matrix<float>::NullaryExpr(2, 16, [&] { return n01(rng); }));
    double err = 0;
    for (Eigen::Index k = 0; k < 16; ++k) {
      const std::vector<float> s(b.states.col(k).data(), b.states.col(k).data() + 2304);
      const auto a = t.mean_action(s);
      err = std::max({err, std::abs(a.v_norm - 0.5), std::abs(a.l_norm - 0.5)});
    }
    return err;
  };
  EXPECT_LT(run(10.0), 0.05);
  EXPECT_GT(run(0.0), 0.2);
}

TEST(Trainer, ConstraintMultiplierStaysNonNegative) {
  auto cfg = small(rl::Variant::PolicyConstraint);
  cfg.kl_epsilon = 1e6;
  cfg.lambda_lr = 0.1;
  rl::Trainer t(sim::SimConfig{}, cfg, untrained_expert(2304));
  t.run([&](const rl::StepMetrics& m) {
    EXPECT_GE(m.lambda_or_alpha, 0.0);
  });
  EXPECT_EQ(t.lambda(), 0.0);
}

TEST(Trainer, SaveAndLoadPolicy) {
  const auto dir = std::filesystem::temp_directory_path() / "ierl_trainer_test";
  std::filesystem::remove_all(dir);
  auto cfg = small(rl::Variant::Sac);
  cfg.total_steps = 120;
  rl::Trainer t(sim::SimConfig{}, cfg);
  t.run();
  t.save(dir);
  const auto p = rl::load_policy(dir);
  const auto& s = t.env().observation().values;
  EXPECT_EQ(p.mean_action(s).v_norm, t.mean_action(s).v_norm);
  EXPECT_EQ(p.mean_action(s).l_norm, t.mean_action(s).l_norm);
  const auto meta = nn::read_json_file(dir / "trainer.json");
  EXPECT_EQ(meta.at("steps"), 120);
  EXPECT_EQ(meta.at("updates"), 20);
  std::filesystem::remove_all(dir);
}

// ------------------------------------------------------------ config and metrics

TEST(TrainConfigJson, RoundTripAndValidation) {
  auto c = small(rl::Variant::PolicyConstraint);
  c.kl_mode = rl::KlMode::SingleSample;
  c.seed = 77;
  const auto back = rl::train_config_from_json(rl::to_json(c));
  EXPECT_EQ(rl::to_json(back), rl::to_json(c));
  EXPECT_EQ(back.seed, 77u);

  auto bad = c;
  bad.gamma = 1.5;
  EXPECT_THROW(rl::validate(bad), std::invalid_argument);
  bad = c;
  bad.batch_size = 2000;
  EXPECT_THROW(rl::validate(bad), std::invalid_argument);
  bad = c;
  bad.kl_alpha = -1;
  EXPECT_THROW(rl::validate(bad), std::invalid_argument);
}

TEST(Metrics, RowFormat) {
  rl::StepMetrics m;
  m.step = 12;
  m.episode = 3;
  m.variant = rl::Variant::PolicyConstraint;
  m.q_loss = 0.5;
  m.lambda_or_alpha = 0.01;
  EXPECT_EQ(rl::metrics_row(m), "12,3,policy_constraint,0.5,0,0,0,0.01,,");
  m.episode_end = true;
  m.episodic_return = -1;
  EXPECT_EQ(rl::metrics_row(m), "12,3,policy_constraint,0.5,0,0,0,0.01,-1,0");
  EXPECT_EQ(std::count(rl::kMetricsHeader, rl::kMetricsHeader + std::strlen(rl::kMetricsHeader), ','), 9);
}

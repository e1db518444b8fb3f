#include "ierl/rl/losses.hpp"
#include "loss_fixture.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ierl;
using nn::Matrix;
using nn::RowVector;
using rl::Variant;

using check::make_fixture;
using check::smooth_fixtures;

namespace {

constexpr Variant kAll[] = {Variant::ActorCritic, Variant::Sac, Variant::ValuePenalty, Variant::PolicyConstraint};

}  // namespace

TEST(QLoss, HandEvaluatedSingleTransition) {
  auto f = make_fixture(1, 1);
  f.batch.terminal(0) = 0.0;
  const auto q = rl::q_loss(f.nets, f.batch, f.c);
  const double target = f.batch.rewards(0) + 0.99 * f.nets.v_target.forward(f.batch.next_states)(0, 0);
  const Matrix<double> sa = rl::concat_rows(f.batch.states, f.batch.actions);
  const double e1 = f.nets.q1.forward(sa)(0, 0) - target, e2 = f.nets.q2.forward(sa)(0, 0) - target;
  EXPECT_NEAR(q.loss1, e1 * e1, 1e-10);
  EXPECT_NEAR(q.loss2, e2 * e2, 1e-10);
}

TEST(QLoss, TerminalTargetIsReward) {
  auto f = make_fixture(2);
  const auto q = rl::q_loss(f.nets, f.batch, f.c);
  EXPECT_EQ(q.target(0), f.batch.rewards(0));
  EXPECT_NE(q.target(1), f.batch.rewards(1));
}

TEST(QLoss, ZeroWhenQEqualsTarget) {
  auto f = make_fixture(3, 1);
  f.batch.terminal(0) = 1.0;
  for (auto* net : {&f.nets.q1, &f.nets.q2}) {
    for (auto& w : net->params().weights) w.setZero();
    net->params().biases.back()(0) = f.batch.rewards(0);
  }
  const auto q = rl::q_loss(f.nets, f.batch, f.c);
  EXPECT_EQ(q.loss1, 0.0);
  EXPECT_EQ(q.loss2, 0.0);
}

TEST(QLoss, EmptyBatchThrows) {
  auto f = make_fixture(4);
  rl::Batch<double> empty;
  empty.states = Matrix<double>(3, 0);
  EXPECT_THROW(rl::q_loss(f.nets, empty, f.c), std::invalid_argument);
}

TEST(VLoss, HandEvaluatedSingleState) {
  auto f = make_fixture(5, 1);
  const auto e = rl::evaluate_actor(f.nets, f.batch, f.noise, f.c);
  const double v = f.nets.v.forward(f.batch.states)(0, 0);
  const double qmin = std::min(e.q1(0), e.q2(0));
  const double kl = rl::kl_gaussians<double>(e.dist.mean, e.dist.std, f.batch.expert_mean, f.batch.expert_std,
                                             rl::KlMode::ClosedForm).value(0);
  EXPECT_NEAR(rl::v_loss(f.nets, f.batch, e, Variant::ActorCritic, f.c).loss, std::pow(v - qmin, 2), 1e-10);
  EXPECT_NEAR(rl::v_loss(f.nets, f.batch, e, Variant::ValuePenalty, f.c).loss, std::pow(v - (qmin - 0.3 * kl), 2), 1e-10);
  EXPECT_NEAR(rl::v_loss(f.nets, f.batch, e, Variant::Sac, f.c).loss,
              std::pow(v - (qmin - 0.2 * e.sample.log_prob(0)), 2), 1e-10);
}

TEST(VLoss, PenaltyWithMatchingExpertIsBaseline) {
  auto f = make_fixture(6);
  const auto g = nn::gaussian_from_head(f.nets.policy.forward(f.batch.states));
  f.batch.expert_mean = g.mean;
  f.batch.expert_std = g.std;
  const auto e = rl::evaluate_actor(f.nets, f.batch, f.noise, f.c);
  EXPECT_EQ(e.kl->value.maxCoeff(), 0.0);
  EXPECT_EQ(rl::v_loss(f.nets, f.batch, e, Variant::ValuePenalty, f.c).loss,
            rl::v_loss(f.nets, f.batch, e, Variant::ActorCritic, f.c).loss);
}

TEST(VLoss, PenaltyNeedsExpert) {
  auto f = make_fixture(7);
  f.batch.expert_mean.resize(0, 0);
  f.batch.expert_std.resize(0, 0);
  EXPECT_THROW(rl::v_loss(f.nets, f.batch, f.noise, Variant::ValuePenalty, f.c), std::invalid_argument);
  EXPECT_THROW(rl::policy_loss(f.nets, f.batch, f.noise, Variant::PolicyConstraint, f.c), std::invalid_argument);
}

TEST(Losses, DoubleQPessimism) {
  auto f = make_fixture(8, 32);
  const auto e = rl::evaluate_actor(f.nets, f.batch, f.noise, f.c);
  const auto vl = rl::v_loss(f.nets, f.batch, e, Variant::ActorCritic, f.c);
  for (Eigen::Index j = 0; j < 32; ++j) {
    EXPECT_LE(vl.target(j), e.q1(j));
    EXPECT_LE(vl.target(j), e.q2(j));
  }
}

TEST(PolicyLoss, ConstraintAtToleranceAddsNothing) {
  auto f = make_fixture(9);
  const auto g = nn::gaussian_from_head(f.nets.policy.forward(f.batch.states));
  f.batch.expert_std = g.std;
  f.batch.expert_mean = g.mean;
  f.batch.expert_mean.row(0) += (g.std.row(0).array() * std::sqrt(2.0 * f.c.kl_epsilon)).matrix();
  const auto e = rl::evaluate_actor(f.nets, f.batch, f.noise, f.c);
  for (Eigen::Index j = 0; j < e.kl->value.cols(); ++j) EXPECT_NEAR(e.kl->value(j), f.c.kl_epsilon, 1e-12);
  EXPECT_NEAR(rl::policy_loss(f.nets, f.batch, e, Variant::PolicyConstraint, f.c).loss,
              rl::policy_loss(f.nets, f.batch, e, Variant::ActorCritic, f.c).loss, 1e-12);
}

TEST(PolicyLoss, DegenerateVariantsAreBitwiseBaseline) {
  auto f = make_fixture(10, 16);
  f.c.kl_alpha = 0.0;
  f.c.lambda = 0.0;
  const auto base = rl::policy_loss(f.nets, f.batch, f.noise, Variant::ActorCritic, f.c);
  for (Variant v : {Variant::ValuePenalty, Variant::PolicyConstraint}) {
    const auto p = rl::policy_loss(f.nets, f.batch, f.noise, v, f.c);
    EXPECT_EQ(p.loss, base.loss);
    EXPECT_EQ(p.grads.flatten(), base.grads.flatten());
  }
  const auto vb = rl::v_loss(f.nets, f.batch, f.noise, Variant::ActorCritic, f.c);
  const auto vp = rl::v_loss(f.nets, f.batch, f.noise, Variant::ValuePenalty, f.c);
  EXPECT_EQ(vp.loss, vb.loss);
  EXPECT_EQ(vp.grads.flatten(), vb.grads.flatten());
}

TEST(Gradients, QMatchFiniteDifferences) {
  for (auto& f : smooth_fixtures(100)) {
    const auto q = rl::q_loss(f.nets, f.batch, f.c);
    EXPECT_LT(check::fd_relative_error(f.nets.q1.params(), q.grads1, [&] { return rl::q_loss(f.nets, f.batch, f.c).loss1; }), 1e-4);
    EXPECT_LT(check::fd_relative_error(f.nets.q2.params(), q.grads2, [&] { return rl::q_loss(f.nets, f.batch, f.c).loss2; }), 1e-4);
  }
}

TEST(Gradients, VMatchFiniteDifferences) {
  for (Variant v : kAll)
    for (auto& f : smooth_fixtures(200)) {
      const auto vl = rl::v_loss(f.nets, f.batch, f.noise, v, f.c);
      const double err = check::fd_relative_error(f.nets.v.params(), vl.grads,
                                                  [&] { return rl::v_loss(f.nets, f.batch, f.noise, v, f.c).loss; });
      EXPECT_LT(err, 1e-4) << rl::to_string(v);
    }
}

TEST(Gradients, PolicyMatchFiniteDifferences) {
  for (rl::KlMode mode : {rl::KlMode::ClosedForm, rl::KlMode::SingleSample})
    for (Variant v : kAll)
      for (auto& f : smooth_fixtures(300)) {
        f.c.kl_mode = mode;
        const auto pl = rl::policy_loss(f.nets, f.batch, f.noise, v, f.c);
        const double err = check::fd_relative_error(f.nets.policy.params(), pl.grads, [&] {
          return rl::policy_loss(f.nets, f.batch, f.noise, v, f.c).loss;
        });
        EXPECT_LT(err, 1e-4) << rl::to_string(v) << " " << rl::to_string(mode);
      }
}

TEST(Dual, LambdaUpdate) {
  EXPECT_EQ(rl::lambda_update(0.4, 0.8, 0.8, 0.01), 0.4);
  EXPECT_DOUBLE_EQ(rl::lambda_update(0.4, 1.8, 0.8, 0.01), 0.41);
  EXPECT_EQ(rl::lambda_update(0.0, 0.1, 0.8, 0.01), 0.0);
  EXPECT_THROW(rl::lambda_update(-0.1, 1.0, 0.8, 0.01), std::invalid_argument);
}

TEST(Temperature, Gradient) {
  // entropy at target: log pi = -H_target
  EXPECT_EQ(rl::entropy_temperature_gradient(0.3, 2.0, -2.0), 0.0);
  // entropy below target (log pi too high): descent raises alpha
  EXPECT_LT(rl::entropy_temperature_gradient(0.0, 3.0, -2.0), 0.0);
  EXPECT_NEAR(rl::entropy_temperature_gradient(std::log(0.5), 1.2, -1.0), -0.1, 1e-15);
}

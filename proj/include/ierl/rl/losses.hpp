#pragma once

#include "ierl/nn/gaussian.hpp"
#include "ierl/nn/mlp.hpp"
#include "ierl/rl/kl.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace ierl::rl {

using nn::Mlp;
using nn::MlpParams;

/// Actor-critic flavours sharing the twin-Q / V / V_targ / policy machinery.
///   ActorCritic       plain losses (no entropy, no prior); reference for degeneracy checks
///   Sac               entropy-regularized, auto-tuned temperature
///   ValuePenalty      alpha * KL(pi || expert) subtracted in the V target and added to the policy loss
///   PolicyConstraint  lambda * (KL - epsilon) in the policy loss, lambda by dual ascent
enum class Variant { ActorCritic, Sac, ValuePenalty, PolicyConstraint };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::ActorCritic: return "actor_critic";
    case Variant::Sac: return "sac";
    case Variant::ValuePenalty: return "value_penalty";
    case Variant::PolicyConstraint: return "policy_constraint";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "actor_critic") return Variant::ActorCritic;
  if (s == "sac" || s == "SAC") return Variant::Sac;
  if (s == "value_penalty" || s == "vp") return Variant::ValuePenalty;
  if (s == "policy_constraint" || s == "pc") return Variant::PolicyConstraint;
  throw std::invalid_argument("unknown variant: " + s);
}

inline bool uses_expert(Variant v) { return v == Variant::ValuePenalty || v == Variant::PolicyConstraint; }

template <typename Scalar>
struct AgentNets {
  Mlp<Scalar> q1;
  Mlp<Scalar> q2;
  Mlp<Scalar> v;
  Mlp<Scalar> v_target;
  Mlp<Scalar> policy;

  static AgentNets create(int state_dim, int action_dim, const std::vector<int>& hidden, std::uint64_t seed) {
    auto sizes = [&](int in, int out) {
      std::vector<int> s{in};
      s.insert(s.end(), hidden.begin(), hidden.end());
      s.push_back(out);
      return s;
    };
    AgentNets nets;
    nets.q1 = Mlp<Scalar>(sizes(state_dim + action_dim, 1), seed * 7919 + 1);
    nets.q2 = Mlp<Scalar>(sizes(state_dim + action_dim, 1), seed * 7919 + 2);
    nets.v = Mlp<Scalar>(sizes(state_dim, 1), seed * 7919 + 3);
    nets.v_target = nets.v;
    nets.policy = Mlp<Scalar>(sizes(state_dim, 2 * action_dim), seed * 7919 + 4);
    return nets;
  }

  int state_dim() const { return v.input_size(); }
  int action_dim() const { return policy.output_size() / 2; }
};

/// Transitions laid out column-wise. `terminal` is 1 where bootstrapping is
/// cut (collision / off-road / goal); expert moments are the prior evaluated at
/// `states` and may be empty when no prior is in use.
template <typename Scalar>
struct Batch {
  Matrix<Scalar> states;
  Matrix<Scalar> actions;
  RowVector<Scalar> rewards;
  Matrix<Scalar> next_states;
  RowVector<Scalar> terminal;
  Matrix<Scalar> expert_mean;
  Matrix<Scalar> expert_std;

  Eigen::Index size() const { return states.cols(); }
  bool has_expert() const { return expert_mean.size() > 0; }
};

struct LossCoefficients {
  double gamma = 0.99;
  double kl_alpha = 0.002;     // value-penalty temperature
  double lambda = 0.01;        // current Lagrange multiplier (held constant for the policy step)
  double kl_epsilon = 0.8;     // KL tolerance
  double entropy_alpha = 1.0;  // SAC temperature (current value)
  KlMode kl_mode = KlMode::ClosedForm;
  nn::LogStdBounds log_std_bounds{};
};

template <typename Scalar>
Matrix<Scalar> concat_rows(const Matrix<Scalar>& top, const Matrix<Scalar>& bottom) {
  Matrix<Scalar> out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

// ---------------------------------------------------------------- Q loss

template <typename Scalar>
struct QLoss {
  Scalar loss1{};
  Scalar loss2{};
  MlpParams<Scalar> grads1;
  MlpParams<Scalar> grads2;
  RowVector<Scalar> target;
};

/// Mean-squared Bellman error for both Q nets against the shared target
/// r + gamma * (1 - terminal) * V_targ(s'). Gradients reach only the Q nets.
template <typename Scalar>
QLoss<Scalar> q_loss(const AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const LossCoefficients& c) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw std::invalid_argument("q_loss: empty batch");
  QLoss<Scalar> out;
  const RowVector<Scalar> next_v = nets.v_target.forward(batch.next_states);
  const auto gamma = static_cast<Scalar>(c.gamma);
  out.target = batch.rewards.array() + gamma * (Scalar(1) - batch.terminal.array()) * next_v.array();

  const Matrix<Scalar> sa = concat_rows(batch.states, batch.actions);
  auto one = [&](const Mlp<Scalar>& q, Scalar& loss, MlpParams<Scalar>& grads) {
    typename Mlp<Scalar>::Tape tape;
    const RowVector<Scalar> pred = q.forward(sa, tape);
    const RowVector<Scalar> err = pred - out.target;
    loss = err.squaredNorm() / static_cast<Scalar>(n);
    grads = q.backward(tape, (Scalar(2) / static_cast<Scalar>(n)) * err).params;
  };
  one(nets.q1, out.loss1, out.grads1);
  one(nets.q2, out.loss2, out.grads2);
  return out;
}

// ---------------------------------------------------------------- actor evaluation

/// Everything downstream of drawing fresh actions a~ ~ pi(.|s): the policy
/// distribution, the sampled actions, both Q values at (s, a~), and the KL to
/// the prior when one is present. Shared by the V and policy losses.
template <typename Scalar>
struct ActorEval {
  typename Mlp<Scalar>::Tape policy_tape;
  nn::GaussianBatch<Scalar> dist;
  nn::GaussianSample<Scalar> sample;
  typename Mlp<Scalar>::Tape q1_tape;
  typename Mlp<Scalar>::Tape q2_tape;
  RowVector<Scalar> q1;
  RowVector<Scalar> q2;
  RowVector<Scalar> q_min;
  RowVector<Scalar> q1_is_min;  // 1 where Q1 <= Q2
  Matrix<Scalar> inside;        // 1 where the sampled action lies inside [-1, 1]
  std::optional<KlBatch<Scalar>> kl;
};

template <typename Scalar>
ActorEval<Scalar> evaluate_actor(const AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const Matrix<Scalar>& noise,
                                 const LossCoefficients& c) {
  if (batch.size() == 0) throw std::invalid_argument("evaluate_actor: empty batch");
  ActorEval<Scalar> e;
  const Matrix<Scalar> head = nets.policy.forward(batch.states, e.policy_tape);
  e.dist = nn::gaussian_from_head(head, c.log_std_bounds);
  e.sample = nn::sample_gaussian(e.dist, noise);
  // The environment only ever executes clipped actions, so the critics are
  // queried there too; outside the box the action gradient is zero.
  const Matrix<Scalar> clipped = e.sample.action.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
  e.inside = (e.sample.action.array().abs() <= Scalar(1)).template cast<Scalar>().matrix();
  const Matrix<Scalar> sa = concat_rows(batch.states, clipped);
  e.q1 = nets.q1.forward(sa, e.q1_tape);
  e.q2 = nets.q2.forward(sa, e.q2_tape);
  e.q_min = e.q1.cwiseMin(e.q2);
  e.q1_is_min = (e.q1.array() <= e.q2.array()).template cast<Scalar>();
  if (batch.has_expert())
    e.kl = kl_gaussians<Scalar>(e.dist.mean, e.dist.std, batch.expert_mean, batch.expert_std, c.kl_mode, &noise);
  return e;
}

// ---------------------------------------------------------------- V loss

template <typename Scalar>
struct VLoss {
  Scalar loss{};
  MlpParams<Scalar> grads;
  RowVector<Scalar> target;
};

/// (V(s) - target)^2 with target = min_i Q_i(s, a~), minus alpha*KL in the
/// value-penalty variant, minus entropy_alpha * log pi(a~|s) for SAC.
template <typename Scalar>
VLoss<Scalar> v_loss(const AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const ActorEval<Scalar>& e,
                     Variant variant, const LossCoefficients& c) {
  const Eigen::Index n = batch.size();
  VLoss<Scalar> out;
  out.target = e.q_min;
  if (variant == Variant::ValuePenalty) {
    if (!e.kl) throw std::invalid_argument("v_loss: value-penalty mode requires expert queries");
    out.target -= static_cast<Scalar>(c.kl_alpha) * e.kl->value;
  } else if (variant == Variant::Sac) {
    out.target -= static_cast<Scalar>(c.entropy_alpha) * e.sample.log_prob;
  }
  typename Mlp<Scalar>::Tape tape;
  const RowVector<Scalar> pred = nets.v.forward(batch.states, tape);
  const RowVector<Scalar> err = pred - out.target;
  out.loss = err.squaredNorm() / static_cast<Scalar>(n);
  out.grads = nets.v.backward(tape, (Scalar(2) / static_cast<Scalar>(n)) * err).params;
  return out;
}

template <typename Scalar>
VLoss<Scalar> v_loss(const AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const Matrix<Scalar>& noise,
                     Variant variant, const LossCoefficients& c) {
  return v_loss(nets, batch, evaluate_actor(nets, batch, noise, c), variant, c);
}

// ---------------------------------------------------------------- policy loss

template <typename Scalar>
struct PolicyLoss {
  Scalar loss{};
  MlpParams<Scalar> grads;
  Scalar kl_mean{};        // batch mean of the KL estimate (0 without a prior)
  Scalar log_prob_mean{};  // batch mean of log pi(a~|s)
};

/// Per-sample objective, averaged over the batch:
///   ActorCritic       -minQ
///   Sac               entropy_alpha * log pi(a~|s) - minQ
///   ValuePenalty      -minQ + alpha * KL
///   PolicyConstraint  -minQ + lambda * (KL - epsilon)      (lambda constant here)
/// Gradients flow through the reparameterized a~ into the policy only.
template <typename Scalar>
PolicyLoss<Scalar> policy_loss(const AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const ActorEval<Scalar>& e,
                               Variant variant, const LossCoefficients& c) {
  const Eigen::Index n = batch.size();
  const Eigen::Index dims = e.dist.dims();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  if (uses_expert(variant) && !e.kl) throw std::invalid_argument("policy_loss: prior variants require expert queries");

  PolicyLoss<Scalar> out;
  out.log_prob_mean = e.sample.log_prob.mean();
  out.kl_mean = e.kl ? e.kl->value.mean() : Scalar(0);

  RowVector<Scalar> per_sample = -e.q_min;
  Matrix<Scalar> d_mean = Matrix<Scalar>::Zero(dims, n);
  Matrix<Scalar> d_log_std = Matrix<Scalar>::Zero(dims, n);

  // -minQ through the sampled action.
  const Eigen::Index state_dim = batch.states.rows();
  const RowVector<Scalar> g1 = -inv_n * e.q1_is_min;
  const RowVector<Scalar> g2 = -inv_n * (RowVector<Scalar>::Ones(n) - e.q1_is_min);
  const Matrix<Scalar> d_action = (nets.q1.backward(e.q1_tape, g1, false, state_dim, dims).input +
                                   nets.q2.backward(e.q2_tape, g2, false, state_dim, dims).input)
                                      .cwiseProduct(e.inside);
  d_mean += d_action;
  d_log_std += d_action.cwiseProduct(e.sample.action - e.dist.mean);  // d a~ / d log_std = std * z

  switch (variant) {
    case Variant::ActorCritic:
      break;
    case Variant::Sac: {
      const auto a = static_cast<Scalar>(c.entropy_alpha);
      per_sample += a * e.sample.log_prob;
      // d log pi(mean + std*z) / d mean = 0, / d log_std = -1 per dimension.
      d_log_std.array() -= a * inv_n;
      break;
    }
    case Variant::ValuePenalty: {
      const auto a = static_cast<Scalar>(c.kl_alpha);
      per_sample += a * e.kl->value;
      d_mean += (a * inv_n) * e.kl->d_mean;
      d_log_std += (a * inv_n) * e.kl->d_log_std;
      break;
    }
    case Variant::PolicyConstraint: {
      const auto lam = static_cast<Scalar>(c.lambda);
      per_sample += lam * (e.kl->value.array() - static_cast<Scalar>(c.kl_epsilon)).matrix();
      d_mean += (lam * inv_n) * e.kl->d_mean;
      d_log_std += (lam * inv_n) * e.kl->d_log_std;
      break;
    }
  }
  out.loss = per_sample.mean();
  out.grads = nets.policy.backward(e.policy_tape, nn::head_gradient(e.dist, d_mean, d_log_std)).params;
  return out;
}

template <typename Scalar>
PolicyLoss<Scalar> policy_loss(const AgentNets<Scalar>& nets, const Batch<Scalar>& batch, const Matrix<Scalar>& noise,
                               Variant variant, const LossCoefficients& c) {
  return policy_loss(nets, batch, evaluate_actor(nets, batch, noise, c), variant, c);
}

// ---------------------------------------------------------------- dual / temperature updates

/// Projected dual ascent on L(lambda) = -lambda * (KL - epsilon).
inline double lambda_update(double lambda, double mean_kl, double epsilon, double learning_rate) {
  if (lambda < 0.0) throw std::invalid_argument("lambda_update: lambda must be non-negative");
  return std::max(0.0, lambda + learning_rate * (mean_kl - epsilon));
}

/// d/d(log alpha) of E[-alpha * (log pi + target_entropy)].
inline double entropy_temperature_gradient(double log_alpha, double mean_log_prob, double target_entropy) {
  return -std::exp(log_alpha) * (mean_log_prob + target_entropy);
}

}  // namespace ierl::rl

#pragma once

#include "ierl/nn/mlp.hpp"

#include <cmath>
#include <cstdint>

namespace ierl::nn {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over a full MlpParams set.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(const MlpParams<Scalar>& shape_of, AdamConfig config)
      : config_(config),
        first_moment_(MlpParams<Scalar>::zeros_like(shape_of)),
        second_moment_(MlpParams<Scalar>::zeros_like(shape_of)) {}

  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return steps_; }
  const MlpParams<Scalar>& first_moment() const { return first_moment_; }
  const MlpParams<Scalar>& second_moment() const { return second_moment_; }

  void restore(MlpParams<Scalar> m, MlpParams<Scalar> v, std::int64_t steps) {
    first_moment_ = std::move(m);
    second_moment_ = std::move(v);
    steps_ = steps;
  }

  void step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads) {
    if (!params.same_shape(grads) || !params.same_shape(first_moment_))
      throw std::invalid_argument("Adam::step: shape mismatch");
    if (!grads.all_finite()) throw TrainingError("Adam::step: non-finite gradient");
    ++steps_;
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    const double t = static_cast<double>(steps_);
    const Scalar lr_t = static_cast<Scalar>(config_.learning_rate * std::sqrt(1.0 - std::pow(config_.beta2, t)) /
                                            (1.0 - std::pow(config_.beta1, t)));
    const Scalar eps_hat = static_cast<Scalar>(config_.epsilon * std::sqrt(1.0 - std::pow(config_.beta2, t)));
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
      p.array() -= lr_t * m.array() / (v.array().sqrt() + eps_hat);
    };
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      update(params.weights[l], first_moment_.weights[l], second_moment_.weights[l], grads.weights[l]);
      update(params.biases[l], first_moment_.biases[l], second_moment_.biases[l], grads.biases[l]);
    }
  }

 private:
  AdamConfig config_;
  MlpParams<Scalar> first_moment_;
  MlpParams<Scalar> second_moment_;
  std::int64_t steps_ = 0;
};

/// Adam for a single scalar parameter (log-temperature, etc.).
class ScalarAdam {
 public:
  ScalarAdam() = default;
  explicit ScalarAdam(AdamConfig config) : config_(config) {}

  double step(double param, double grad) {
    if (!std::isfinite(grad)) throw TrainingError("ScalarAdam::step: non-finite gradient");
    ++steps_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad * grad;
    const double t = static_cast<double>(steps_);
    const double m_hat = m_ / (1.0 - std::pow(config_.beta1, t));
    const double v_hat = v_ / (1.0 - std::pow(config_.beta2, t));
    return param - config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }

  std::int64_t step_count() const { return steps_; }

 private:
  AdamConfig config_;
  double m_ = 0.0;
  double v_ = 0.0;
  std::int64_t steps_ = 0;
};

}  // namespace ierl::nn

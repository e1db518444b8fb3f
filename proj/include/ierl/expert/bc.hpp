#pragma once

#include "ierl/expert/dataset.hpp"
#include "ierl/nn/adam.hpp"
#include "ierl/nn/gaussian.hpp"
#include "ierl/nn/mlp.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace ierl::expert {

using nn::Matrix;

template <typename Scalar>
struct LossAndGrad {
  double loss = 0.0;
  nn::MlpParams<Scalar> grads;
};

/// Mean over the batch of ||pi(s) - a||^2.
template <typename Scalar>
LossAndGrad<Scalar> mse_loss(const nn::Mlp<Scalar>& net, const Matrix<Scalar>& states, const Matrix<Scalar>& actions) {
  if (states.cols() == 0) throw DatasetError("mse_loss: empty batch");
  typename nn::Mlp<Scalar>::Tape tape;
  const Matrix<Scalar> out = net.forward(states, tape);
  const Matrix<Scalar> diff = out - actions;
  const Scalar n = static_cast<Scalar>(states.cols());
  LossAndGrad<Scalar> r;
  r.loss = static_cast<double>(diff.squaredNorm() / n);
  r.grads = net.backward(tape, (Scalar(2) / n) * diff).params;
  return r;
}

/// Gaussian negative log-likelihood, mean over the batch of
/// sum_d [log sigma + (a - mu)^2 / (2 sigma^2)]; the constant is dropped.
template <typename Scalar>
LossAndGrad<Scalar> nll_loss(const nn::Mlp<Scalar>& net, const Matrix<Scalar>& states, const Matrix<Scalar>& actions,
                             nn::LogStdBounds bounds = {}) {
  if (states.cols() == 0) throw DatasetError("nll_loss: empty batch");
  typename nn::Mlp<Scalar>::Tape tape;
  const auto g = nn::gaussian_from_head(net.forward(states, tape), bounds);
  const Scalar n = static_cast<Scalar>(states.cols());
  const Matrix<Scalar> var = g.std.cwiseProduct(g.std);
  const Matrix<Scalar> diff = actions - g.mean;
  const Matrix<Scalar> z2 = diff.cwiseProduct(diff).cwiseQuotient(var);
  LossAndGrad<Scalar> r;
  r.loss = static_cast<double>((g.log_std + Scalar(0.5) * z2).sum() / n);
  const Matrix<Scalar> d_mean = (-diff.cwiseQuotient(var)) / n;
  const Matrix<Scalar> d_log_std = (Matrix<Scalar>::Ones(z2.rows(), z2.cols()) - z2) / n;
  r.grads = net.backward(tape, nn::head_gradient(g, d_mean, d_log_std)).params;
  return r;
}

struct BcConfig {
  std::vector<int> hidden{64, 64};
  int epochs = 100;
  int batch_size = 32;
  nn::AdamConfig adam{};
  std::uint64_t init_seed = 1;
  std::uint64_t shuffle_seed = 1;
  nn::LogStdBounds log_std_bounds{};
};

enum class BcObjective { Mse, Nll };

struct BcResult {
  nn::Mlp<float> net;
  std::vector<double> epoch_losses;  // mean minibatch loss per epoch
};

inline std::vector<int> bc_layer_sizes(int input, const std::vector<int>& hidden, int output) {
  std::vector<int> sizes{input};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output);
  return sizes;
}

/// Minibatch Adam over shuffled epochs.
inline BcResult train_bc(const DemoMatrices& data, BcObjective objective, const BcConfig& cfg) {
  const Eigen::Index n = data.states.cols();
  if (n == 0) throw DatasetError("cannot train on an empty dataset");
  if (cfg.epochs < 0 || cfg.batch_size <= 0) throw std::invalid_argument("invalid BC schedule");
  const int out = objective == BcObjective::Mse ? 2 : 4;
  BcResult r{nn::Mlp<float>(bc_layer_sizes(static_cast<int>(data.states.rows()), cfg.hidden, out), cfg.init_seed), {}};
  nn::Adam<float> opt(r.net.params(), cfg.adam);
  std::mt19937_64 rng(cfg.shuffle_seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Matrix<float> xs, ys;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      xs.resize(data.states.rows(), b);
      ys.resize(2, b);
      for (Eigen::Index k = 0; k < b; ++k) {
        xs.col(k) = data.states.col(order[static_cast<std::size_t>(start + k)]);
        ys.col(k) = data.actions.col(order[static_cast<std::size_t>(start + k)]);
      }
      auto lg = objective == BcObjective::Mse ? mse_loss(r.net, xs, ys) : nll_loss(r.net, xs, ys, cfg.log_std_bounds);
      opt.step(r.net.params(), lg.grads);
      total += lg.loss;
      ++batches;
    }
    r.epoch_losses.push_back(total / std::max(1, batches));
  }
  return r;
}

inline BcResult train_bc_mse(const DemoMatrices& data, const BcConfig& cfg) { return train_bc(data, BcObjective::Mse, cfg); }
inline BcResult train_bc_nll(const DemoMatrices& data, const BcConfig& cfg) { return train_bc(data, BcObjective::Nll, cfg); }

/// Full-dataset loss of a trained net (for held-out evaluation).
inline double dataset_loss(const nn::Mlp<float>& net, const DemoMatrices& data, BcObjective objective,
                           nn::LogStdBounds bounds = {}) {
  return objective == BcObjective::Mse ? mse_loss(net, data.states, data.actions).loss
                                       : nll_loss(net, data.states, data.actions, bounds).loss;
}

}  // namespace ierl::expert

#pragma once

#include "ierl/nn/mlp.hpp"

#include <numbers>

namespace ierl::nn {

struct LogStdBounds {
  double min = -5.0;
  double max = 2.0;
};

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // ln(2*pi)

/// Diagonal Gaussian over a batch: every matrix is (action_dim x batch).
template <typename Scalar>
struct GaussianBatch {
  Matrix<Scalar> mean;
  Matrix<Scalar> log_std;
  Matrix<Scalar> std;
  Matrix<Scalar> log_std_pass;  // 1 where the raw log-std was inside the clamp, else 0

  Eigen::Index dims() const { return mean.rows(); }
  Eigen::Index batch() const { return mean.cols(); }
};

/// Splits a policy-head output (rows [0, A) mean, rows [A, 2A) raw log-std)
/// into a Gaussian with the log-std hard-clamped to `bounds`.
template <typename Scalar>
GaussianBatch<Scalar> gaussian_from_head(const Matrix<Scalar>& head, LogStdBounds bounds = {}) {
  if (head.rows() % 2 != 0) throw std::invalid_argument("gaussian head output must have even size");
  const Eigen::Index dims = head.rows() / 2;
  const Scalar lo = static_cast<Scalar>(bounds.min);
  const Scalar hi = static_cast<Scalar>(bounds.max);
  GaussianBatch<Scalar> g;
  g.mean = head.topRows(dims);
  const auto raw = head.bottomRows(dims);
  g.log_std = raw.cwiseMax(lo).cwiseMin(hi);
  g.std = g.log_std.array().exp().matrix();
  g.log_std_pass = ((raw.array() >= lo) && (raw.array() <= hi)).matrix().template cast<Scalar>();
  return g;
}

/// Maps gradients w.r.t. (mean, log_std) back to the raw head output.
template <typename Scalar>
Matrix<Scalar> head_gradient(const GaussianBatch<Scalar>& g, const Matrix<Scalar>& d_mean,
                             const Matrix<Scalar>& d_log_std) {
  Matrix<Scalar> out(2 * g.dims(), g.batch());
  out.topRows(g.dims()) = d_mean;
  out.bottomRows(g.dims()) = d_log_std.cwiseProduct(g.log_std_pass);
  return out;
}

/// Per-column diagonal-Gaussian log density.
template <typename Scalar>
RowVector<Scalar> gaussian_log_prob(const Matrix<Scalar>& mean, const Matrix<Scalar>& std,
                                    const Matrix<Scalar>& action) {
  const auto z = ((action - mean).array() / std.array());
  return (Scalar(-0.5) * z.square() - std.array().log() - Scalar(0.5 * kLogTwoPi)).matrix().colwise().sum();
}

template <typename Scalar>
struct GaussianSample {
  Matrix<Scalar> action;
  RowVector<Scalar> log_prob;
};

/// Reparameterized draw: action = mean + std * noise. No squashing or clipping;
/// clipping to the action box happens only at the environment boundary.
template <typename Scalar>
GaussianSample<Scalar> sample_gaussian(const GaussianBatch<Scalar>& g, const Matrix<Scalar>& noise) {
  if (noise.rows() != g.dims() || noise.cols() != g.batch())
    throw std::invalid_argument("sample_gaussian: noise shape mismatch");
  GaussianSample<Scalar> s;
  s.action = g.mean + g.std.cwiseProduct(noise);
  // log N(mean + std*z | mean, std) = sum(-z^2/2 - log std - log(2pi)/2)
  s.log_prob = (Scalar(-0.5) * noise.array().square() - g.log_std.array() - Scalar(0.5 * kLogTwoPi))
                   .matrix()
                   .colwise()
                   .sum();
  return s;
}

}  // namespace ierl::nn

#pragma once

#include "ierl/nn/gaussian.hpp"

#include <cmath>
#include <span>

namespace ierl::rl {

using nn::Matrix;
using nn::RowVector;

enum class KlMode { ClosedForm, SingleSample };

inline const char* to_string(KlMode mode) { return mode == KlMode::ClosedForm ? "closed_form" : "single_sample"; }

struct KlEstimate {
  double value = 0.0;
  KlMode mode = KlMode::ClosedForm;
};

/// Per-column KL(p || q) between diagonal Gaussians, with the gradient of each
/// column's value w.r.t. p's mean and log-std (q is held fixed).
template <typename Scalar>
struct KlBatch {
  RowVector<Scalar> value;
  Matrix<Scalar> d_mean;
  Matrix<Scalar> d_log_std;
};

/// ClosedForm: sum_d [ln(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2].
/// SingleSample: log p(x) - log q(x) at x = mp + sp * noise (reparameterized).
template <typename Scalar>
KlBatch<Scalar> kl_gaussians(const Matrix<Scalar>& mean_p, const Matrix<Scalar>& std_p, const Matrix<Scalar>& mean_q,
                             const Matrix<Scalar>& std_q, KlMode mode, const Matrix<Scalar>* noise = nullptr) {
  if ((std_p.array() <= Scalar(0)).any() || (std_q.array() <= Scalar(0)).any())
    throw std::invalid_argument("kl_gaussians: standard deviations must be positive");
  if (mean_p.rows() != mean_q.rows() || mean_p.cols() != mean_q.cols() || std_p.rows() != mean_p.rows() ||
      std_q.rows() != mean_p.rows() || std_p.cols() != mean_p.cols() || std_q.cols() != mean_p.cols())
    throw std::invalid_argument("kl_gaussians: shape mismatch");
  KlBatch<Scalar> kl;
  const auto var_q = std_q.array().square();
  if (mode == KlMode::ClosedForm) {
    const auto diff = (mean_p - mean_q).array();
    const auto ratio = std_p.array().square() / var_q;
    // same sum, written as 0.5 [(r - 1 - ln r) + diff^2 / sq^2] with r = sp^2 / sq^2; expm1 keeps
    // the first bracket >= 0 in floating point when p and q nearly coincide
    const Matrix<Scalar> log_r = (Scalar(2) * (std_p.array().log() - std_q.array().log())).matrix();
    const auto spread = (log_r.array().unaryExpr([](Scalar v) { return std::expm1(v); }) - log_r.array()).max(Scalar(0));
    kl.value = ((spread + diff.square() / var_q) * Scalar(0.5)).matrix().colwise().sum();
    kl.d_mean = (diff / var_q).matrix();
    kl.d_log_std = (ratio - Scalar(1)).matrix();
    return kl;
  }
  if (noise == nullptr || noise->rows() != mean_p.rows() || noise->cols() != mean_p.cols())
    throw std::invalid_argument("kl_gaussians: single-sample mode needs a noise matrix of matching shape");
  const auto eps = noise->array();
  const auto x = mean_p.array() + std_p.array() * eps;
  const auto dq = x - mean_q.array();
  // log p(x) - log q(x); the log(2 pi) terms cancel.
  kl.value = (Scalar(-0.5) * eps.square() - std_p.array().log() + dq.square() / (Scalar(2) * var_q) +
              std_q.array().log())
                 .matrix()
                 .colwise()
                 .sum();
  kl.d_mean = (dq / var_q).matrix();
  kl.d_log_std = (Scalar(-1) + dq * std_p.array() * eps / var_q).matrix();
  return kl;
}

/// Single-distribution convenience wrapper.
inline KlEstimate kl_gaussians(std::span<const double> mean_p, std::span<const double> std_p,
                               std::span<const double> mean_q, std::span<const double> std_q,
                               KlMode mode = KlMode::ClosedForm, std::span<const double> noise = {}) {
  const auto n = static_cast<Eigen::Index>(mean_p.size());
  auto col = [n](std::span<const double> s) {
    if (static_cast<Eigen::Index>(s.size()) != n) throw std::invalid_argument("kl_gaussians: dimension mismatch");
    return Matrix<double>(Eigen::Map<const Matrix<double>>(s.data(), n, 1));
  };
  const Matrix<double> noise_m = mode == KlMode::SingleSample ? col(noise) : Matrix<double>();
  const auto kl = kl_gaussians<double>(col(mean_p), col(std_p), col(mean_q), col(std_q), mode,
                                       mode == KlMode::SingleSample ? &noise_m : nullptr);
  return {kl.value(0), mode};
}

}  // namespace ierl::rl

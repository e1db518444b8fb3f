#pragma once

#include "ierl/nn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

namespace ierl::check {

using nn::Matrix;
using nn::MlpParams;

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over every parameter,
/// numeric gradients by central differences.
inline double fd_relative_error(MlpParams<double>& params, const MlpParams<double>& analytic,
                                const std::function<double()>& loss, double h = 1e-5) {
  std::vector<double> a = analytic.flatten();
  std::vector<double> flat = params.flatten();
  std::vector<double> num(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double x = flat[i];
    flat[i] = x + h;
    params.assign_flat(flat);
    const double up = loss();
    flat[i] = x - h;
    params.assign_flat(flat);
    const double down = loss();
    flat[i] = x;
    num[i] = (up - down) / (2.0 * h);
  }
  params.assign_flat(flat);
  double diff = 0.0, na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - num[i]) * (a[i] - num[i]);
    na += a[i] * a[i];
    nn_ += num[i] * num[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nn_));
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

inline Matrix<double> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix<double> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

/// Random biases so no pre-activation sits exactly on a ReLU kink (zero-bias
/// init feeds exact zeros forward through dead units).
inline void randomize_biases(MlpParams<double>& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& b : p.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
}

/// Smallest |pre-activation| over the hidden layers of `net` on `x`. Central
/// differences are only meaningful away from ReLU kinks.
inline double kink_margin(const nn::Mlp<double>& net, const Matrix<double>& x) {
  double m = std::numeric_limits<double>::infinity();
  Matrix<double> a = x;
  const auto& p = net.params();
  for (std::size_t l = 0; l + 1 < p.weights.size(); ++l) {
    Matrix<double> z = p.weights[l] * a;
    z.colwise() += p.biases[l];
    m = std::min(m, z.cwiseAbs().minCoeff());
    a = z.cwiseMax(0.0);
  }
  return m;
}

inline Matrix<double> normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix<double> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

}  // namespace ierl::check

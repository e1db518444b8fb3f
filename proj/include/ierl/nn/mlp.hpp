#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ierl::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Raised when a numeric failure (NaN/inf gradient, loss blow-up) would
/// otherwise silently corrupt training state.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weights and biases of a fully connected network. The same type carries
/// gradients and optimizer moments. Layer l maps sizes[l] -> sizes[l+1], so
/// weights[l] is (sizes[l+1] x sizes[l]).
template <typename Scalar>
struct MlpParams {
  std::vector<Matrix<Scalar>> weights;
  std::vector<Vector<Scalar>> biases;

  static MlpParams zeros_like(const MlpParams& other) {
    MlpParams out;
    for (const auto& w : other.weights) out.weights.push_back(Matrix<Scalar>::Zero(w.rows(), w.cols()));
    for (const auto& b : other.biases) out.biases.push_back(Vector<Scalar>::Zero(b.size()));
    return out;
  }

  std::size_t layer_count() const { return weights.size(); }

  bool same_shape(const MlpParams& other) const {
    if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols() ||
          biases[l].size() != other.biases[l].size())
        return false;
    }
    return true;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  MlpParams& operator+=(const MlpParams& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += other.weights[l];
      biases[l] += other.biases[l];
    }
    return *this;
  }

  MlpParams& operator*=(Scalar k) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= k;
      biases[l] *= k;
    }
    return *this;
  }

  /// Flat view in layer order: W0 (column-major storage order), b0, W1, b1, ...
  std::vector<Scalar> flatten() const {
    std::vector<Scalar> flat;
    flat.reserve(static_cast<std::size_t>(parameter_count()));
    for (std::size_t l = 0; l < weights.size(); ++l) {
      flat.insert(flat.end(), weights[l].data(), weights[l].data() + weights[l].size());
      flat.insert(flat.end(), biases[l].data(), biases[l].data() + biases[l].size());
    }
    return flat;
  }

  void assign_flat(std::span<const Scalar> flat) {
    if (static_cast<Eigen::Index>(flat.size()) != parameter_count())
      throw std::invalid_argument("assign_flat: size mismatch");
    std::size_t at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      std::copy_n(flat.data() + at, weights[l].size(), weights[l].data());
      at += static_cast<std::size_t>(weights[l].size());
      std::copy_n(flat.data() + at, biases[l].size(), biases[l].data());
      at += static_cast<std::size_t>(biases[l].size());
    }
  }

  template <typename Other>
  MlpParams<Other> cast() const {
    MlpParams<Other> out;
    for (const auto& w : weights) out.weights.push_back(w.template cast<Other>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<Other>());
    return out;
  }
};

/// Fully connected network with ReLU hidden layers and a linear output layer.
/// Batches are column-major: each column of the input matrix is one sample.
template <typename Scalar>
class Mlp {
 public:
  /// Layer inputs recorded by a forward pass; consumed by backward().
  struct Tape {
    std::vector<Matrix<Scalar>> layer_inputs;
    bool recorded() const { return !layer_inputs.empty(); }
  };

  struct Backward {
    MlpParams<Scalar> params;
    Matrix<Scalar> input;  // rows [input_first, input_first + input_rows) of dL/dx
  };

  Mlp() = default;

  /// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  Mlp(std::vector<int> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
    for (int s : sizes_)
      if (s <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Matrix<Scalar> w(sizes_[l + 1], sizes_[l]);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(dist(rng));
      params_.weights.push_back(std::move(w));
      params_.biases.push_back(Vector<Scalar>::Zero(sizes_[l + 1]));
    }
  }

  explicit Mlp(MlpParams<Scalar> params) : params_(std::move(params)) {
    if (params_.weights.empty() || params_.weights.size() != params_.biases.size())
      throw std::invalid_argument("Mlp: malformed parameter set");
    sizes_.push_back(static_cast<int>(params_.weights.front().cols()));
    for (std::size_t l = 0; l < params_.weights.size(); ++l) {
      const auto& w = params_.weights[l];
      if (w.cols() != sizes_.back() || params_.biases[l].size() != w.rows())
        throw std::invalid_argument("Mlp: layer dimensions do not chain");
      sizes_.push_back(static_cast<int>(w.rows()));
    }
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const MlpParams<Scalar>& params() const { return params_; }
  MlpParams<Scalar>& params() { return params_; }

  Matrix<Scalar> forward(const Matrix<Scalar>& input) const {
    check_input(input);
    Matrix<Scalar> a = input;
    for (std::size_t l = 0; l < params_.weights.size(); ++l) {
      Matrix<Scalar> z = params_.weights[l] * a;
      z.colwise() += params_.biases[l];
      if (l + 1 < params_.weights.size()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
    }
    return a;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& input, Tape& tape) const {
    check_input(input);
    tape.layer_inputs.clear();
    tape.layer_inputs.reserve(params_.weights.size());
    tape.layer_inputs.push_back(input);
    for (std::size_t l = 0; l < params_.weights.size(); ++l) {
      Matrix<Scalar> z = params_.weights[l] * tape.layer_inputs.back();
      z.colwise() += params_.biases[l];
      if (l + 1 == params_.weights.size()) return z;
      tape.layer_inputs.push_back(z.cwiseMax(Scalar(0)));
    }
    return {};  // unreachable: at least one layer
  }

  /// Reverse pass for the recorded batch. `output_grad` is dL/d(output) with
  /// one column per sample. Parameter gradients are skipped when
  /// `want_params` is false; input gradients are produced for the row range
  /// [input_first, input_first + input_rows) only.
  Backward backward(const Tape& tape, const Matrix<Scalar>& output_grad, bool want_params = true,
                    Eigen::Index input_first = 0, Eigen::Index input_rows = 0) const {
    if (!tape.recorded() || tape.layer_inputs.size() != params_.weights.size())
      throw std::logic_error("Mlp::backward called without a recorded forward pass");
    const Eigen::Index batch = tape.layer_inputs.front().cols();
    if (output_grad.rows() != output_size() || output_grad.cols() != batch)
      throw std::invalid_argument("Mlp::backward: output gradient shape mismatch");
    if (input_first < 0 || input_rows < 0 || input_first + input_rows > input_size())
      throw std::invalid_argument("Mlp::backward: input gradient rows out of range");

    Backward out;
    if (want_params) out.params = MlpParams<Scalar>::zeros_like(params_);
    Matrix<Scalar> delta = output_grad;
    for (std::size_t idx = params_.weights.size(); idx-- > 0;) {
      const Matrix<Scalar>& in = tape.layer_inputs[idx];
      if (want_params) {
        out.params.weights[idx].noalias() = delta * in.transpose();
        out.params.biases[idx] = delta.rowwise().sum();
      }
      if (idx > 0) {
        Matrix<Scalar> back = params_.weights[idx].transpose() * delta;
        delta = back.cwiseProduct((in.array() > Scalar(0)).matrix().template cast<Scalar>());
      } else if (input_rows > 0) {
        out.input.noalias() = params_.weights[0].middleCols(input_first, input_rows).transpose() * delta;
      }
    }
    return out;
  }

 private:
  void check_input(const Matrix<Scalar>& input) const {
    if (params_.weights.empty()) throw std::logic_error("Mlp has no layers");
    if (input.rows() != input_size())
      throw std::invalid_argument("Mlp::forward: expected input of size " + std::to_string(input_size()) +
                                  ", got " + std::to_string(input.rows()));
  }

  std::vector<int> sizes_;
  MlpParams<Scalar> params_;
};

/// target <- (1 - tau) * target + tau * source, elementwise.
template <typename Scalar>
void polyak_update(MlpParams<Scalar>& target, const MlpParams<Scalar>& source, Scalar tau) {
  if (!(tau > Scalar(0) && tau <= Scalar(1))) throw std::invalid_argument("polyak_update: tau must lie in (0, 1]");
  if (!target.same_shape(source)) throw std::invalid_argument("polyak_update: shape mismatch");
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    target.weights[l] = (Scalar(1) - tau) * target.weights[l] + tau * source.weights[l];
    target.biases[l] = (Scalar(1) - tau) * target.biases[l] + tau * source.biases[l];
  }
}

}  // namespace ierl::nn

#pragma once

#include "ierl/rl/losses.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace ierl::rl {

/// One stored transition. Expert moments are those of the prior at `state`
/// (empty when no prior is attached).
struct Transition {
  std::vector<float> state;
  std::array<float, 2> action{};
  float reward = 0.0f;
  std::vector<float> next_state;
  bool terminal = false;
  std::array<float, 2> expert_mean{};
  std::array<float, 2> expert_std{};
};

/// Bounded FIFO ring of transitions, stored column-wise so batches are plain
/// column gathers. Oldest entries are overwritten once full.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int state_dim, bool with_expert)
      : capacity_(capacity), state_dim_(state_dim), with_expert_(with_expert) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
    if (state_dim <= 0) throw std::invalid_argument("replay buffer state size must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  bool with_expert() const { return with_expert_; }
  int state_dim() const { return state_dim_; }
  std::uint64_t total_pushed() const { return pushed_; }

  void push(const Transition& t) {
    if (static_cast<int>(t.state.size()) != state_dim_ || static_cast<int>(t.next_state.size()) != state_dim_)
      throw std::invalid_argument("transition state size does not match the buffer");
    if (states_.cols() == 0) allocate();
    const auto c = static_cast<Eigen::Index>(head_);
    states_.col(c) = Eigen::Map<const nn::Vector<float>>(t.state.data(), state_dim_);
    next_states_.col(c) = Eigen::Map<const nn::Vector<float>>(t.next_state.data(), state_dim_);
    actions_(0, c) = t.action[0];
    actions_(1, c) = t.action[1];
    rewards_(c) = t.reward;
    terminal_(c) = t.terminal ? 1.0f : 0.0f;
    if (with_expert_) {
      expert_mean_(0, c) = t.expert_mean[0];
      expert_mean_(1, c) = t.expert_mean[1];
      expert_std_(0, c) = t.expert_std[0];
      expert_std_(1, c) = t.expert_std[1];
    }
    head_ = (head_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
    ++pushed_;
  }

  /// Distinct slot indices drawn uniformly (no repeats within one batch).
  std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const {
    if (n == 0 || n > size_) throw std::invalid_argument("cannot sample " + std::to_string(n) + " from " + std::to_string(size_));
    // Floyd's algorithm keeps the draw count at exactly n.
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t j = size_ - n; j < size_; ++j) {
      std::uniform_int_distribution<std::size_t> pick(0, j);
      const std::size_t t = pick(rng);
      bool seen = false;
      for (std::size_t x : out) seen = seen || x == t;
      out.push_back(seen ? j : t);
    }
    return out;
  }

  Batch<float> gather(const std::vector<std::size_t>& idx) const {
    const auto n = static_cast<Eigen::Index>(idx.size());
    Batch<float> b;
    b.states.resize(state_dim_, n);
    b.next_states.resize(state_dim_, n);
    b.actions.resize(2, n);
    b.rewards.resize(n);
    b.terminal.resize(n);
    if (with_expert_) {
      b.expert_mean.resize(2, n);
      b.expert_std.resize(2, n);
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto c = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)]);
      if (c >= static_cast<Eigen::Index>(size_)) throw std::out_of_range("replay index out of range");
      b.states.col(k) = states_.col(c);
      b.next_states.col(k) = next_states_.col(c);
      b.actions.col(k) = actions_.col(c);
      b.rewards(k) = rewards_(c);
      b.terminal(k) = terminal_(c);
      if (with_expert_) {
        b.expert_mean.col(k) = expert_mean_.col(c);
        b.expert_std.col(k) = expert_std_.col(c);
      }
    }
    return b;
  }

  Batch<float> sample(std::size_t n, std::mt19937_64& rng) const { return gather(sample_indices(n, rng)); }

 private:
  void allocate() {
    const auto cap = static_cast<Eigen::Index>(capacity_);
    states_.setZero(state_dim_, cap);
    next_states_.setZero(state_dim_, cap);
    actions_.setZero(2, cap);
    rewards_.setZero(cap);
    terminal_.setZero(cap);
    if (with_expert_) {
      expert_mean_.setZero(2, cap);
      expert_std_.setOnes(2, cap);
    }
  }

  std::size_t capacity_;
  int state_dim_;
  bool with_expert_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::uint64_t pushed_ = 0;
  nn::Matrix<float> states_, next_states_, actions_, expert_mean_, expert_std_;
  nn::RowVector<float> rewards_, terminal_;
};

}  // namespace ierl::rl

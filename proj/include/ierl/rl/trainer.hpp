#pragma once

#include "ierl/expert/ensemble.hpp"
#include "ierl/nn/adam.hpp"
#include "ierl/nn/checkpoint.hpp"
#include "ierl/rl/losses.hpp"
#include "ierl/rl/replay.hpp"
#include "ierl/sim/env.hpp"
#include "ierl/sim/rollout.hpp"
#include "ierl/sim/traffic.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>

namespace ierl::rl {

struct TrainConfig {
  Variant variant = Variant::ValuePenalty;
  sim::RewardMode reward = sim::RewardMode::Sparse;
  double kl_alpha = 0.002;
  double lambda0 = 0.01;
  double kl_epsilon = 0.8;
  std::size_t buffer_capacity = 20000;
  int batch_size = 32;
  double learning_rate = 3e-4;
  double gamma = 0.99;
  int warmup_steps = 5000;
  int total_steps = 30000;
  double tau = 0.005;
  double lambda_lr = 3e-4;
  double target_entropy = -2.0;
  double initial_entropy_alpha = 1.0;
  std::vector<int> hidden{64, 64};
  std::uint64_t seed = 1;
  KlMode kl_mode = KlMode::ClosedForm;
  bool bootstrap_timeout = true;  // timeouts bootstrap V_targ(s'); collisions, off-road and goal do not
  nn::LogStdBounds log_std_bounds{};
};

inline void validate(const TrainConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string("train config: ") + name + " must be positive");
  };
  positive(c.learning_rate, "learning_rate");
  positive(c.tau, "tau");
  positive(c.lambda_lr, "lambda_lr");
  positive(c.kl_epsilon, "kl_epsilon");
  positive(c.initial_entropy_alpha, "initial_entropy_alpha");
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw std::invalid_argument("train config: gamma must lie in (0, 1]");
  if (c.tau > 1.0) throw std::invalid_argument("train config: tau must be <= 1");
  if (c.kl_alpha < 0.0 || c.lambda0 < 0.0) throw std::invalid_argument("train config: alpha and lambda0 must be >= 0");
  if (c.buffer_capacity == 0 || c.batch_size <= 0) throw std::invalid_argument("train config: buffer and batch must be positive");
  if (static_cast<std::size_t>(c.batch_size) > c.buffer_capacity)
    throw std::invalid_argument("train config: batch larger than the buffer");
  if (c.warmup_steps < 0 || c.total_steps < 0) throw std::invalid_argument("train config: negative step counts");
  if (c.hidden.empty()) throw std::invalid_argument("train config: need at least one hidden layer");
  if (c.reward == sim::RewardMode::Shaped && uses_expert(c.variant))
    throw std::invalid_argument("train config: shaped reward is only for the baselines");
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"reward", sim::to_string(c.reward)},
          {"kl_alpha", c.kl_alpha},
          {"lambda0", c.lambda0},
          {"kl_epsilon", c.kl_epsilon},
          {"buffer_capacity", c.buffer_capacity},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"gamma", c.gamma},
          {"warmup_steps", c.warmup_steps},
          {"total_steps", c.total_steps},
          {"tau", c.tau},
          {"lambda_lr", c.lambda_lr},
          {"target_entropy", c.target_entropy},
          {"initial_entropy_alpha", c.initial_entropy_alpha},
          {"hidden", c.hidden},
          {"seed", c.seed},
          {"kl_mode", to_string(c.kl_mode)},
          {"bootstrap_timeout", c.bootstrap_timeout},
          {"log_std_bounds", {c.log_std_bounds.min, c.log_std_bounds.max}}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
  if (j.contains("reward"))
    c.reward = j["reward"].get<std::string>() == "shaped" ? sim::RewardMode::Shaped : sim::RewardMode::Sparse;
  c.kl_alpha = j.value("kl_alpha", c.kl_alpha);
  c.lambda0 = j.value("lambda0", c.lambda0);
  c.kl_epsilon = j.value("kl_epsilon", c.kl_epsilon);
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.gamma = j.value("gamma", c.gamma);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.tau = j.value("tau", c.tau);
  c.lambda_lr = j.value("lambda_lr", c.lambda_lr);
  c.target_entropy = j.value("target_entropy", c.target_entropy);
  c.initial_entropy_alpha = j.value("initial_entropy_alpha", c.initial_entropy_alpha);
  c.hidden = j.value("hidden", c.hidden);
  c.seed = j.value("seed", c.seed);
  if (j.contains("kl_mode"))
    c.kl_mode = j["kl_mode"].get<std::string>() == "single_sample" ? KlMode::SingleSample : KlMode::ClosedForm;
  c.bootstrap_timeout = j.value("bootstrap_timeout", c.bootstrap_timeout);
  if (j.contains("log_std_bounds")) c.log_std_bounds = {j["log_std_bounds"][0].get<double>(), j["log_std_bounds"][1].get<double>()};
  validate(c);
  return c;
}

/// What one environment step (and the update that follows it) produced.
struct StepMetrics {
  std::int64_t step = 0;        // 1-based count of environment steps so far
  std::int64_t episode = 0;     // episode the step belonged to
  Variant variant = Variant::ValuePenalty;
  bool updated = false;
  double q_loss = 0.0;          // mean of the two Q losses
  double v_loss = 0.0;
  double pi_loss = 0.0;
  double kl_mean = 0.0;
  double lambda_or_alpha = 0.0; // lambda (constraint), alpha (penalty), entropy alpha (SAC), 0 otherwise
  bool episode_end = false;
  double episodic_return = 0.0;
  bool success = false;
  sim::Outcome outcome = sim::Outcome::Running;
};

inline constexpr const char* kMetricsHeader =
    "step,episode,variant,q_loss,v_loss,pi_loss,kl_mean,lambda_or_alpha,episodic_return,success";

/// One CSV row. Episode columns are left empty except on the last step of an episode.
inline std::string metrics_row(const StepMetrics& m) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%lld,%lld,%s,%.9g,%.9g,%.9g,%.9g,%.9g,", static_cast<long long>(m.step),
                static_cast<long long>(m.episode), to_string(m.variant), m.q_loss, m.v_loss, m.pi_loss, m.kl_mean,
                m.lambda_or_alpha);
  std::string row = buf;
  if (m.episode_end) {
    std::snprintf(buf, sizeof buf, "%.9g,%d", m.episodic_return, m.success ? 1 : 0);
    row += buf;
  } else {
    row += ",";
  }
  return row;
}

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary);
    if (!out_) throw std::runtime_error("cannot open " + path.string());
    out_ << kMetricsHeader << '\n';
  }
  void write(const StepMetrics& m) { out_ << metrics_row(m) << '\n'; }

 private:
  std::ofstream out_;
};

/// Policy half of a trained agent, enough for mean-action control.
struct PolicyCheckpoint {
  nn::Mlp<float> policy;
  nn::LogStdBounds bounds{};

  sim::Action mean_action(const std::vector<float>& state) const {
    const Matrix<float> x = Eigen::Map<const nn::Vector<float>>(state.data(), static_cast<Eigen::Index>(state.size()));
    const Matrix<float> head = policy.forward(x);
    return {head(0, 0), head(1, 0)};
  }
  sim::PolicyFn as_policy() const {
    return [this](const sim::Observation& o) { return mean_action(o.values); };
  }
};

inline PolicyCheckpoint load_policy(const std::filesystem::path& dir) {
  const auto meta = nn::read_json_file(dir / "trainer.json");
  PolicyCheckpoint p;
  p.policy = nn::load_checkpoint<float>(dir / "policy.json");
  const auto cfg = train_config_from_json(meta.at("config"));
  p.bounds = cfg.log_std_bounds;
  if (p.policy.output_size() != 4) throw std::runtime_error("policy checkpoint has the wrong head size");
  return p;
}

/// Off-policy actor-critic training loop over the training traffic flows.
/// Single-threaded; every random draw comes from one seeded generator, so a
/// run is a pure function of (sim config, train config, expert).
class Trainer {
 public:
  Trainer(const sim::SimConfig& sim_cfg, TrainConfig cfg, std::shared_ptr<const expert::ExpertPolicy> expert = nullptr)
      : cfg_(std::move(cfg)), env_(sim_cfg), flows_(sim::make_flows(sim_cfg.train_seeds, sim_cfg.traffic)),
        expert_(std::move(expert)), rng_(cfg_.seed * 0x9E3779B97F4A7C15ULL + 17),
        buffer_(cfg_.buffer_capacity, static_cast<int>(env_.observation_size()), uses_expert(cfg_.variant)) {
    validate(cfg_);
    if (uses_expert(cfg_.variant)) {
      if (!expert_ || !expert_->trained()) throw std::invalid_argument("this variant needs a trained expert policy");
      if (expert_->input_size() != static_cast<int>(env_.observation_size()))
        throw std::invalid_argument("expert input size does not match the observation size");
    }
    if (flows_.empty()) throw std::invalid_argument("no training flows configured");
    env_.set_reward_mode(cfg_.reward);
    nets_ = AgentNets<float>::create(static_cast<int>(env_.observation_size()), 2, cfg_.hidden, cfg_.seed);
    nn::AdamConfig adam;
    adam.learning_rate = cfg_.learning_rate;
    opt_q1_ = nn::Adam<float>(nets_.q1.params(), adam);
    opt_q2_ = nn::Adam<float>(nets_.q2.params(), adam);
    opt_v_ = nn::Adam<float>(nets_.v.params(), adam);
    opt_pi_ = nn::Adam<float>(nets_.policy.params(), adam);
    opt_log_alpha_ = nn::ScalarAdam(adam);
    lambda_ = cfg_.lambda0;
    log_alpha_ = std::log(cfg_.initial_entropy_alpha);
    begin_episode();
  }

  const TrainConfig& config() const { return cfg_; }
  const AgentNets<float>& nets() const { return nets_; }
  AgentNets<float>& nets() { return nets_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  sim::TrafficEnv& env() { return env_; }
  std::int64_t steps() const { return steps_; }
  std::int64_t updates() const { return updates_; }
  std::int64_t episode() const { return episode_; }
  double lambda() const { return lambda_; }
  double entropy_alpha() const { return std::exp(log_alpha_); }

  /// Environment step, buffer append, then (after warm-up) one update.
  StepMetrics step() {
    StepMetrics m;
    m.variant = cfg_.variant;
    m.episode = episode_;
    const sim::Observation& obs = env_.observation();
    Transition t;
    t.state = obs.values;
    const sim::Action raw = steps_ < cfg_.warmup_steps ? uniform_action() : sample_action(t.state);
    const sim::Action a = sim::clip_action(raw);
    t.action = {static_cast<float>(a.v_norm), static_cast<float>(a.l_norm)};
    if (buffer_.with_expert()) {
      // The expert is frozen, so its answer at s is fixed: query once here
      // instead of once per sampled batch.
      const Matrix<float> x = Eigen::Map<const nn::Vector<float>>(t.state.data(), static_cast<Eigen::Index>(t.state.size()));
      const auto q = expert_->query(x);
      t.expert_mean = {q.mean(0, 0), q.mean(1, 0)};
      t.expert_std = {q.std(0, 0), q.std(1, 0)};
    }
    const sim::StepResult r = env_.step(a);
    t.reward = static_cast<float>(r.reward);
    t.next_state = env_.observation().values;
    const sim::Outcome out = env_.outcome();
    t.terminal = sim::is_terminal_state(out) && !(cfg_.bootstrap_timeout && out == sim::Outcome::Timeout);
    buffer_.push(t);
    episode_return_ += r.reward;
    ++steps_;
    m.step = steps_;

    if (steps_ > cfg_.warmup_steps && buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size)) update(m);
    m.lambda_or_alpha = reported_coefficient();

    if (env_.done()) {
      m.episode_end = true;
      m.episodic_return = episode_return_;
      m.outcome = out;
      m.success = out == sim::Outcome::GoalReached;
      ++episode_;
      begin_episode();
    }
    return m;
  }

  /// Runs until `total_steps` environment steps have been taken in total.
  void run(const std::function<void(const StepMetrics&)>& sink = {}) {
    while (steps_ < cfg_.total_steps) {
      const StepMetrics m = step();
      if (sink) sink(m);
    }
  }

  /// One gradient update on a batch; public so tests can drive it with fixed batches.
  struct UpdateResult {
    double q_loss = 0.0;
    double v_loss = 0.0;
    double pi_loss = 0.0;
    double kl_mean = 0.0;
    double log_prob_mean = 0.0;
  };

  UpdateResult update_on(const Batch<float>& batch, const Matrix<float>& noise) {
    const LossCoefficients c = coefficients();
    const QLoss<float> ql = q_loss(nets_, batch, c);
    const ActorEval<float> e = evaluate_actor(nets_, batch, noise, c);
    const VLoss<float> vl = v_loss(nets_, batch, e, cfg_.variant, c);
    const PolicyLoss<float> pl = policy_loss(nets_, batch, e, cfg_.variant, c);
    UpdateResult u{0.5 * (static_cast<double>(ql.loss1) + ql.loss2), vl.loss, pl.loss, pl.kl_mean, pl.log_prob_mean};
    if (!std::isfinite(u.q_loss) || !std::isfinite(u.v_loss) || !std::isfinite(u.pi_loss) || !std::isfinite(u.kl_mean))
      throw nn::TrainingError("non-finite loss at step " + std::to_string(steps_) + ": q=" + std::to_string(u.q_loss) +
                              " v=" + std::to_string(u.v_loss) + " pi=" + std::to_string(u.pi_loss) +
                              " kl=" + std::to_string(u.kl_mean));
    opt_q1_.step(nets_.q1.params(), ql.grads1);
    opt_q2_.step(nets_.q2.params(), ql.grads2);
    opt_v_.step(nets_.v.params(), vl.grads);
    opt_pi_.step(nets_.policy.params(), pl.grads);
    nn::polyak_update(nets_.v_target.params(), nets_.v.params(), static_cast<float>(cfg_.tau));
    if (cfg_.variant == Variant::PolicyConstraint)
      lambda_ = lambda_update(lambda_, u.kl_mean, cfg_.kl_epsilon, cfg_.lambda_lr);
    if (cfg_.variant == Variant::Sac)
      log_alpha_ = opt_log_alpha_.step(log_alpha_,
                                       entropy_temperature_gradient(log_alpha_, u.log_prob_mean, cfg_.target_entropy));
    ++updates_;
    return u;
  }

  /// Deterministic control with the policy mean.
  sim::Action mean_action(const std::vector<float>& state) const {
    const Matrix<float> x = Eigen::Map<const nn::Vector<float>>(state.data(), static_cast<Eigen::Index>(state.size()));
    const Matrix<float> head = nets_.policy.forward(x);
    return {head(0, 0), head(1, 0)};
  }

  sim::PolicyFn mean_policy() const {
    return [this](const sim::Observation& o) { return mean_action(o.values); };
  }

  /// Nets with their optimizer states, plus the scalar state, one file each.
  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nn::save_checkpoint(dir / "q1.json", nets_.q1, &opt_q1_);
    nn::save_checkpoint(dir / "q2.json", nets_.q2, &opt_q2_);
    nn::save_checkpoint(dir / "v.json", nets_.v, &opt_v_);
    nn::save_checkpoint<float>(dir / "v_target.json", nets_.v_target);
    nn::save_checkpoint(dir / "policy.json", nets_.policy, &opt_pi_);
    nn::write_json_file(dir / "trainer.json", {{"format", "ierl.trainer"},
                                               {"version", 1},
                                               {"config", to_json(cfg_)},
                                               {"steps", steps_},
                                               {"updates", updates_},
                                               {"episode", episode_},
                                               {"lambda", lambda_},
                                               {"log_alpha", log_alpha_}});
  }

 private:
  void begin_episode() {
    env_.reset(flows_[static_cast<std::size_t>(episode_) % flows_.size()], static_cast<std::uint64_t>(episode_));
    episode_return_ = 0.0;
  }

  sim::Action uniform_action() {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double v = u(rng_);
    return {v, u(rng_)};
  }

  sim::Action sample_action(const std::vector<float>& state) {
    const Matrix<float> x = Eigen::Map<const nn::Vector<float>>(state.data(), static_cast<Eigen::Index>(state.size()));
    const auto g = nn::gaussian_from_head(nets_.policy.forward(x), cfg_.log_std_bounds);
    std::normal_distribution<float> n01(0.0f, 1.0f);
    const float z0 = n01(rng_);
    const float z1 = n01(rng_);
    return {g.mean(0, 0) + g.std(0, 0) * z0, g.mean(1, 0) + g.std(1, 0) * z1};
  }

  LossCoefficients coefficients() const {
    LossCoefficients c;
    c.gamma = cfg_.gamma;
    c.kl_alpha = cfg_.kl_alpha;
    c.lambda = lambda_;
    c.kl_epsilon = cfg_.kl_epsilon;
    c.entropy_alpha = std::exp(log_alpha_);
    c.kl_mode = cfg_.kl_mode;
    c.log_std_bounds = cfg_.log_std_bounds;
    return c;
  }

  double reported_coefficient() const {
    switch (cfg_.variant) {
      case Variant::PolicyConstraint: return lambda_;
      case Variant::ValuePenalty: return cfg_.kl_alpha;
      case Variant::Sac: return std::exp(log_alpha_);
      case Variant::ActorCritic: return 0.0;
    }
    return 0.0;
  }

  void update(StepMetrics& m) {
    const Batch<float> batch = buffer_.sample(static_cast<std::size_t>(cfg_.batch_size), rng_);
    Matrix<float> noise(2, batch.size());
    std::normal_distribution<float> n01(0.0f, 1.0f);
    for (Eigen::Index j = 0; j < noise.cols(); ++j)
      for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = n01(rng_);
    const UpdateResult u = update_on(batch, noise);
    m.updated = true;
    m.q_loss = u.q_loss;
    m.v_loss = u.v_loss;
    m.pi_loss = u.pi_loss;
    m.kl_mean = u.kl_mean;
  }

  TrainConfig cfg_;
  sim::TrafficEnv env_;
  std::vector<sim::TrafficFlow> flows_;
  std::shared_ptr<const expert::ExpertPolicy> expert_;
  std::mt19937_64 rng_;
  ReplayBuffer buffer_;
  AgentNets<float> nets_;
  nn::Adam<float> opt_q1_, opt_q2_, opt_v_, opt_pi_;
  nn::ScalarAdam opt_log_alpha_;
  double lambda_ = 0.01;
  double log_alpha_ = 0.0;
  std::int64_t steps_ = 0;
  std::int64_t updates_ = 0;
  std::int64_t episode_ = 0;
  double episode_return_ = 0.0;
};

}  // namespace ierl::rl

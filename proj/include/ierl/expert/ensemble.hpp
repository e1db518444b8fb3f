#pragma once

#include "ierl/expert/bc.hpp"
#include "ierl/nn/checkpoint.hpp"
#include "ierl/nn/gaussian.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ierl::expert {

/// How the expert's action distribution is derived from demonstrations.
enum class ExpertMode { Ensemble, SingleGaussian, FixedStd };

inline const char* to_string(ExpertMode m) {
  switch (m) {
    case ExpertMode::Ensemble: return "ensemble";
    case ExpertMode::SingleGaussian: return "single_gaussian";
    case ExpertMode::FixedStd: return "fixed_std";
  }
  return "?";
}

inline ExpertMode expert_mode_from_string(const std::string& s) {
  if (s == "ensemble" || s == "Ensemble") return ExpertMode::Ensemble;
  if (s == "single_gaussian" || s == "SingleGaussian") return ExpertMode::SingleGaussian;
  if (s == "fixed_std" || s == "FixedStd") return ExpertMode::FixedStd;
  throw std::invalid_argument("unknown expert mode: " + s);
}

/// Where the std floor is added: to the mixture std (default) or to every member.
enum class FloorMode { PostAggregation, PerMember };

inline const char* to_string(FloorMode m) { return m == FloorMode::PostAggregation ? "post_aggregation" : "per_member"; }

inline FloorMode floor_mode_from_string(const std::string& s) {
  if (s == "post_aggregation") return FloorMode::PostAggregation;
  if (s == "per_member") return FloorMode::PerMember;
  throw std::invalid_argument("unknown floor mode: " + s);
}

/// Batched expert answer; every matrix is (action_dim x batch).
template <typename Scalar>
struct ExpertQuery {
  Matrix<Scalar> mean;
  Matrix<Scalar> std;
  Matrix<Scalar> variance;  // mixture variance before the floor
};

/// Equal-weight Gaussian mixture moments:
///   mu = mean_i mu_i,  var = mean_i var_i + (mean_i mu_i^2 - mu^2),
/// std = sqrt(var) + floor.
template <typename Scalar>
ExpertQuery<Scalar> aggregate_ensemble(const std::vector<Matrix<Scalar>>& means, const std::vector<Matrix<Scalar>>& variances,
                                       Scalar std_floor) {
  if (means.empty() || means.size() != variances.size()) throw std::invalid_argument("aggregate_ensemble: need M >= 1 members");
  const Scalar m = static_cast<Scalar>(means.size());
  ExpertQuery<Scalar> q;
  q.mean = Matrix<Scalar>::Zero(means[0].rows(), means[0].cols());
  Matrix<Scalar> second = q.mean;
  Matrix<Scalar> avg_var = q.mean;
  for (std::size_t i = 0; i < means.size(); ++i) {
    if ((variances[i].array() <= Scalar(0)).any()) throw std::invalid_argument("aggregate_ensemble: non-positive variance");
    q.mean += means[i];
    second += means[i].cwiseProduct(means[i]);
    avg_var += variances[i];
  }
  q.mean /= m;
  second /= m;
  avg_var /= m;
  // The disagreement term is a variance; clamp float round-off below zero.
  q.variance = avg_var + (second - q.mean.cwiseProduct(q.mean)).cwiseMax(Scalar(0));
  q.std = (q.variance.array().sqrt() + std_floor).matrix();
  return q;
}

struct ExpertConfig {
  ExpertMode mode = ExpertMode::Ensemble;
  int members = 5;
  double std_floor = 0.1;
  double fixed_std = 0.2;
  FloorMode floor_mode = FloorMode::PostAggregation;
  double augment_sigma = 0.05;
  std::uint64_t augment_seed = 7;
  std::uint64_t seed = 1;
  BcConfig bc{};
};

/// The imitative expert queried during RL: a frozen set of policy nets plus
/// the rule that turns their outputs into one Gaussian per state.
class ExpertPolicy {
 public:
  ExpertPolicy() = default;
  ExpertPolicy(ExpertMode mode, std::vector<nn::Mlp<float>> members, double std_floor, double fixed_std,
               FloorMode floor_mode = FloorMode::PostAggregation, nn::LogStdBounds bounds = {})
      : mode_(mode), members_(std::move(members)), std_floor_(std_floor), fixed_std_(fixed_std),
        floor_mode_(floor_mode), bounds_(bounds) {
    if (members_.empty()) throw std::invalid_argument("expert policy needs at least one member");
    const int out = mode_ == ExpertMode::FixedStd ? 2 : 4;
    for (const auto& m : members_) {
      if (m.output_size() != out) throw std::invalid_argument("expert member has the wrong head size");
      if (m.input_size() != members_.front().input_size()) throw std::invalid_argument("expert members disagree on input size");
    }
    if (mode_ != ExpertMode::Ensemble && members_.size() != 1)
      throw std::invalid_argument("single-network expert modes take exactly one member");
  }

  bool trained() const { return !members_.empty(); }
  ExpertMode mode() const { return mode_; }
  std::size_t member_count() const { return members_.size(); }
  const std::vector<nn::Mlp<float>>& members() const { return members_; }
  double std_floor() const { return std_floor_; }
  double fixed_std() const { return fixed_std_; }
  FloorMode floor_mode() const { return floor_mode_; }
  int input_size() const { return members_.empty() ? 0 : members_.front().input_size(); }

  /// Deterministic query for a batch of states (one per column).
  ExpertQuery<float> query(const Matrix<float>& states) const {
    if (!trained()) throw std::logic_error("expert policy is not trained");
    if (mode_ == ExpertMode::FixedStd) {
      ExpertQuery<float> q;
      q.mean = members_.front().forward(states);
      q.std = Matrix<float>::Constant(q.mean.rows(), q.mean.cols(), static_cast<float>(fixed_std_));
      q.variance = q.std.cwiseProduct(q.std);
      return q;
    }
    std::vector<Matrix<float>> means, vars;
    for (const auto& m : members_) {
      const auto g = nn::gaussian_from_head(m.forward(states), bounds_);
      means.push_back(g.mean);
      if (floor_mode_ == FloorMode::PerMember) {
        const Matrix<float> s = (g.std.array() + static_cast<float>(std_floor_)).matrix();
        vars.push_back(s.cwiseProduct(s));
      } else {
        vars.push_back(g.std.cwiseProduct(g.std));
      }
    }
    const float floor = floor_mode_ == FloorMode::PostAggregation ? static_cast<float>(std_floor_) : 0.0f;
    return aggregate_ensemble<float>(means, vars, floor);
  }

  /// Mean action for one state.
  std::array<double, 2> mean_action(const std::vector<float>& state) const {
    const Matrix<float> x = Eigen::Map<const nn::Vector<float>>(state.data(), static_cast<Eigen::Index>(state.size()));
    const auto q = query(x);
    return {q.mean(0, 0), q.mean(1, 0)};
  }

  nlohmann::json to_json() const {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : members_) members.push_back(nn::checkpoint_json(m));
    return {{"format", "ierl.expert"},
            {"version", 1},
            {"mode", expert::to_string(mode_)},
            {"std_floor", std_floor_},
            {"fixed_std", fixed_std_},
            {"floor_mode", expert::to_string(floor_mode_)},
            {"log_std_bounds", {bounds_.min, bounds_.max}},
            {"members", std::move(members)}};
  }

  static ExpertPolicy from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != "ierl.expert" || j.value("version", 0) != 1)
      throw std::runtime_error("not an ierl.expert v1 file");
    std::vector<nn::Mlp<float>> members;
    for (const auto& m : j.at("members")) members.push_back(nn::mlp_from_checkpoint<float>(m));
    nn::LogStdBounds b;
    if (j.contains("log_std_bounds")) b = {j["log_std_bounds"][0].get<double>(), j["log_std_bounds"][1].get<double>()};
    return ExpertPolicy(expert_mode_from_string(j.at("mode").get<std::string>()), std::move(members),
                        j.at("std_floor").get<double>(), j.at("fixed_std").get<double>(),
                        floor_mode_from_string(j.value("floor_mode", std::string("post_aggregation"))), b);
  }

  void save(const std::filesystem::path& path) const { nn::write_json_file(path, to_json()); }
  static ExpertPolicy load(const std::filesystem::path& path) { return from_json(nn::read_json_file(path)); }

 private:
  ExpertMode mode_ = ExpertMode::Ensemble;
  std::vector<nn::Mlp<float>> members_;
  double std_floor_ = 0.1;
  double fixed_std_ = 0.2;
  FloorMode floor_mode_ = FloorMode::PostAggregation;
  nn::LogStdBounds bounds_{};
};

/// Trains the expert from demonstrations. Ensemble members get distinct
/// init and shuffle seeds; actions are jittered before fitting.
inline ExpertPolicy train_expert(const DemoDataset& ds, const ExpertConfig& cfg, std::vector<BcResult>* runs = nullptr) {
  if (ds.empty()) throw DatasetError("cannot train an expert on an empty dataset");
  const DemoMatrices data = to_matrices(augment_actions(ds, cfg.augment_sigma, cfg.augment_seed));
  const int count = cfg.mode == ExpertMode::Ensemble ? cfg.members : 1;
  if (count < 1) throw std::invalid_argument("ensemble size must be >= 1");
  std::vector<nn::Mlp<float>> members;
  for (int i = 0; i < count; ++i) {
    BcConfig bc = cfg.bc;
    bc.init_seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i) * 2 + 1;
    bc.shuffle_seed = cfg.seed * 7777777ULL + static_cast<std::uint64_t>(i) * 2 + 2;
    BcResult r = train_bc(data, cfg.mode == ExpertMode::FixedStd ? BcObjective::Mse : BcObjective::Nll, bc);
    members.push_back(r.net);
    if (runs) runs->push_back(std::move(r));
  }
  return ExpertPolicy(cfg.mode, std::move(members), cfg.std_floor, cfg.fixed_std, cfg.floor_mode, cfg.bc.log_std_bounds);
}

}  // namespace ierl::expert

#pragma once

#include "ierl/nn/adam.hpp"
#include "ierl/nn/mlp.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

namespace ierl::nn {

// Checkpoint layout (JSON, format version 1):
//   {"format": "ierl.mlp", "version": 1,
//    "layers": [{"in": n, "out": m, "weight": [m*n values, row-major], "bias": [m]}...],
//    "adam": {"step": k, "m": [layers...], "v": [layers...]}   // optional
//   }
// Values are written as doubles with shortest round-trip formatting, so a
// float or double network reloads bit-identically.

inline constexpr int kCheckpointVersion = 1;

template <typename Scalar>
nlohmann::json params_to_json(const MlpParams<Scalar>& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) row_major.push_back(static_cast<double>(w(i, j)));
    std::vector<double> bias(params.biases[l].data(), params.biases[l].data() + params.biases[l].size());
    layers.push_back({{"in", w.cols()}, {"out", w.rows()}, {"weight", row_major}, {"bias", bias}});
  }
  return layers;
}

template <typename Scalar>
MlpParams<Scalar> params_from_json(const nlohmann::json& layers) {
  MlpParams<Scalar> params;
  for (const auto& layer : layers) {
    const auto in = layer.at("in").get<Eigen::Index>();
    const auto out = layer.at("out").get<Eigen::Index>();
    const auto& weight = layer.at("weight");
    const auto& bias = layer.at("bias");
    if (static_cast<Eigen::Index>(weight.size()) != in * out || static_cast<Eigen::Index>(bias.size()) != out)
      throw std::runtime_error("checkpoint: layer value count does not match its shape");
    Matrix<Scalar> w(out, in);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < out; ++i)
      for (Eigen::Index j = 0; j < in; ++j) w(i, j) = static_cast<Scalar>(weight[k++].get<double>());
    Vector<Scalar> b(out);
    for (Eigen::Index i = 0; i < out; ++i) b(i) = static_cast<Scalar>(bias[static_cast<std::size_t>(i)].get<double>());
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

template <typename Scalar>
nlohmann::json checkpoint_json(const Mlp<Scalar>& net, const Adam<Scalar>* optimizer = nullptr) {
  nlohmann::json j{{"format", "ierl.mlp"}, {"version", kCheckpointVersion}, {"layers", params_to_json(net.params())}};
  if (optimizer != nullptr) {
    j["adam"] = {{"step", optimizer->step_count()},
                 {"m", params_to_json(optimizer->first_moment())},
                 {"v", params_to_json(optimizer->second_moment())}};
  }
  return j;
}

template <typename Scalar>
Mlp<Scalar> mlp_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "ierl.mlp") throw std::runtime_error("checkpoint: unknown format tag");
  if (j.value("version", 0) != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  return Mlp<Scalar>(params_from_json<Scalar>(j.at("layers")));
}

template <typename Scalar>
void restore_optimizer(const nlohmann::json& j, Adam<Scalar>& optimizer) {
  if (!j.contains("adam")) return;
  const auto& a = j.at("adam");
  optimizer.restore(params_from_json<Scalar>(a.at("m")), params_from_json<Scalar>(a.at("v")),
                    a.at("step").get<std::int64_t>());
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Mlp<Scalar>& net, const Adam<Scalar>* optimizer = nullptr) {
  write_json_file(path, checkpoint_json(net, optimizer));
}

template <typename Scalar>
Mlp<Scalar> load_checkpoint(const std::filesystem::path& path) {
  return mlp_from_checkpoint<Scalar>(read_json_file(path));
}

}  // namespace ierl::nn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ierl::bench {

inline constexpr int kSuccessWindow = 20;
inline constexpr int kSmoothingSteps = 3000;

/// Finished episodes over the last 20 divided by 20. Fewer than 20 episodes
/// still divide by 20, so an early lucky episode does not read as 100%.
inline double success_rate_last(const std::vector<int>& successes, int window = kSuccessWindow) {
  if (window <= 0) throw std::invalid_argument("success window must be positive");
  const std::size_t n = std::min(successes.size(), static_cast<std::size_t>(window));
  int count = 0;
  for (std::size_t i = successes.size() - n; i < successes.size(); ++i) count += successes[i] != 0 ? 1 : 0;
  return static_cast<double>(count) / window;
}

/// Episode ends read back from a metrics CSV.
struct EpisodeEnd {
  std::int64_t step = 0;
  double episodic_return = 0.0;
  bool success = false;
};

struct MetricsLog {
  std::int64_t steps = 0;
  std::vector<EpisodeEnd> episodes;
};

inline MetricsLog read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 10) throw std::runtime_error("malformed metrics row in " + path.string() + ": " + line);
    const std::int64_t step = std::stoll(f[0]);
    log.steps = std::max(log.steps, step);
    if (!f[9].empty()) log.episodes.push_back({step, std::stod(f[8]), f[9] == "1"});
  }
  return log;
}

/// Per-step training success rate: at step t, the last-20 rate over episodes
/// finished at or before t. Index 0 is step 1.
inline std::vector<double> success_series(const MetricsLog& log) {
  std::vector<double> out(static_cast<std::size_t>(log.steps), 0.0);
  std::vector<int> done;
  std::size_t next = 0;
  for (std::int64_t s = 1; s <= log.steps; ++s) {
    while (next < log.episodes.size() && log.episodes[next].step <= s) done.push_back(log.episodes[next++].success ? 1 : 0);
    out[static_cast<std::size_t>(s - 1)] = success_rate_last(done);
  }
  return out;
}

/// Exponentially weighted moving average with span `steps` (weight 2/(steps+1)),
/// seeded with the first value. A convex combination at every step, so it
/// never leaves the raw series' range.
inline std::vector<double> ewma(const std::vector<double>& raw, int steps = kSmoothingSteps) {
  if (steps <= 0) throw std::invalid_argument("ewma span must be positive");
  const double w = 2.0 / (steps + 1.0);
  std::vector<double> out(raw.size());
  double acc = raw.empty() ? 0.0 : raw.front();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    acc = i == 0 ? raw[i] : acc + w * (raw[i] - acc);
    out[i] = acc;
  }
  return out;
}

inline std::vector<double> smoothed_success(const MetricsLog& log) { return ewma(success_series(log)); }

struct CurvePoint {
  std::int64_t step = 0;
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal-approximation half width across seeds
};

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
};

/// Mean and 1.96 * s / sqrt(n), s the sample standard deviation (0 for n < 2).
inline MeanCi mean_ci95(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(xs.size()))};
}

/// Pointwise mean and band over per-seed smoothed curves, sampled every `stride` steps.
inline std::vector<CurvePoint> aggregate_curves(const std::vector<std::vector<double>>& per_seed, int stride = 1000) {
  if (per_seed.empty()) return {};
  std::size_t len = per_seed.front().size();
  for (const auto& c : per_seed) len = std::min(len, c.size());
  std::vector<CurvePoint> out;
  for (std::size_t i = static_cast<std::size_t>(stride) - 1; i < len; i += static_cast<std::size_t>(stride)) {
    std::vector<double> v;
    for (const auto& c : per_seed) v.push_back(c[i]);
    const MeanCi m = mean_ci95(v);
    out.push_back({static_cast<std::int64_t>(i + 1), m.mean, m.half_width});
  }
  return out;
}

/// First step (1-based) at which a per-step curve reaches `level`.
inline std::optional<std::int64_t> first_step_reaching(const std::vector<double>& curve, double level) {
  for (std::size_t i = 0; i < curve.size(); ++i)
    if (curve[i] >= level) return static_cast<std::int64_t>(i + 1);
  return std::nullopt;
}

struct Efficiency {
  bool reachable = false;
  double ratio = 0.0;
  std::int64_t step_a = 0;
  std::int64_t step_b = 0;
};

/// (first step A reaches level) / (first step B reaches level); unreachable if either never does.
inline Efficiency sample_efficiency(const std::vector<double>& a, const std::vector<double>& b, double level) {
  const auto sa = first_step_reaching(a, level);
  const auto sb = first_step_reaching(b, level);
  if (!sa || !sb) return {false, 0.0, sa.value_or(0), sb.value_or(0)};
  return {true, static_cast<double>(*sa) / static_cast<double>(*sb), *sa, *sb};
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace ierl::bench

#pragma once

// LRT-vs-neural comparison experiments: dataset synthesis, stratified 80/20 split, LRT evaluation,
// learning curves for the neural verifier.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lvs/adversary.hpp"
#include "lvs/channel.hpp"
#include "lvs/error.hpp"
#include "lvs/lrt.hpp"
#include "lvs/neural.hpp"
#include "lvs/random.hpp"
#include "lvs/scenario.hpp"

namespace lvs {

inline std::vector<std::size_t> default_learning_curve_sizes() {
  std::vector<std::size_t> sizes;
  for (std::size_t m = 10; m <= 500; m += 10) sizes.push_back(m);
  return sizes;
}

struct ExperimentConfig {
  Scenario scenario = default_scenario();
  ChannelParams channel;   ///< drives the simulation
  ChannelParams verifier;  ///< what the LRT believes; differs from `channel` in mismatch runs
  NoiseModel noise;
  std::vector<double> r_values{100.0, 75.0, 50.0};
  AttackMode attack_mode = AttackMode::random;
  std::size_t n_total = 2000;
  double train_fraction = 0.8;
  std::vector<std::size_t> learning_curve_sizes = default_learning_curve_sizes();
  std::vector<std::uint64_t> seeds{1};
  H1MeanPolicy h1_policy = H1MeanPolicy::oracle;
  double threshold = 1.0;
  SpoofDistribution spoof;
  TrainConfig train;
  OptimizerOptions optimizer;
  std::size_t threads = 0;  ///< 0 = hardware concurrency; results do not depend on it

  /// Smallest per-class training count any split can produce.
  std::size_t train_split_size() const {
    const auto per_class = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_total / 2) + 0.5));
    return 2 * per_class;
  }

  void validate() const {
    scenario.validate();
    channel.validate();
    verifier.validate();
    noise.validate();
    train.validate();
    optimizer.validate();
    if (!(spoof.extra_distance >= 0.0) || spoof.max_attempts < 1)
      throw InvalidArgument("spoof distribution needs extra_distance >= 0 and max_attempts >= 1");
    (void)Threshold::ratio(threshold);
    if (n_total == 0) throw InvalidArgument("n_total must be positive");
    if (n_total % 2 != 0) throw InvalidArgument("n_total must be even");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must lie in (0, 1)");
    if (r_values.empty()) throw InvalidArgument("r_values must not be empty");
    for (double r : r_values)
      if (!(r > 0.0) || !std::isfinite(r)) throw InvalidArgument("r values must be positive");
    if (seeds.empty()) throw InvalidArgument("seeds must not be empty");
    const std::size_t n_train = train_split_size();
    if (n_train >= n_total) throw InvalidArgument("train_fraction leaves no test samples");
    for (std::size_t m : learning_curve_sizes)
      if (m < 10 || m > n_train)
        throw InvalidArgument("learning curve size " + std::to_string(m) + " outside [10, " + std::to_string(n_train) +
                              "]");
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// FNV-1a content hash of labeled observations (labels, locations and RSS bit patterns).
inline std::uint64_t content_hash(std::span<const LabeledObservation> data) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& o : data) {
    mix(static_cast<double>(label_value(o.sample.label)));
    mix(o.sample.true_loc.x);
    mix(o.sample.true_loc.y);
    mix(o.sample.claimed_loc.x);
    mix(o.sample.claimed_loc.y);
    for (double v : o.rss) mix(v);
  }
  return h;
}

struct DataSplit {
  std::vector<LabeledObservation> train;  ///< balanced order: every even-length prefix holds both classes equally
  std::vector<LabeledObservation> test;
};

/// Label-stratified split. Each class contributes round(train_fraction * n_class) training samples.
inline DataSplit stratified_split(std::span<const LabeledObservation> data, double train_fraction, Rng& rng) {
  std::vector<std::size_t> cls[2];
  for (std::size_t i = 0; i < data.size(); ++i) cls[label_value(data[i].sample.label)].push_back(i);
  DataSplit split;
  std::vector<std::size_t> train_idx[2];
  std::vector<std::size_t> test_idx;
  for (int c = 0; c < 2; ++c) {
    std::shuffle(cls[c].begin(), cls[c].end(), rng);
    const auto n_train =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(cls[c].size()) + 0.5));
    train_idx[c].assign(cls[c].begin(), cls[c].begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), cls[c].begin() + static_cast<std::ptrdiff_t>(n_train), cls[c].end());
  }
  std::sort(test_idx.begin(), test_idx.end());
  for (std::size_t i : test_idx) split.test.push_back(data[i]);

  // Interleave the shuffled classes pairwise, pair order random.
  std::bernoulli_distribution coin(0.5);
  const std::size_t pairs = std::min(train_idx[0].size(), train_idx[1].size());
  for (std::size_t k = 0; k < pairs; ++k) {
    const bool legit_first = coin(rng);
    split.train.push_back(data[train_idx[legit_first ? 0 : 1][k]]);
    split.train.push_back(data[train_idx[legit_first ? 1 : 0][k]]);
  }
  for (int c = 0; c < 2; ++c)
    for (std::size_t k = pairs; k < train_idx[c].size(); ++k) split.train.push_back(data[train_idx[c][k]]);
  return split;
}

struct CurvePoint {
  std::size_t train_size = 0;
  DetectionStats stats;
  StopReason stop_reason = StopReason::max_epochs;
  int epochs = 0;
  std::uint64_t test_hash = 0;  ///< hash of the observations this model was scored on
};

struct CellResult {
  std::uint64_t seed = 0;
  double r = 0.0;
  AttackMode attack_mode = AttackMode::random;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  DetectionStats lrt;       ///< at the configured threshold
  DetectionStats lrt_best;  ///< best threshold of the sweep, on the same test set
  double lrt_best_ell = 1.0;
  std::uint64_t lrt_test_hash = 0;
  std::vector<CurvePoint> ml_curve;

  const CurvePoint& final_ml() const { return ml_curve.back(); }
};

struct ComparisonResult {
  ExperimentConfig config;
  std::vector<CellResult> cells;  ///< ordered by (seed, r) as listed in the config

  const CellResult& cell(std::uint64_t seed, double r) const {
    for (const auto& c : cells)
      if (c.seed == seed && c.r == r) return c;
    throw InvalidArgument("no comparison cell for r = " + std::to_string(r));
  }
};

/// Threshold grid used to find the best-threshold LRT operating point.
inline std::vector<double> comparison_threshold_grid() { return log_spaced_thresholds(-20.0, 20.0, 401); }

inline Rng cell_rng(std::uint64_t seed, double r, AttackMode mode, std::uint64_t purpose) {
  return make_rng(seed, {std::bit_cast<std::uint64_t>(r), static_cast<std::uint64_t>(mode), purpose});
}

/// Observations for `samples`, drawn from the simulation channel.
inline std::vector<LabeledObservation> observe(const ExperimentConfig& config, const Scenario& scenario,
                                               std::span<const GroundTruthSample> samples, Rng& rng) {
  std::vector<LabeledObservation> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back({s, draw_observation(config.channel, s.true_loc, scenario.rsus, rng, config.noise)});
  return out;
}

/// Simulated dataset for one (seed, r) cell, before splitting.
inline std::vector<LabeledObservation> simulate_cell(const ExperimentConfig& config, std::uint64_t seed, double r) {
  Scenario scenario = config.scenario;
  scenario.r = r;
  Rng rng = cell_rng(seed, r, config.attack_mode, 0);
  const auto samples =
      config.attack_mode == AttackMode::random
          ? generate_dataset(scenario, config.n_total, rng, config.spoof)
          : generate_optimized_dataset(scenario, config.channel, config.n_total, rng, config.spoof, config.optimizer);
  return observe(config, scenario, samples, rng);
}

inline CellResult run_cell(const ExperimentConfig& config, std::uint64_t seed, double r) {
  Scenario scenario = config.scenario;
  scenario.r = r;
  const auto data = simulate_cell(config, seed, r);
  Rng split_rng = cell_rng(seed, r, config.attack_mode, 1);
  const DataSplit split = stratified_split(data, config.train_fraction, split_rng);

  CellResult cell;
  cell.seed = seed;
  cell.r = r;
  cell.attack_mode = config.attack_mode;
  cell.n_train = split.train.size();
  cell.n_test = split.test.size();

  const LrtVerifier lrt{config.verifier, scenario,     Threshold::ratio(config.threshold), config.h1_policy,
                        config.attack_mode, config.spoof, cell_rng(seed, r, config.attack_mode, 3)()};
  const auto scores = lrt_scores(lrt, split.test);
  cell.lrt = stats_from_scores(scores, split.test, lrt.threshold, scenario.prior_h0, scenario.prior_h1);
  cell.lrt_best = cell.lrt;
  cell.lrt_best_ell = config.threshold;
  for (double ell : comparison_threshold_grid()) {
    const auto s = stats_from_scores(scores, split.test, Threshold::ratio(ell), scenario.prior_h0, scenario.prior_h1);
    if (s.total_error < cell.lrt_best.total_error) {
      cell.lrt_best = s;
      cell.lrt_best_ell = ell;
    }
  }
  cell.lrt_test_hash = content_hash(split.test);

  for (std::size_t m : config.learning_curve_sizes) {
    TrainConfig tc = config.train;
    tc.rng_seed = make_rng(seed, {std::bit_cast<std::uint64_t>(r), static_cast<std::uint64_t>(config.attack_mode), 2,
                                  static_cast<std::uint64_t>(m)})();
    const std::span<const LabeledObservation> subset(split.train.data(), m);
    const TrainResult tr = train(scenario, subset, tc);
    CurvePoint p;
    p.train_size = m;
    p.stats = evaluate(tr.model, scenario, split.test);
    p.stop_reason = tr.stop_reason;
    p.epochs = tr.trace.back().epoch;
    p.test_hash = content_hash(split.test);
    cell.ml_curve.push_back(p);
  }
  return cell;
}

/// Runs every (seed, r) cell. Cells are independent and deterministic, so the result does not
/// depend on the thread count.
inline ComparisonResult run_comparison(const ExperimentConfig& config) {
  config.validate();
  struct Job {
    std::uint64_t seed;
    double r;
  };
  std::vector<Job> jobs;
  for (auto seed : config.seeds)
    for (double r : config.r_values) jobs.push_back({seed, r});

  ComparisonResult result;
  result.config = config;
  result.cells.resize(jobs.size());

  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  const std::size_t n_threads = std::min(jobs.size(), config.threads == 0 ? hw : config.threads);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        result.cells[i] = run_cell(config, jobs[i].seed, jobs[i].r);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

/// Trailing-window moving average; output has values.size() - window + 1 entries.
inline std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0 || values.size() < window) throw InvalidArgument("moving average window larger than series");
  std::vector<double> out;
  for (std::size_t i = 0; i + window <= values.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < window; ++k) s += values[i + k];
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

}  // namespace lvs

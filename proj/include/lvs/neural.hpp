#pragma once

// Feed-forward neural verifier: one hidden layer, Levenberg-Marquardt training with
// validation-failure early stopping.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lvs/channel.hpp"
#include "lvs/error.hpp"
#include "lvs/lrt.hpp"
#include "lvs/random.hpp"
#include "lvs/scenario.hpp"

namespace lvs {

using FeatureVector = std::vector<double>;
using FeatureMatrix = std::vector<FeatureVector>;

/// FNV-1a over the bit patterns of a set of rows; identifies which rows fed a statistic.
inline std::uint64_t fingerprint_rows(std::span<const FeatureVector> rows) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& row : rows) {
    const std::uint64_t len = row.size();
    mix(&len, sizeof len);
    mix(row.data(), row.size() * sizeof(double));
  }
  return h;
}

/// Per-feature z-score. Constant features keep scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;
  std::size_t fitted_rows = 0;    ///< number of rows the statistics came from (0 for identity)
  std::uint64_t fingerprint = 0;  ///< fingerprint_rows() of those rows

  static Standardizer identity(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)}; }

  static Standardizer fit(std::span<const FeatureVector> rows) {
    if (rows.empty()) throw InvalidArgument("cannot fit a standardizer on zero rows");
    const std::size_t d = rows.front().size();
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), rows.size(), fingerprint_rows(rows)};
    for (const auto& row : rows) {
      if (row.size() != d) throw InvalidArgument("feature rows have inconsistent lengths");
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
    }
    const double n = static_cast<double>(rows.size());
    for (auto& m : s.mean) m /= n;
    for (const auto& row : rows)
      for (std::size_t j = 0; j < d; ++j) s.scale[j] += (row[j] - s.mean[j]) * (row[j] - s.mean[j]);
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(s.scale[j] / n);
      s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[j])) ? sd : 1.0;
    }
    return s;
  }

  std::size_t size() const { return mean.size(); }

  FeatureVector apply(std::span<const double> raw) const {
    if (raw.size() != mean.size())
      throw InvalidArgument("feature length " + std::to_string(raw.size()) + " does not match standardizer " +
                            std::to_string(mean.size()));
    FeatureVector out(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) out[j] = (raw[j] - mean[j]) / scale[j];
    return out;
  }

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

/// Unstandardized layout: [rss_1..rss_N, claim_x, claim_y, rsu_1_x, rsu_1_y, ..., rsu_N_x, rsu_N_y].
inline FeatureVector raw_features(const Scenario& scenario, std::span<const double> obs, const Location& claimed) {
  if (obs.size() != scenario.rsu_count())
    throw InvalidArgument("observation length " + std::to_string(obs.size()) + " does not match " +
                          std::to_string(scenario.rsu_count()) + " RSUs");
  FeatureVector f(obs.begin(), obs.end());
  f.reserve(3 * obs.size() + 2);
  f.push_back(claimed.x);
  f.push_back(claimed.y);
  for (const auto& rsu : scenario.rsus) {
    f.push_back(rsu.x);
    f.push_back(rsu.y);
  }
  return f;
}

inline FeatureVector assemble_features(const Scenario& scenario, std::span<const double> obs, const Location& claimed,
                                       const Standardizer& standardizer) {
  return standardizer.apply(raw_features(scenario, obs, claimed));
}

enum class Transfer { tansig, logsig, purelin };

inline double activate(Transfer t, double z) {
  switch (t) {
    case Transfer::tansig:
      return std::tanh(z);
    case Transfer::logsig:
      return 1.0 / (1.0 + std::exp(-z));
    case Transfer::purelin:
      return z;
  }
  return z;
}

/// Derivative expressed through the activation value a = f(z).
inline double activate_derivative(Transfer t, double a) {
  switch (t) {
    case Transfer::tansig:
      return 1.0 - a * a;
    case Transfer::logsig:
      return a * (1.0 - a);
    case Transfer::purelin:
      return 1.0;
  }
  return 1.0;
}

/// Single-hidden-layer network with a scalar output.
/// Parameter order: w1 (row-major, hidden x input), b1, w2, b2.
struct MlpModel {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;
  Transfer hidden_transfer = Transfer::tansig;
  Transfer output_transfer = Transfer::purelin;
  Standardizer standardizer;

  static MlpModel zeros(std::size_t input_size, std::size_t hidden_size) {
    MlpModel m;
    m.w1 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(hidden_size), static_cast<Eigen::Index>(input_size));
    m.b1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden_size));
    m.w2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden_size));
    m.standardizer = Standardizer::identity(input_size);
    return m;
  }

  std::size_t input_size() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_size() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t parameter_count() const { return hidden_size() * (input_size() + 2) + 1; }

  Eigen::VectorXd parameters() const {
    Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < w1.rows(); ++j)
      for (Eigen::Index i = 0; i < w1.cols(); ++i) p[k++] = w1(j, i);
    for (Eigen::Index j = 0; j < b1.size(); ++j) p[k++] = b1[j];
    for (Eigen::Index j = 0; j < w2.size(); ++j) p[k++] = w2[j];
    p[k] = b2;
    return p;
  }

  void set_parameters(const Eigen::VectorXd& p) {
    if (static_cast<std::size_t>(p.size()) != parameter_count()) throw InvalidArgument("parameter vector size mismatch");
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < w1.rows(); ++j)
      for (Eigen::Index i = 0; i < w1.cols(); ++i) w1(j, i) = p[k++];
    for (Eigen::Index j = 0; j < b1.size(); ++j) b1[j] = p[k++];
    for (Eigen::Index j = 0; j < w2.size(); ++j) w2[j] = p[k++];
    b2 = p[k];
  }

  bool is_finite() const { return parameters().allFinite(); }
};

namespace detail {

inline void check_input(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.input_size())
    throw InvalidArgument("input has " + std::to_string(x.size()) + " features, model expects " +
                          std::to_string(model.input_size()));
}

inline Eigen::VectorXd hidden_activations(const MlpModel& model, std::span<const double> x) {
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd h = model.w1 * xv + model.b1;
  for (Eigen::Index j = 0; j < h.size(); ++j) h[j] = activate(model.hidden_transfer, h[j]);
  return h;
}

}  // namespace detail

/// Network output for an already standardized feature vector.
inline double forward(const MlpModel& model, std::span<const double> x) {
  detail::check_input(model, x);
  const Eigen::VectorXd h = detail::hidden_activations(model, x);
  return activate(model.output_transfer, model.w2.dot(h) + model.b2);
}

/// d(score)/d(parameter) for every parameter, in MlpModel::parameters() order.
inline Eigen::VectorXd jacobian(const MlpModel& model, std::span<const double> x) {
  detail::check_input(model, x);
  const Eigen::VectorXd h = detail::hidden_activations(model, x);
  const double out = activate(model.output_transfer, model.w2.dot(h) + model.b2);
  const double d_out = activate_derivative(model.output_transfer, out);

  const auto n_in = static_cast<Eigen::Index>(model.input_size());
  const auto n_hid = static_cast<Eigen::Index>(model.hidden_size());
  Eigen::VectorXd g(static_cast<Eigen::Index>(model.parameter_count()));
  for (Eigen::Index j = 0; j < n_hid; ++j) {
    const double delta = d_out * model.w2[j] * activate_derivative(model.hidden_transfer, h[j]);
    for (Eigen::Index i = 0; i < n_in; ++i) g[j * n_in + i] = delta * x[static_cast<std::size_t>(i)];
    g[n_hid * n_in + j] = delta;
    g[n_hid * n_in + n_hid + j] = d_out * h[j];
  }
  g[n_hid * (n_in + 2)] = d_out;
  return g;
}

/// Marquardt scales the damping by diag(J^T J); Levenberg uses the identity.
enum class Damping { marquardt, levenberg };

struct TrainConfig {
  std::size_t hidden_size = 10;
  Transfer hidden_transfer = Transfer::tansig;
  Transfer output_transfer = Transfer::purelin;
  int max_validation_failures = 6;
  int max_epochs = 1000;
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double lambda_max = 1e10;
  double min_gradient = 1e-10;
  Damping damping = Damping::marquardt;
  double validation_fraction = 0.2;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (hidden_size < 1) throw InvalidArgument("hidden_size must be >= 1");
    if (max_validation_failures < 1) throw InvalidArgument("max_validation_failures must be >= 1");
    if (max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
    if (!(lambda_init > 0.0 && lambda_up > 0.0 && lambda_down > 0.0 && lambda_max > 0.0))
      throw InvalidArgument("damping factors must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction <= 0.5))
      throw InvalidArgument("validation_fraction must lie in (0, 0.5]");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TraceRow {
  int epoch = 0;
  double train_sse = 0.0;
  double val_sse = 0.0;  ///< NaN when there is no validation set
  double lambda = 0.0;
  int val_failures = 0;
};

enum class StopReason { validation_failures, max_epochs, damping_limit, min_gradient };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::validation_failures:
      return "validation_failures";
    case StopReason::max_epochs:
      return "max_epochs";
    case StopReason::damping_limit:
      return "damping_limit";
    case StopReason::min_gradient:
      return "min_gradient";
  }
  return "unknown";
}

struct TrainResult {
  MlpModel model;  ///< best-validation snapshot
  std::vector<TraceRow> trace;
  StopReason stop_reason = StopReason::max_epochs;
  int best_epoch = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
};

/// Normal equations of one LM iteration, built from standardized inputs.
struct LmSystem {
  Eigen::MatrixXd jtj;
  Eigen::VectorXd jte;  ///< J^T (target - score): the descent direction of the SSE, up to a factor 2
  double sse = 0.0;
};

inline LmSystem build_lm_system(const MlpModel& model, std::span<const FeatureVector> x, std::span<const double> t) {
  const auto p = static_cast<Eigen::Index>(model.parameter_count());
  Eigen::MatrixXd J(static_cast<Eigen::Index>(x.size()), p);
  Eigen::VectorXd e(static_cast<Eigen::Index>(x.size()));
  for (std::size_t n = 0; n < x.size(); ++n) {
    J.row(static_cast<Eigen::Index>(n)) = jacobian(model, x[n]).transpose();
    e[static_cast<Eigen::Index>(n)] = t[n] - forward(model, x[n]);
  }
  return {J.transpose() * J, J.transpose() * e, e.squaredNorm()};
}

/// Solves (J^T J + lambda D) delta = J^T e. Returns an empty vector if the system cannot be solved.
inline Eigen::VectorXd solve_lm_step(const LmSystem& sys, double lambda, Damping damping) {
  Eigen::MatrixXd m = sys.jtj;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double d = damping == Damping::marquardt ? std::max(sys.jtj(i, i), 1e-12) : 1.0;
    m(i, i) += lambda * d;
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success) return {};
  Eigen::VectorXd delta = ldlt.solve(sys.jte);
  if (!delta.allFinite()) return {};
  return delta;
}

inline double sse(const MlpModel& model, std::span<const FeatureVector> x, std::span<const double> t) {
  double s = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double e = t[n] - forward(model, x[n]);
    s += e * e;
  }
  return s;
}

namespace detail {

/// Seeded, label-stratified split. Each class keeps at least one training sample.
inline void stratified_split(std::span<const int> labels, double fraction, Rng& rng, std::vector<std::size_t>& train,
                             std::vector<std::size_t>& validation) {
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size()) + 0.5));
    n_val = std::min(n_val, idx.size() - 1);
    validation.insert(validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(validation.begin(), validation.end());
}

inline std::string format_trace_tail(std::span<const TraceRow> trace) {
  std::ostringstream os;
  os << "last epochs (epoch train_sse val_sse lambda failures):";
  for (std::size_t i = trace.size() > 5 ? trace.size() - 5 : 0; i < trace.size(); ++i)
    os << " [" << trace[i].epoch << ' ' << trace[i].train_sse << ' ' << trace[i].val_sse << ' ' << trace[i].lambda
       << ' ' << trace[i].val_failures << ']';
  return os.str();
}

}  // namespace detail

/// Levenberg-Marquardt on the sum of squared errors against targets {0, 1}.
///
/// A stratified share of the rows is held out for validation and the standardizer is fitted on
/// the remaining training rows only. After each accepted step the validation SSE is checked; a
/// step that does not improve the best value so far counts as a failure, an improvement resets
/// the count. Training stops at `max_validation_failures`, `max_epochs`, when the damping exceeds
/// `lambda_max`, or when the gradient vanishes. The returned model is the best-validation snapshot.
inline TrainResult train(std::span<const FeatureVector> raw_rows, std::span<const int> labels,
                         const TrainConfig& config) {
  config.validate();
  if (raw_rows.size() != labels.size()) throw InvalidArgument("feature rows and labels differ in count");
  if (raw_rows.size() < 10) throw InvalidArgument("training needs at least 10 samples");
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos + static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0)) != labels.size())
    throw InvalidArgument("labels must be 0 or 1");
  if (n_pos == 0 || n_pos == labels.size()) throw InvalidArgument("training data must contain both labels");
  const std::size_t n_in = raw_rows.front().size();
  for (const auto& row : raw_rows)
    if (row.size() != n_in) throw InvalidArgument("feature rows have inconsistent lengths");

  Rng rng = make_rng(config.rng_seed);
  TrainResult result;
  detail::stratified_split(labels, config.validation_fraction, rng, result.train_indices, result.validation_indices);

  FeatureMatrix train_raw;
  for (std::size_t i : result.train_indices) train_raw.push_back(raw_rows[i]);
  const Standardizer standardizer = Standardizer::fit(train_raw);

  FeatureMatrix xt, xv;
  std::vector<double> tt, tv;
  for (std::size_t i : result.train_indices) {
    xt.push_back(standardizer.apply(raw_rows[i]));
    tt.push_back(labels[i]);
  }
  for (std::size_t i : result.validation_indices) {
    xv.push_back(standardizer.apply(raw_rows[i]));
    tv.push_back(labels[i]);
  }

  MlpModel model = MlpModel::zeros(n_in, config.hidden_size);
  model.hidden_transfer = config.hidden_transfer;
  model.output_transfer = config.output_transfer;
  model.standardizer = standardizer;
  {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(n_in));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
    for (Eigen::Index j = 0; j < model.w1.rows(); ++j)
      for (Eigen::Index i = 0; i < model.w1.cols(); ++i) model.w1(j, i) = s1 * u(rng);
    for (Eigen::Index j = 0; j < model.b1.size(); ++j) model.b1[j] = s1 * u(rng);
    for (Eigen::Index j = 0; j < model.w2.size(); ++j) model.w2[j] = s2 * u(rng);
    model.b2 = s2 * u(rng);
  }

  const bool has_validation = !xv.empty();
  auto val_sse = [&](const MlpModel& m) {
    return has_validation ? sse(m, xv, tv) : std::numeric_limits<double>::quiet_NaN();
  };

  double lambda = config.lambda_init;
  double train_sse = sse(model, xt, tt);
  double best_val = val_sse(model);
  MlpModel best = model;
  int failures = 0;
  result.trace.push_back({0, train_sse, best_val, lambda, 0});
  if (!std::isfinite(train_sse))
    throw NumericalError("non-finite training loss at initialization; " + detail::format_trace_tail(result.trace));

  result.stop_reason = StopReason::max_epochs;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const LmSystem sys = build_lm_system(model, xt, tt);
    if (sys.jte.lpNorm<Eigen::Infinity>() < config.min_gradient) {
      result.stop_reason = StopReason::min_gradient;
      break;
    }
    bool accepted = false;
    while (lambda <= config.lambda_max) {
      const Eigen::VectorXd delta = solve_lm_step(sys, lambda, config.damping);
      if (delta.size() != 0) {
        MlpModel candidate = model;
        candidate.set_parameters(model.parameters() + delta);
        const double candidate_sse = sse(candidate, xt, tt);
        if (candidate_sse < train_sse) {
          model = std::move(candidate);
          train_sse = candidate_sse;
          lambda *= config.lambda_down;
          accepted = true;
          break;
        }
      }
      lambda *= config.lambda_up;
    }
    if (!accepted) {
      result.stop_reason = StopReason::damping_limit;
      break;
    }
    if (!std::isfinite(train_sse) || !model.is_finite())
      throw NumericalError("non-finite training loss; " + detail::format_trace_tail(result.trace));

    const double v = val_sse(model);
    if (has_validation) {
      if (!std::isfinite(v)) throw NumericalError("non-finite validation loss; " + detail::format_trace_tail(result.trace));
      if (v < best_val) {
        best_val = v;
        best = model;
        result.best_epoch = epoch;
        failures = 0;
      } else {
        ++failures;
      }
    } else {
      best = model;
      result.best_epoch = epoch;
    }
    result.trace.push_back({epoch, train_sse, v, lambda, failures});
    if (failures >= config.max_validation_failures) {
      result.stop_reason = StopReason::validation_failures;
      break;
    }
  }
  result.model = std::move(best);
  return result;
}

/// Decision at the midpoint of the {0, 1} targets; ties go to D1.
struct Classification {
  Decision decision = Decision::legitimate;
  double score = 0.0;
};

inline Classification classify(const MlpModel& model, std::span<const double> features) {
  const double score = forward(model, features);
  return {score >= 0.5 ? Decision::malicious : Decision::legitimate, score};
}

/// Raw rows and 0/1 labels for a set of observations.
inline void to_training_rows(const Scenario& scenario, std::span<const LabeledObservation> data, FeatureMatrix& rows,
                             std::vector<int>& labels) {
  rows.clear();
  labels.clear();
  for (const auto& o : data) {
    rows.push_back(raw_features(scenario, o.rss, o.sample.claimed_loc));
    labels.push_back(label_value(o.sample.label));
  }
}

inline TrainResult train(const Scenario& scenario, std::span<const LabeledObservation> data,
                         const TrainConfig& config) {
  FeatureMatrix rows;
  std::vector<int> labels;
  to_training_rows(scenario, data, rows, labels);
  return train(rows, labels, config);
}

inline DetectionStats evaluate(const MlpModel& model, const Scenario& scenario,
                               std::span<const LabeledObservation> dataset) {
  ConfusionCounts c;
  for (const auto& o : dataset)
    c.add(o.sample.label,
          classify(model, assemble_features(scenario, o.rss, o.sample.claimed_loc, model.standardizer)).decision);
  return DetectionStats::from_counts(c, scenario.prior_h0, scenario.prior_h1);
}

}  // namespace lvs

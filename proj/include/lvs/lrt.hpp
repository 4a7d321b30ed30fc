#pragma once

// Likelihood-ratio-test verifier and the detection statistics shared by every verifier.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lvs/adversary.hpp"
#include "lvs/channel.hpp"
#include "lvs/error.hpp"
#include "lvs/random.hpp"
#include "lvs/scenario.hpp"

namespace lvs {

enum class Decision { legitimate = 0, malicious = 1 };

/// An observation together with the ground truth that produced it.
struct LabeledObservation {
  GroundTruthSample sample;
  RssVector rss;

  friend bool operator==(const LabeledObservation&, const LabeledObservation&) = default;
};

struct ConfusionCounts {
  std::size_t n_h0 = 0;
  std::size_t n_h1 = 0;
  std::size_t false_positives = 0;  ///< legitimate vehicles flagged malicious
  std::size_t true_detections = 0;  ///< malicious vehicles flagged malicious

  void add(Hypothesis truth, Decision d) {
    if (truth == Hypothesis::legitimate) {
      ++n_h0;
      false_positives += d == Decision::malicious;
    } else {
      ++n_h1;
      true_detections += d == Decision::malicious;
    }
  }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    n_h0 += o.n_h0;
    n_h1 += o.n_h1;
    false_positives += o.false_positives;
    true_detections += o.true_detections;
    return *this;
  }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// False-positive rate alpha, detection rate beta and the prior-weighted Total Error.
struct DetectionStats {
  double alpha = 0.0;
  double beta = 0.0;
  double total_error = 0.0;
  ConfusionCounts counts;
  double prior_h0 = 0.5;
  double prior_h1 = 0.5;

  static DetectionStats from_counts(const ConfusionCounts& c, double prior_h0, double prior_h1) {
    if (c.n_h0 == 0 || c.n_h1 == 0)
      throw InvalidArgument("detection statistics need both legitimate and malicious samples");
    DetectionStats s;
    s.counts = c;
    s.prior_h0 = prior_h0;
    s.prior_h1 = prior_h1;
    s.alpha = static_cast<double>(c.false_positives) / static_cast<double>(c.n_h0);
    s.beta = static_cast<double>(c.true_detections) / static_cast<double>(c.n_h1);
    s.total_error = prior_h0 * s.alpha + prior_h1 * (1.0 - s.beta);
    return s;
  }

  std::size_t n() const { return counts.n_h0 + counts.n_h1; }

  friend bool operator==(const DetectionStats&, const DetectionStats&) = default;
};

/// sqrt(xi (1 - xi) / n), the tolerance unit for every stochastic comparison.
inline double binomial_se(double xi, std::size_t n) {
  return std::sqrt(xi * (1.0 - xi) / static_cast<double>(n));
}

/// Decision threshold ell, held in the log domain so that degenerate thresholds stay representable.
class Threshold {
 public:
  static Threshold ratio(double ell) {
    if (!(ell > 0.0) || !std::isfinite(ell)) throw InvalidArgument("LRT threshold must be positive and finite");
    return Threshold(std::log(ell));
  }
  static Threshold log_ratio(double log_ell) {
    if (!std::isfinite(log_ell)) throw InvalidArgument("LRT log-threshold must be finite");
    return Threshold(log_ell);
  }

  double log_value() const { return log_value_; }
  double value() const { return std::exp(log_value_); }

  /// Ties go to D1, following the >= in the decision rule.
  Decision decide(double log_ratio) const {
    return log_ratio >= log_value_ ? Decision::malicious : Decision::legitimate;
  }

 private:
  explicit Threshold(double log_value) : log_value_(log_value) {}
  double log_value_;
};

/// Which true location the verifier assumes under H1 when forming the mean vector v.
enum class H1MeanPolicy {
  /// Ground truth of the malicious alternative. For malicious samples this is the actual true
  /// location. A legitimate sample has no attacker origin (its true location equals the claim, which
  /// would make v = u), so the verifier substitutes one produced by the attack model: a random
  /// spoofing origin mirrored about the claim, or the KL-closest origin for optimized attacks.
  oracle,
  /// The KL-closest position at distance >= r from the claim inside the area. Computable by a
  /// defender without ground truth.
  worst_case,
};

struct LrtVerifier {
  ChannelParams params;
  Scenario scenario;
  Threshold threshold = Threshold::ratio(1.0);
  H1MeanPolicy h1_policy = H1MeanPolicy::oracle;
  AttackMode attack_model = AttackMode::random;  ///< how oracle counterfactual origins are drawn
  SpoofDistribution spoof;
  std::uint64_t counterfactual_seed = 0;
};

/// ln p(y|H1) - ln p(y|H0) = (|y - u|^2 - |y - v|^2) / (2 sigma^2); normalizing constants cancel.
inline double log_likelihood_ratio(const LrtVerifier& verifier, std::span<const double> obs, const Location& claimed,
                                   const Location& h1_true_candidate) {
  const auto& rsus = verifier.scenario.rsus;
  if (obs.size() != rsus.size())
    throw InvalidArgument("observation length " + std::to_string(obs.size()) + " does not match " +
                          std::to_string(rsus.size()) + " RSUs");
  const auto u = mean_rss(verifier.params, claimed, rsus);
  const auto v = mean_rss(verifier.params, h1_true_candidate, rsus);
  double du = 0.0, dv = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    du += (obs[i] - u[i]) * (obs[i] - u[i]);
    dv += (obs[i] - v[i]) * (obs[i] - v[i]);
  }
  const double s2 = verifier.params.sigma_t * verifier.params.sigma_t;
  return (du - dv) / (2.0 * s2);
}

inline Decision decide(const LrtVerifier& verifier, std::span<const double> obs, const Location& claimed,
                       const Location& h1_true_candidate) {
  return verifier.threshold.decide(log_likelihood_ratio(verifier, obs, claimed, h1_true_candidate));
}

inline Location worst_case_candidate(const LrtVerifier& verifier, const Location& claim) {
  const Scenario& s = verifier.scenario;
  return worst_case_true_location(verifier.params, s.rsus, claim, s.r, s.tx_range, s.area);
}

/// Counterfactual attacker origin for a legitimate claim. A pure function of the claim and the
/// verifier's seed, so repeated evaluations agree.
inline Location counterfactual_origin(const LrtVerifier& verifier, const Location& claim) {
  if (verifier.attack_model == AttackMode::optimized) return worst_case_candidate(verifier, claim);
  Rng rng = make_rng(verifier.counterfactual_seed,
                     {std::bit_cast<std::uint64_t>(claim.x), std::bit_cast<std::uint64_t>(claim.y)});
  return sample_spoof_origin(verifier.scenario, claim, rng, verifier.spoof);
}

inline Location h1_candidate(const LrtVerifier& verifier, const GroundTruthSample& sample) {
  switch (verifier.h1_policy) {
    case H1MeanPolicy::oracle:
      return sample.label == Hypothesis::malicious ? sample.true_loc : counterfactual_origin(verifier, sample.claimed_loc);
    case H1MeanPolicy::worst_case:
      return worst_case_candidate(verifier, sample.claimed_loc);
  }
  throw InvalidArgument("unknown H1 mean policy");
}

/// Cached per-sample log-likelihood ratios, computed once for any number of thresholds.
inline std::vector<double> lrt_scores(const LrtVerifier& verifier, std::span<const LabeledObservation> dataset) {
  std::vector<double> scores;
  scores.reserve(dataset.size());
  for (const auto& o : dataset)
    scores.push_back(log_likelihood_ratio(verifier, o.rss, o.sample.claimed_loc, h1_candidate(verifier, o.sample)));
  return scores;
}

inline DetectionStats stats_from_scores(std::span<const double> scores, std::span<const LabeledObservation> dataset,
                                        const Threshold& threshold, double prior_h0, double prior_h1) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < dataset.size(); ++i) c.add(dataset[i].sample.label, threshold.decide(scores[i]));
  return DetectionStats::from_counts(c, prior_h0, prior_h1);
}

inline DetectionStats evaluate(const LrtVerifier& verifier, std::span<const LabeledObservation> dataset) {
  if (dataset.empty()) throw InvalidArgument("cannot evaluate an empty dataset");
  const auto scores = lrt_scores(verifier, dataset);
  return stats_from_scores(scores, dataset, verifier.threshold, verifier.scenario.prior_h0,
                           verifier.scenario.prior_h1);
}

struct ThresholdPoint {
  double ell = 1.0;
  DetectionStats stats;
};

inline std::vector<ThresholdPoint> sweep_threshold(const LrtVerifier& verifier,
                                                   std::span<const LabeledObservation> dataset,
                                                   std::span<const double> thresholds) {
  if (thresholds.empty()) throw InvalidArgument("threshold sweep needs at least one threshold");
  if (dataset.empty()) throw InvalidArgument("cannot evaluate an empty dataset");
  for (double ell : thresholds) (void)Threshold::ratio(ell);
  const auto scores = lrt_scores(verifier, dataset);
  std::vector<ThresholdPoint> out;
  out.reserve(thresholds.size());
  for (double ell : thresholds)
    out.push_back({ell, stats_from_scores(scores, dataset, Threshold::ratio(ell), verifier.scenario.prior_h0,
                                          verifier.scenario.prior_h1)});
  return out;
}

/// Geometric grid of thresholds, exp(lo), ..., exp(hi).
inline std::vector<double> log_spaced_thresholds(double log_lo, double log_hi, std::size_t count) {
  if (count < 2 || !(log_hi > log_lo)) throw InvalidArgument("threshold grid needs count >= 2 and lo < hi");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(i) / static_cast<double>(count - 1));
  return out;
}

/// Sweep point with the smallest Total Error; the earliest (smallest ell) wins ties.
inline const ThresholdPoint& best_threshold(std::span<const ThresholdPoint> sweep) {
  if (sweep.empty()) throw InvalidArgument("empty threshold sweep");
  return *std::min_element(sweep.begin(), sweep.end(), [](const ThresholdPoint& a, const ThresholdPoint& b) {
    return a.stats.total_error < b.stats.total_error;
  });
}

}  // namespace lvs

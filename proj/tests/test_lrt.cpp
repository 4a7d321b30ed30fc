#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lvs/lrt.hpp"

using namespace lvs;

namespace {

double q_function(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

// Tail probabilities of the log-ratio: under H0 it is N(-D^2/2s^2, D^2/s^2), under H1 N(+D^2/2s^2, D^2/s^2).
double alpha_closed_form(double d, double sigma, double log_ell) {
  return q_function(sigma * log_ell / d + d / (2.0 * sigma));
}
double beta_closed_form(double d, double sigma, double log_ell) {
  return q_function(sigma * log_ell / d - d / (2.0 * sigma));
}

// P(L >= t) for L ~ N(mean, var) by composite Simpson integration of the density.
double gaussian_tail_by_quadrature(double mean, double var, double t) {
  const double sd = std::sqrt(var);
  const double hi = mean + 40.0 * sd;
  if (t >= hi) return 0.0;
  const int n = 200000;
  const double h = (hi - t) / n;
  auto pdf = [&](double x) { return std::exp(-0.5 * (x - mean) * (x - mean) / var) / (sd * std::sqrt(2.0 * std::numbers::pi)); };
  double s = pdf(t) + pdf(hi);
  for (int i = 1; i < n; ++i) s += pdf(t + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

LrtVerifier verifier_for(const ChannelParams& p, double ell = 1.0) {
  LrtVerifier v;
  v.params = p;
  v.scenario = default_scenario();
  v.threshold = Threshold::ratio(ell);
  return v;
}

double mean_distance(const ChannelParams& p, const std::vector<Location>& rsus, const Location& a, const Location& b) {
  const auto u = mean_rss(p, a, rsus), v = mean_rss(p, b, rsus);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
  return std::sqrt(s);
}

}  // namespace

TEST(LogLikelihoodRatio, AtEitherMeanGivesHalfSquaredSeparation) {
  const ChannelParams p;
  const auto ver = verifier_for(p);
  const Location claim{30.0, 40.0}, truth{110.0, 90.0};
  const auto u = mean_rss(p, claim, ver.scenario.rsus), v = mean_rss(p, truth, ver.scenario.rsus);
  const double d = mean_distance(p, ver.scenario.rsus, claim, truth);
  const double expected = d * d / (2.0 * p.sigma_t * p.sigma_t);
  EXPECT_NEAR(log_likelihood_ratio(ver, u, claim, truth), -expected, 1e-12 * expected);
  EXPECT_NEAR(log_likelihood_ratio(ver, v, claim, truth), expected, 1e-12 * expected);
  EXPECT_EQ(decide(ver, u, claim, truth), Decision::legitimate);
  EXPECT_EQ(decide(ver, v, claim, truth), Decision::malicious);
}

TEST(LogLikelihoodRatio, EqualsDifferenceOfLogLikelihoods) {
  Rng rng = make_rng(3);
  std::uniform_real_distribution<double> coord(2.0, 148.0), sig(1.0, 8.0), noise(-10.0, 10.0);
  for (int k = 0; k < 200; ++k) {
    ChannelParams p;
    p.sigma_t = sig(rng);
    const auto ver = verifier_for(p);
    const Location claim{coord(rng), coord(rng)}, truth{coord(rng), coord(rng)};
    const auto u = mean_rss(p, claim, ver.scenario.rsus), v = mean_rss(p, truth, ver.scenario.rsus);
    std::vector<double> y(u.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = u[i] + noise(rng);
    const double oracle = log_likelihood(y, v, p.sigma_t) - log_likelihood(y, u, p.sigma_t);
    EXPECT_NEAR(log_likelihood_ratio(ver, y, claim, truth), oracle, 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST(LogLikelihoodRatio, ObservationLengthChecked) {
  const auto ver = verifier_for(ChannelParams{});
  const std::vector<double> y{-60.0, -70.0};
  EXPECT_THROW(log_likelihood_ratio(ver, y, {10.0, 10.0}, {90.0, 90.0}), InvalidArgument);
}

TEST(Decide, TieGoesToMalicious) {
  const auto t = Threshold::log_ratio(0.25);
  EXPECT_EQ(t.decide(0.25), Decision::malicious);
  EXPECT_EQ(t.decide(std::nextafter(0.25, 0.0)), Decision::legitimate);
}

TEST(Decide, DegenerateThresholds) {
  const ChannelParams p;
  auto ver = verifier_for(p);
  Rng rng = make_rng(4);
  const Location claim{30.0, 40.0}, truth{110.0, 90.0};
  for (int k = 0; k < 100; ++k) {
    const auto y = draw_observation(p, k % 2 ? claim : truth, ver.scenario.rsus, rng);
    ver.threshold = Threshold::log_ratio(-1e9);
    EXPECT_EQ(decide(ver, y, claim, truth), Decision::malicious);
    ver.threshold = Threshold::log_ratio(1e9);
    EXPECT_EQ(decide(ver, y, claim, truth), Decision::legitimate);
  }
}

TEST(Decide, LogAndLinearThresholdsAgree) {
  Rng rng = make_rng(5);
  std::uniform_real_distribution<double> score(-30.0, 30.0), lg(-5.0, 5.0);
  for (int k = 0; k < 10000; ++k) {
    const double ell = std::exp(lg(rng)), c = std::exp(lg(rng)), s = score(rng);
    const double shifted = s - std::log(c);
    if (std::abs(shifted - std::log(ell)) < 1e-9) continue;  // skip rounding-level ties
    EXPECT_EQ(Threshold::ratio(ell * c).decide(s), Threshold::ratio(ell).decide(shifted));
  }
}

TEST(Threshold, RejectsNonPositive) {
  EXPECT_THROW(Threshold::ratio(0.0), InvalidArgument);
  EXPECT_THROW(Threshold::ratio(-1.0), InvalidArgument);
  EXPECT_THROW(Threshold::ratio(INFINITY), InvalidArgument);
  EXPECT_THROW(Threshold::log_ratio(NAN), InvalidArgument);
}

TEST(DetectionStats, TotalErrorFromCounts) {
  ConfusionCounts c;
  for (int i = 0; i < 40; ++i) c.add(Hypothesis::legitimate, i < 4 ? Decision::malicious : Decision::legitimate);
  for (int i = 0; i < 60; ++i) c.add(Hypothesis::malicious, i < 51 ? Decision::malicious : Decision::legitimate);
  const auto s = DetectionStats::from_counts(c, 0.3, 0.7);
  EXPECT_EQ(s.alpha, 4.0 / 40.0);
  EXPECT_EQ(s.beta, 51.0 / 60.0);
  EXPECT_EQ(s.total_error, 0.3 * s.alpha + 0.7 * (1.0 - s.beta));
  ConfusionCounts empty_h1;
  empty_h1.add(Hypothesis::legitimate, Decision::legitimate);
  EXPECT_THROW(DetectionStats::from_counts(empty_h1, 0.5, 0.5), InvalidArgument);
}

TEST(DetectionStats, CountMergingIsAssociative) {
  Rng rng = make_rng(6);
  std::bernoulli_distribution b(0.5);
  ConfusionCounts parts[3], whole;
  for (int i = 0; i < 300; ++i) {
    const auto h = b(rng) ? Hypothesis::malicious : Hypothesis::legitimate;
    const auto d = b(rng) ? Decision::malicious : Decision::legitimate;
    parts[i % 3].add(h, d);
    whole.add(h, d);
  }
  ConfusionCounts left = parts[0];
  (left += parts[1]) += parts[2];
  ConfusionCounts right = parts[1];
  right += parts[2];
  ConfusionCounts r2 = parts[0];
  r2 += right;
  EXPECT_EQ(left, whole);
  EXPECT_EQ(r2, whole);
}

namespace {

std::vector<LabeledObservation> simulated(const Scenario& s, const ChannelParams& p, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<LabeledObservation> out;
  for (const auto& g : generate_dataset(s, n, rng)) out.push_back({g, draw_observation(p, g.true_loc, s.rsus, rng)});
  return out;
}

}  // namespace

TEST(Evaluate, NoiselessDataIsSeparatedPerfectly) {
  ChannelParams p;
  p.sigma_t = 1e-6;
  const auto data = simulated(default_scenario(), p, 400, 7);
  const auto s = evaluate(verifier_for(p), data);
  EXPECT_EQ(s.alpha, 0.0);
  EXPECT_EQ(s.beta, 1.0);
  EXPECT_EQ(s.total_error, 0.0);
}

TEST(Evaluate, AlwaysMaliciousGivesHalf) {
  const ChannelParams p;
  const auto data = simulated(default_scenario(), p, 200, 8);
  auto ver = verifier_for(p);
  ver.threshold = Threshold::log_ratio(-1e9);
  const auto s = evaluate(ver, data);
  EXPECT_EQ(s.alpha, 1.0);
  EXPECT_EQ(s.beta, 1.0);
  EXPECT_EQ(s.total_error, 0.5);
}

TEST(Evaluate, SingleClassRejected) {
  const ChannelParams p;
  auto data = simulated(default_scenario(), p, 20, 9);
  std::erase_if(data, [](const LabeledObservation& o) { return o.sample.label == Hypothesis::malicious; });
  EXPECT_THROW(evaluate(verifier_for(p), data), InvalidArgument);
  EXPECT_THROW(evaluate(verifier_for(p), std::vector<LabeledObservation>{}), InvalidArgument);
}

TEST(ClosedForm, QFunctionMatchesQuadrature) {
  for (double d : {2.0, 6.5, 15.0})
    for (double sigma : {1.0, 4.0})
      for (double log_ell : {-2.0, 0.0, 0.7}) {
        const double var = d * d / (sigma * sigma), m = d * d / (2.0 * sigma * sigma);
        EXPECT_NEAR(alpha_closed_form(d, sigma, log_ell), gaussian_tail_by_quadrature(-m, var, log_ell), 1e-9);
        EXPECT_NEAR(beta_closed_form(d, sigma, log_ell), gaussian_tail_by_quadrature(m, var, log_ell), 1e-9);
      }
}

TEST(ClosedForm, EmpiricalRatesAndLogRatioMomentsMatch) {
  const ChannelParams p;
  const auto ver = verifier_for(p);
  const auto& rsus = ver.scenario.rsus;
  const std::pair<Location, Location> geometries[] = {
      {{30.0, 40.0}, {60.0, 80.0}}, {{75.0, 75.0}, {20.0, 120.0}}, {{140.0, 10.0}, {100.0, 50.0}}};
  const int n = 100000;
  for (std::size_t g = 0; g < 3; ++g) {
    const auto& [claim, truth] = geometries[g];
    const double d = mean_distance(p, rsus, claim, truth);
    Rng rng = make_rng(10, {g});
    int fp = 0, td = 0;
    double sum = 0.0, sum2 = 0.0;
    for (int k = 0; k < n; ++k) {
      const double l0 = log_likelihood_ratio(ver, draw_observation(p, claim, rsus, rng), claim, truth);
      fp += ver.threshold.decide(l0) == Decision::malicious;
      sum += l0;
      sum2 += l0 * l0;
      td += decide(ver, draw_observation(p, truth, rsus, rng), claim, truth) == Decision::malicious;
    }
    const double a = alpha_closed_form(d, p.sigma_t, 0.0), b = beta_closed_form(d, p.sigma_t, 0.0);
    EXPECT_NEAR(fp / double(n), a, 3.0 * std::sqrt(a * (1 - a) / n)) << "geometry " << g;
    EXPECT_NEAR(td / double(n), b, 3.0 * std::sqrt(b * (1 - b) / n)) << "geometry " << g;
    const double mean = sum / n, var = sum2 / n - mean * mean;
    const double m0 = -d * d / (2.0 * p.sigma_t * p.sigma_t), v0 = d * d / (p.sigma_t * p.sigma_t);
    EXPECT_NEAR(mean, m0, 3.0 * std::sqrt(v0 / n));
    EXPECT_NEAR(var, v0, 3.0 * v0 * std::sqrt(2.0 / n));
  }
}

TEST(SweepThreshold, SingletonEqualsEvaluate) {
  const ChannelParams p;
  const auto data = simulated(default_scenario(), p, 400, 11);
  const auto ver = verifier_for(p);
  const std::vector<double> one{1.0};
  const auto sweep = sweep_threshold(ver, data, one);
  ASSERT_EQ(sweep.size(), 1u);
  EXPECT_EQ(sweep[0].stats, evaluate(ver, data));
}

TEST(SweepThreshold, RatesNonIncreasingInThreshold) {
  const ChannelParams p;
  const auto data = simulated(default_scenario(), p, 2000, 12);
  const auto grid = log_spaced_thresholds(-600.0, 600.0, 401);
  const auto sweep = sweep_threshold(verifier_for(p), data, grid);
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    EXPECT_LE(sweep[i].stats.alpha, sweep[i - 1].stats.alpha);
    EXPECT_LE(sweep[i].stats.beta, sweep[i - 1].stats.beta);
  }
  EXPECT_EQ(sweep.front().stats.alpha, 1.0);
  EXPECT_EQ(sweep.back().stats.beta, 0.0);
}

TEST(SweepThreshold, RejectsBadThresholds) {
  const ChannelParams p;
  const auto data = simulated(default_scenario(), p, 20, 13);
  const std::vector<double> bad{1.0, -2.0}, none{};
  EXPECT_THROW(sweep_threshold(verifier_for(p), data, bad), InvalidArgument);
  EXPECT_THROW(sweep_threshold(verifier_for(p), data, none), InvalidArgument);
}

TEST(SweepThreshold, BestThresholdNearOneForEqualPriors) {
  const ChannelParams p;
  const auto data = simulated(default_scenario(), p, 200000, 14);
  std::vector<double> grid;
  for (int k = -8; k <= 8; ++k) grid.push_back(std::exp(0.25 * k));
  const auto sweep = sweep_threshold(verifier_for(p), data, grid);
  EXPECT_NEAR(std::log(best_threshold(sweep).ell), 0.0, 0.25 + 1e-12);
}

TEST(H1Candidate, OracleUsesTruthForMaliciousAndStableCounterfactualForLegitimate) {
  auto ver = verifier_for(ChannelParams{});
  ver.counterfactual_seed = 99;
  const GroundTruthSample mal{{10.0, 10.0}, {90.0, 90.0}, Hypothesis::malicious};
  EXPECT_EQ(h1_candidate(ver, mal), mal.true_loc);
  const GroundTruthSample leg{{60.0, 70.0}, {60.0, 70.0}, Hypothesis::legitimate};
  const Location o = h1_candidate(ver, leg);
  EXPECT_EQ(o, h1_candidate(ver, leg));
  EXPECT_GE(distance(o, leg.claimed_loc), ver.scenario.r);
  EXPECT_TRUE(ver.scenario.area.contains(o));
  ver.counterfactual_seed = 100;
  EXPECT_NE(o, h1_candidate(ver, leg));
}

TEST(H1Candidate, WorstCaseIsFeasibleAndLabelBlind) {
  auto ver = verifier_for(ChannelParams{});
  ver.h1_policy = H1MeanPolicy::worst_case;
  const GroundTruthSample leg{{60.0, 70.0}, {60.0, 70.0}, Hypothesis::legitimate};
  const GroundTruthSample mal{{5.0, 140.0}, {60.0, 70.0}, Hypothesis::malicious};
  const Location a = h1_candidate(ver, leg);
  EXPECT_EQ(a, h1_candidate(ver, mal));
  EXPECT_GE(distance(a, leg.claimed_loc), ver.scenario.r);
  EXPECT_TRUE(ver.scenario.area.contains(a));
}

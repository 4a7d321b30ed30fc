#pragma once

// Geometry of the verification problem: RSU layout, vehicle placement and
// legitimate/malicious claimed-location generation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lvs/error.hpp"
#include "lvs/random.hpp"

namespace lvs {

/// Closest a transmitter may be to an RSU antenna. The pathloss model diverges at zero distance.
inline constexpr double kMinRsuDistance = 1.0;

/// Planar position in meters.
struct Location {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

inline double distance(const Location& a, const Location& b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline bool is_finite(const Location& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

/// Axis-aligned rectangle, inclusive on all sides.
struct Rect {
  Location min;
  Location max;

  bool contains(const Location& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
  }
  Location center() const { return {0.5 * (min.x + max.x), 0.5 * (min.y + max.y)}; }
  Rect inflated(double margin) const {
    return {{min.x - margin, min.y - margin}, {max.x + margin, max.y + margin}};
  }
  Location clamp(const Location& p) const {
    return {std::clamp(p.x, min.x, max.x), std::clamp(p.y, min.y, max.y)};
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

enum class Hypothesis { legitimate = 0, malicious = 1 };

inline int label_value(Hypothesis h) { return static_cast<int>(h); }

inline Hypothesis hypothesis_from_label(int label) {
  if (label != 0 && label != 1) throw InvalidArgument("label must be 0 or 1, got " + std::to_string(label));
  return label == 0 ? Hypothesis::legitimate : Hypothesis::malicious;
}

struct Scenario {
  std::vector<Location> rsus;
  Rect area;
  double tx_range = 300.0;
  double r = 50.0;  ///< minimum claimed/true displacement of a malicious vehicle
  double prior_h0 = 0.5;
  double prior_h1 = 0.5;

  std::size_t rsu_count() const { return rsus.size(); }

  void validate() const {
    if (rsus.empty()) throw InvalidArgument("scenario needs at least one RSU");
    if (!is_finite(area.min) || !is_finite(area.max) || area.min.x > area.max.x || area.min.y > area.max.y)
      throw InvalidArgument("scenario area must have finite corners with min <= max");
    if (!(r > 0.0) || !std::isfinite(r)) throw InvalidArgument("spoofing distance r must be positive");
    if (!(tx_range > 0.0) || !std::isfinite(tx_range)) throw InvalidArgument("tx_range must be positive");
    if (!(prior_h0 >= 0.0 && prior_h0 <= 1.0 && prior_h1 >= 0.0 && prior_h1 <= 1.0) ||
        std::abs(prior_h0 + prior_h1 - 1.0) > 1e-12)
      throw InvalidArgument("priors must lie in [0,1] and sum to 1");
    for (std::size_t i = 0; i < rsus.size(); ++i) {
      if (!is_finite(rsus[i]) || !area.contains(rsus[i]))
        throw InvalidArgument("RSU " + std::to_string(i) + " lies outside the area");
      for (std::size_t j = 0; j < i; ++j)
        if (rsus[i] == rsus[j]) throw InvalidArgument("RSU positions must be pairwise distinct");
    }
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// 150 m square with RSU-1 at the origin; RSU-2/3 span the area so the layout is non-collinear.
inline Scenario default_scenario() {
  Scenario s;
  s.rsus = {{0.0, 0.0}, {150.0, 0.0}, {75.0, 150.0}};
  s.area = {{0.0, 0.0}, {150.0, 150.0}};
  s.tx_range = 300.0;
  s.r = 50.0;
  s.prior_h0 = 0.5;
  s.prior_h1 = 0.5;
  return s;
}

/// Spoofed displacement is drawn uniformly from [r, r + extra_distance]. Zero places claims at exactly r.
struct SpoofDistribution {
  double extra_distance = 50.0;
  int max_attempts = 100000;

  friend bool operator==(const SpoofDistribution&, const SpoofDistribution&) = default;
};

struct GroundTruthSample {
  Location true_loc;
  Location claimed_loc;
  Hypothesis label = Hypothesis::legitimate;

  friend bool operator==(const GroundTruthSample&, const GroundTruthSample&) = default;
};

/// Position at `radius` from `center` in direction `angle`, nudged outward until the computed
/// distance is no smaller than `radius`, so displacement constraints hold exactly.
inline Location place_at_distance(const Location& center, double angle, double radius) {
  const double c = std::cos(angle), s = std::sin(angle);
  double d = radius;
  Location p{center.x + d * c, center.y + d * s};
  while (distance(p, center) < radius) {
    d = std::nextafter(d, std::numeric_limits<double>::infinity());
    p = {center.x + d * c, center.y + d * s};
  }
  return p;
}

/// True when `p` is inside some RSU's coverage and not closer than the minimum distance to any RSU.
inline bool is_observable(std::span<const Location> rsus, double tx_range, const Location& p) {
  bool covered = false;
  for (const auto& rsu : rsus) {
    const double d = distance(p, rsu);
    if (d < kMinRsuDistance) return false;
    covered = covered || d <= tx_range;
  }
  return covered;
}

inline Location sample_true_location(const Scenario& scenario, Rng& rng) {
  std::uniform_real_distribution<double> ux(scenario.area.min.x, scenario.area.max.x);
  std::uniform_real_distribution<double> uy(scenario.area.min.y, scenario.area.max.y);
  const double x = ux(rng);
  const double y = uy(rng);
  return {x, y};
}

inline Location sample_spoofed_claim(const Scenario& scenario, const Location& true_loc, Rng& rng,
                                     const SpoofDistribution& spoof = {}) {
  scenario.validate();
  if (!(spoof.extra_distance >= 0.0)) throw InvalidArgument("spoof extra_distance must be non-negative");
  std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> radius_dist(scenario.r, scenario.r + spoof.extra_distance);
  for (int attempt = 0; attempt < spoof.max_attempts; ++attempt) {
    const double angle = angle_dist(rng);
    const double radius = spoof.extra_distance > 0.0 ? radius_dist(rng) : scenario.r;
    const Location claim = place_at_distance(true_loc, angle, radius);
    if (is_observable(scenario.rsus, scenario.tx_range, claim)) return claim;
  }
  throw InfeasibleError("no claim at distance >= r inside RSU coverage was found after " +
                        std::to_string(spoof.max_attempts) + " attempts");
}

/// A position inside the area from which a random spoofer could have produced `claim`: the
/// displacement distribution mirrored about the claim.
inline Location sample_spoof_origin(const Scenario& scenario, const Location& claim, Rng& rng,
                                    const SpoofDistribution& spoof = {}) {
  scenario.validate();
  std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> radius_dist(scenario.r, scenario.r + spoof.extra_distance);
  for (int attempt = 0; attempt < spoof.max_attempts; ++attempt) {
    const double angle = angle_dist(rng);
    const double radius = spoof.extra_distance > 0.0 ? radius_dist(rng) : scenario.r;
    const Location origin = place_at_distance(claim, angle, radius);
    if (scenario.area.contains(origin) && is_observable(scenario.rsus, scenario.tx_range, origin)) return origin;
  }
  throw InfeasibleError("no position inside the area lies at distance >= r from the claim");
}

namespace detail {

inline Location sample_observable_location(const Scenario& scenario, Rng& rng, int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const Location p = sample_true_location(scenario, rng);
    if (is_observable(scenario.rsus, scenario.tx_range, p)) return p;
  }
  throw InfeasibleError("scenario area has no position observable by the RSUs");
}

}  // namespace detail

/// Balanced, shuffled dataset: half legitimate (claim = truth), half randomly spoofed.
inline std::vector<GroundTruthSample> generate_dataset(const Scenario& scenario, std::size_t n_samples, Rng& rng,
                                                       const SpoofDistribution& spoof = {}) {
  scenario.validate();
  if (n_samples % 2 != 0) throw InvalidArgument("n_samples must be even for a balanced dataset");
  std::vector<GroundTruthSample> out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples / 2; ++i) {
    const Location t = detail::sample_observable_location(scenario, rng, spoof.max_attempts);
    out.push_back({t, t, Hypothesis::legitimate});
  }
  for (std::size_t i = 0; i < n_samples / 2; ++i) {
    const Location t = detail::sample_observable_location(scenario, rng, spoof.max_attempts);
    out.push_back({t, sample_spoofed_claim(scenario, t, rng, spoof), Hypothesis::malicious});
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace lvs

#pragma once

// The optimizing attacker: picks the claimed location whose H0 observation distribution is
// closest (in KL divergence) to the distribution its true position actually produces.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <tuple>
#include <vector>

#include "lvs/channel.hpp"
#include "lvs/error.hpp"
#include "lvs/scenario.hpp"

namespace lvs {

/// How malicious vehicles choose their claims.
enum class AttackMode { random = 0, optimized = 1 };

inline const char* to_string(AttackMode m) { return m == AttackMode::random ? "random" : "optimized"; }

struct AttackConstraints {
  double r = 50.0;
  double tx_range = 300.0;
  Rect search_region;

  void validate() const {
    if (!(r > 0.0) || !std::isfinite(r)) throw InvalidArgument("attack displacement r must be positive");
    if (!(tx_range > 0.0)) throw InvalidArgument("tx_range must be positive");
    if (!(search_region.max.x > search_region.min.x && search_region.max.y > search_region.min.y))
      throw InvalidArgument("attack search region must be non-degenerate");
  }

  /// The scenario area grown by the largest random spoofing displacement, r + extra_distance.
  static AttackConstraints from_scenario(const Scenario& scenario, double extra_distance = 50.0) {
    return {scenario.r, scenario.tx_range, scenario.area.inflated(scenario.r + extra_distance)};
  }
};

/// KL(f(y|H1) || f(y|H0)) in nats: |v - u|^2 / (2 sigma^2), v from the true location, u from the claim.
inline double kl_divergence(const ChannelParams& params, std::span<const Location> rsus, const Location& true_loc,
                            const Location& claimed_loc) {
  const auto v = mean_rss(params, true_loc, rsus);
  const auto u = mean_rss(params, claimed_loc, rsus);
  double sq = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) sq += (v[i] - u[i]) * (v[i] - u[i]);
  return sq / (2.0 * params.sigma_t * params.sigma_t);
}

struct OptimizerOptions {
  double grid_step = 5.0;       ///< coarse grid spacing, meters
  double circle_step_deg = 1.0; ///< resolution of the search along the |x_c - x_t| = r boundary
  int local_starts = 8;         ///< grid local minima refined with Nelder-Mead
  int max_iterations = 500;
  double x_tolerance = 1e-10;

  void validate() const {
    if (!(grid_step > 0.0) || !std::isfinite(grid_step)) throw InvalidArgument("grid_step must be positive");
    if (!(circle_step_deg > 0.0 && circle_step_deg <= 90.0)) throw InvalidArgument("circle_step_deg must lie in (0, 90]");
    if (local_starts < 1) throw InvalidArgument("local_starts must be >= 1");
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    if (!(x_tolerance > 0.0)) throw InvalidArgument("x_tolerance must be positive");
  }

  friend bool operator==(const OptimizerOptions&, const OptimizerOptions&) = default;
};

struct ClaimOptimum {
  Location claim;
  double divergence = 0.0;
};

namespace detail {

/// Objective without the 1/(2 sigma^2) factor, so the argmin does not depend on sigma_t.
class MismatchObjective {
 public:
  MismatchObjective(const ChannelParams& params, std::span<const Location> rsus, const Location& anchor,
                    const AttackConstraints& constraints)
      : gamma_(params.gamma), rsus_(rsus), anchor_(anchor), constraints_(constraints) {
    anchor_dist_.reserve(rsus.size());
    for (const auto& rsu : rsus) {
      const double d = distance(anchor, rsu);
      if (!(d >= kMinRsuDistance)) throw InvalidArgument("anchor location is too close to an RSU");
      anchor_dist_.push_back(d);
    }
  }

  bool feasible(const Location& p) const {
    return is_finite(p) && constraints_.search_region.contains(p) && distance(p, anchor_) >= constraints_.r &&
           is_observable(rsus_, constraints_.tx_range, p);
  }

  /// Sum of squared mean-RSS differences; +inf outside the feasible set.
  double operator()(const Location& p) const {
    if (!feasible(p)) return std::numeric_limits<double>::infinity();
    double sq = 0.0;
    for (std::size_t i = 0; i < rsus_.size(); ++i) {
      const double diff = 10.0 * gamma_ * std::log10(distance(p, rsus_[i]) / anchor_dist_[i]);
      sq += diff * diff;
    }
    return sq;
  }

  /// Clamp into the search region, then push radially out to the displacement boundary.
  Location project(const Location& p) const {
    Location q = constraints_.search_region.clamp(p);
    if (distance(q, anchor_) < constraints_.r) {
      const double dx = q.x - anchor_.x, dy = q.y - anchor_.y;
      const double angle = (dx == 0.0 && dy == 0.0) ? 0.0 : std::atan2(dy, dx);
      q = place_at_distance(anchor_, angle, constraints_.r);
    }
    return q;
  }

  const Location& anchor() const { return anchor_; }
  std::span<const Location> rsus() const { return rsus_; }
  std::span<const double> anchor_distances() const { return anchor_dist_; }
  const AttackConstraints& constraints() const { return constraints_; }

 private:
  double gamma_;
  std::span<const Location> rsus_;
  Location anchor_;
  AttackConstraints constraints_;
  std::vector<double> anchor_dist_;
};

struct Candidate {
  Location p;
  double value = std::numeric_limits<double>::infinity();
};

/// Strict ordering by value, ties broken lexicographically on (x, y).
inline bool better(const Candidate& a, const Candidate& b) {
  return std::tie(a.value, a.p.x, a.p.y) < std::tie(b.value, b.p.x, b.p.y);
}

/// Nelder-Mead on the projected objective.
inline Candidate nelder_mead(const MismatchObjective& f, const Location& start, double initial_step,
                             const OptimizerOptions& opt) {
  std::array<Candidate, 3> s;
  s[0].p = f.project(start);
  s[1].p = f.project({start.x + initial_step, start.y});
  s[2].p = f.project({start.x, start.y + initial_step});
  for (auto& c : s) c.value = f(c.p);

  auto eval = [&f](Location p) {
    Candidate c{f.project(p), 0.0};
    c.value = f(c.p);
    return c;
  };

  for (int it = 0; it < opt.max_iterations; ++it) {
    std::sort(s.begin(), s.end(), better);
    const double size = std::max(distance(s[0].p, s[1].p), distance(s[0].p, s[2].p));
    if (size < opt.x_tolerance) break;

    const Location centroid{0.5 * (s[0].p.x + s[1].p.x), 0.5 * (s[0].p.y + s[1].p.y)};
    auto along = [&](double t) {
      return Location{centroid.x + t * (s[2].p.x - centroid.x), centroid.y + t * (s[2].p.y - centroid.y)};
    };

    const Candidate reflected = eval(along(-1.0));
    if (better(reflected, s[0])) {
      const Candidate expanded = eval(along(-2.0));
      s[2] = better(expanded, reflected) ? expanded : reflected;
      continue;
    }
    if (better(reflected, s[1])) {
      s[2] = reflected;
      continue;
    }
    const bool outside = better(reflected, s[2]);
    const Candidate contracted = eval(along(outside ? -0.5 : 0.5));
    if (better(contracted, outside ? reflected : s[2])) {
      s[2] = contracted;
      continue;
    }
    for (std::size_t k = 1; k < s.size(); ++k)
      s[k] = eval({0.5 * (s[0].p.x + s[k].p.x), 0.5 * (s[0].p.y + s[k].p.y)});
  }
  return *std::min_element(s.begin(), s.end(), better);
}

/// Golden-section search for the best angle in [lo, hi] on the displacement circle.
inline Candidate refine_on_circle(const MismatchObjective& f, double lo, double hi) {
  const double r = f.constraints().r;
  auto at = [&](double angle) {
    Candidate c{place_at_distance(f.anchor(), angle, r), 0.0};
    c.value = f(c.p);
    return c;
  };
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  Candidate c1 = at(x1), c2 = at(x2);
  for (int it = 0; it < 200 && (b - a) > 1e-13; ++it) {
    if (c1.value <= c2.value) {
      b = x2;
      x2 = x1;
      c2 = c1;
      x1 = b - g * (b - a);
      c1 = at(x1);
    } else {
      a = x1;
      x1 = x2;
      c1 = c2;
      x2 = a + g * (b - a);
      c2 = at(x2);
    }
  }
  return better(c1, c2) ? c1 : c2;
}

/// Points on the displacement circle that reproduce the anchor's distance to one RSU exactly.
inline std::vector<Location> ambiguity_intersections(const MismatchObjective& f) {
  std::vector<Location> out;
  const Location& a = f.anchor();
  const double r = f.constraints().r;
  for (std::size_t i = 0; i < f.rsus().size(); ++i) {
    const Location& c = f.rsus()[i];
    const double rho = f.anchor_distances()[i];
    // |a + r e(theta) - c| = rho  <=>  cos(theta - phi) = -r / (2 rho), phi the direction from c to a.
    const double phi = std::atan2(a.y - c.y, a.x - c.x);
    const double cosine = -r / (2.0 * rho);
    if (cosine < -1.0) continue;
    const double delta = std::acos(cosine);
    out.push_back(place_at_distance(a, phi + delta, r));
    out.push_back(place_at_distance(a, phi - delta, r));
  }
  return out;
}

inline Candidate minimize_mismatch(const MismatchObjective& f, const OptimizerOptions& opt) {
  const Rect& region = f.constraints().search_region;
  const auto nx = static_cast<std::size_t>(std::floor((region.max.x - region.min.x) / opt.grid_step)) + 1;
  const auto ny = static_cast<std::size_t>(std::floor((region.max.y - region.min.y) / opt.grid_step)) + 1;

  Candidate best;
  std::vector<Candidate> grid(nx * ny);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      Candidate& c = grid[i * ny + j];
      c.p = {region.min.x + static_cast<double>(i) * opt.grid_step,
             region.min.y + static_cast<double>(j) * opt.grid_step};
      c.value = f(c.p);
      if (better(c, best)) best = c;
    }
  }

  // Grid local minima seed the local refinement.
  std::vector<Candidate> starts;
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const Candidate& c = grid[i * ny + j];
      if (!std::isfinite(c.value)) continue;
      bool local_min = true;
      for (int di = -1; di <= 1 && local_min; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          const auto ii = static_cast<std::ptrdiff_t>(i) + di, jj = static_cast<std::ptrdiff_t>(j) + dj;
          if ((di == 0 && dj == 0) || ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(nx) ||
              jj >= static_cast<std::ptrdiff_t>(ny))
            continue;
          if (grid[static_cast<std::size_t>(ii) * ny + static_cast<std::size_t>(jj)].value < c.value) {
            local_min = false;
            break;
          }
        }
      }
      if (local_min) starts.push_back(c);
    }
  }
  std::sort(starts.begin(), starts.end(), better);
  if (starts.size() > static_cast<std::size_t>(opt.local_starts)) starts.resize(static_cast<std::size_t>(opt.local_starts));

  // The constrained optimum usually sits on |x - anchor| = r.
  const double step = opt.circle_step_deg * std::numbers::pi / 180.0;
  const auto n_angles = static_cast<std::size_t>(std::llround(2.0 * std::numbers::pi / step));
  std::vector<Candidate> ring(n_angles);
  for (std::size_t k = 0; k < n_angles; ++k) {
    ring[k].p = place_at_distance(f.anchor(), static_cast<double>(k) * step, f.constraints().r);
    ring[k].value = f(ring[k].p);
    if (better(ring[k], best)) best = ring[k];
  }
  std::vector<std::size_t> ring_minima;
  for (std::size_t k = 0; k < n_angles; ++k) {
    const double v = ring[k].value;
    if (std::isfinite(v) && v <= ring[(k + n_angles - 1) % n_angles].value && v <= ring[(k + 1) % n_angles].value)
      ring_minima.push_back(k);
  }
  std::sort(ring_minima.begin(), ring_minima.end(),
            [&ring](std::size_t a, std::size_t b) { return better(ring[a], ring[b]); });
  if (ring_minima.size() > static_cast<std::size_t>(opt.local_starts))
    ring_minima.resize(static_cast<std::size_t>(opt.local_starts));
  for (std::size_t k : ring_minima) {
    const double angle = static_cast<double>(k) * step;
    const Candidate c = refine_on_circle(f, angle - step, angle + step);
    if (better(c, best)) best = c;
    starts.push_back(c);
  }

  for (const Location& p : ambiguity_intersections(f)) {
    const Candidate c{p, f(p)};
    if (better(c, best)) best = c;
  }

  for (const Candidate& s : starts) {
    const Candidate c = nelder_mead(f, s.p, 0.5 * opt.grid_step, opt);
    if (better(c, best)) best = c;
  }
  return best;
}

}  // namespace detail

/// Claimed location minimizing the KL divergence subject to |claim - true_loc| >= r, RSU coverage
/// and the search region. Coarse grid, then Nelder-Mead from the best grid minima, plus a search
/// along the displacement circle. Equal minima resolve to the lexicographically smallest point.
inline ClaimOptimum optimize_claim(const ChannelParams& params, std::span<const Location> rsus,
                                   const Location& true_loc, const AttackConstraints& constraints,
                                   const OptimizerOptions& options = {}) {
  params.validate();
  constraints.validate();
  options.validate();
  const detail::MismatchObjective objective(params, rsus, true_loc, constraints);
  const detail::Candidate best = detail::minimize_mismatch(objective, options);
  if (!std::isfinite(best.value))
    throw InfeasibleError("no feasible claimed location at distance >= r within coverage and search region");
  return {best.p, kl_divergence(params, rsus, true_loc, best.p)};
}

/// The true location an attacker would most plausibly hold given `claim`: the KL-minimizing
/// position at distance >= r from the claim inside `region`. KL is symmetric here (shared
/// covariance), so this is the attacker's problem with the roles of claim and truth exchanged.
inline Location worst_case_true_location(const ChannelParams& params, std::span<const Location> rsus,
                                         const Location& claim, double r, double tx_range, const Rect& region,
                                         const OptimizerOptions& options = {}) {
  const AttackConstraints constraints{r, tx_range, region};
  return optimize_claim(params, rsus, claim, constraints, options).claim;
}

/// generate_dataset with every malicious claim replaced by the attacker's optimum.
inline std::vector<GroundTruthSample> generate_optimized_dataset(const Scenario& scenario,
                                                                 const ChannelParams& params, std::size_t n_samples,
                                                                 Rng& rng, const SpoofDistribution& spoof = {},
                                                                 const OptimizerOptions& options = {}) {
  auto samples = generate_dataset(scenario, n_samples, rng, spoof);
  const auto constraints = AttackConstraints::from_scenario(scenario, spoof.extra_distance);
  for (auto& s : samples)
    if (s.label == Hypothesis::malicious)
      s.claimed_loc = optimize_claim(params, scenario.rsus, s.true_loc, constraints, options).claim;
  return samples;
}

}  // namespace lvs

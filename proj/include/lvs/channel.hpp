#pragma once

// Log-normal pathloss RSS model. All arithmetic is in the dB domain.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lvs/error.hpp"
#include "lvs/random.hpp"
#include "lvs/scenario.hpp"

namespace lvs {

struct ChannelParams {
  double p_d0 = -40.0;  ///< dBm at the reference distance
  double d0 = 1.0;      ///< meters
  double gamma = 2.5;   ///< pathloss exponent
  double sigma_t = 4.0; ///< dB

  void validate() const {
    if (!std::isfinite(p_d0)) throw InvalidArgument("p_d0 must be finite");
    if (!(d0 > 0.0) || !std::isfinite(d0)) throw InvalidArgument("d0 must be positive");
    if (!std::isfinite(gamma)) throw InvalidArgument("gamma must be finite");
    if (!(sigma_t > 0.0) || !std::isfinite(sigma_t)) throw InvalidArgument("sigma_t must be positive");
  }

  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

/// One RSS value per RSU in dBm, index-aligned with the scenario's RSU list.
using RssVector = std::vector<double>;

/// Mean RSS at each RSU for a transmitter at `source`.
inline std::vector<double> mean_rss(const ChannelParams& params, const Location& source,
                                    std::span<const Location> rsus) {
  std::vector<double> out;
  out.reserve(rsus.size());
  for (std::size_t i = 0; i < rsus.size(); ++i) {
    const double d = distance(source, rsus[i]);
    if (!(d >= kMinRsuDistance))
      throw InvalidArgument("transmitter is closer than " + std::to_string(kMinRsuDistance) + " m to RSU " +
                            std::to_string(i));
    out.push_back(params.p_d0 - 10.0 * params.gamma * std::log10(d / params.d0));
  }
  return out;
}

/// Additive shadowing noise. Student-t noise is rescaled to standard deviation sigma_t
/// (requires dof > 2); it is the heavy-tailed stand-in for real channels.
struct NoiseModel {
  enum class Kind { gaussian, student_t };
  Kind kind = Kind::gaussian;
  double dof = 3.0;

  void validate() const {
    if (kind == Kind::student_t && !(dof > 2.0)) throw InvalidArgument("student-t noise needs dof > 2");
  }

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

inline RssVector draw_observation(const ChannelParams& params, const Location& truth_loc,
                                  std::span<const Location> rsus, Rng& rng, const NoiseModel& noise = {}) {
  noise.validate();
  RssVector y = mean_rss(params, truth_loc, rsus);
  if (noise.kind == NoiseModel::Kind::gaussian) {
    std::normal_distribution<double> w(0.0, params.sigma_t);
    for (auto& v : y) v += w(rng);
  } else {
    std::student_t_distribution<double> t(noise.dof);
    const double scale = params.sigma_t * std::sqrt((noise.dof - 2.0) / noise.dof);
    for (auto& v : y) v += scale * t(rng);
  }
  return y;
}

/// Log density of `obs` under N(mean, sigma_t^2 I).
inline double log_likelihood(std::span<const double> obs, std::span<const double> mean, double sigma_t) {
  if (obs.size() != mean.size())
    throw InvalidArgument("observation has " + std::to_string(obs.size()) + " entries, mean has " +
                          std::to_string(mean.size()));
  if (!(sigma_t > 0.0)) throw InvalidArgument("sigma_t must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double e = obs[i] - mean[i];
    sq += e * e;
  }
  const double n = static_cast<double>(obs.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - n * std::log(sigma_t) - sq / (2.0 * sigma_t * sigma_t);
}

struct DistanceRss {
  double distance = 0.0;
  double rss = 0.0;
};

struct PathlossFit {
  double gamma = 0.0;
  double p_d0 = 0.0;
  double sigma = 0.0;  ///< residual standard deviation, the noise estimate
  std::size_t n = 0;

  ChannelParams to_params(double d0) const { return {p_d0, d0, gamma, sigma}; }
};

/// Ordinary least squares of rss against -10 log10(distance/d0); the slope is gamma and the
/// intercept p_d0. The residual standard deviation uses n-2 degrees of freedom.
inline PathlossFit fit_gamma(std::span<const DistanceRss> samples, double d0) {
  if (!(d0 > 0.0)) throw InvalidArgument("d0 must be positive");
  if (samples.size() < 2) throw InvalidArgument("pathloss fit needs at least two samples");
  const double n = static_cast<double>(samples.size());
  double mx = 0.0, my = 0.0;
  for (const auto& s : samples) {
    if (!(s.distance >= kMinRsuDistance))
      throw InvalidArgument("fit sample distance below " + std::to_string(kMinRsuDistance) + " m");
    if (!std::isfinite(s.rss)) throw InvalidArgument("fit sample RSS must be finite");
    mx += -10.0 * std::log10(s.distance / d0);
    my += s.rss;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& s : samples) {
    const double dx = -10.0 * std::log10(s.distance / d0) - mx;
    sxx += dx * dx;
    sxy += dx * (s.rss - my);
  }
  if (!(sxx > 0.0)) throw NumericalError("pathloss fit is singular: all distances are equal");
  PathlossFit fit;
  fit.n = samples.size();
  fit.gamma = sxy / sxx;
  fit.p_d0 = my - fit.gamma * mx;
  double ssr = 0.0;
  for (const auto& s : samples) {
    const double e = s.rss - (fit.p_d0 - 10.0 * fit.gamma * std::log10(s.distance / d0));
    ssr += e * e;
  }
  fit.sigma = samples.size() > 2 ? std::sqrt(ssr / (n - 2.0)) : 0.0;
  return fit;
}

}  // namespace lvs

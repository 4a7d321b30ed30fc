#pragma once

// JSON configuration and result documents, CSV datasets and reports.
//
// Doubles are written in the shortest form that parses back to the same value, so every output
// is a pure function of its inputs and round-trips exactly.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "lvs/adversary.hpp"
#include "lvs/channel.hpp"
#include "lvs/error.hpp"
#include "lvs/harness.hpp"
#include "lvs/lrt.hpp"
#include "lvs/neural.hpp"
#include "lvs/scenario.hpp"

namespace lvs::io {

using nlohmann::json;

inline constexpr const char* kToolkitVersion = "1.0.0";
inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kOutputSchemaVersion = 1;

// ---------------------------------------------------------------------------------------------
// Number formatting

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

inline std::uint64_t parse_hex64(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw InvalidArgument("bad hex value '" + std::string(s) + "'");
  return v;
}

/// JSON has no NaN; non-finite values become null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------------------------
// Config reading. Every error names the offending key path.

namespace detail {

inline std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

inline std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline const char* type_name(const json& j) { return j.type_name(); }

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, std::string("expected an object, got ") + type_name(j));
}

inline void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
  require_object(obj, path);
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(join(path, key), "unknown key");
  }
}

inline double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, std::string("expected a number, got ") + type_name(j));
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

inline std::uint64_t as_uint(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    if (j.get<std::int64_t>() < 0) throw ConfigError(path, "expected a non-negative integer");
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  }
  throw ConfigError(path, std::string("expected a non-negative integer, got ") + type_name(j));
}

inline int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, std::string("expected an integer, got ") + type_name(j));
  const auto v = j.get<std::int64_t>();
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(path, "integer out of range");
  return static_cast<int>(v);
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, std::string("expected a string, got ") + type_name(j));
  return j.get<std::string>();
}

inline Location as_location(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(path, "expected [x, y]");
  return {as_double(j[0], index(path, 0)), as_double(j[1], index(path, 1))};
}

inline const json& array_at(const json& obj, const std::string& path, std::string_view key) {
  const json& a = obj.at(std::string(key));
  if (!a.is_array()) throw ConfigError(join(path, key), std::string("expected an array, got ") + type_name(a));
  return a;
}

template <class F>
void read_if(const json& obj, const std::string& path, std::string_view key, F&& f) {
  const auto it = obj.find(std::string(key));
  if (it != obj.end()) f(*it, join(path, key));
}

/// Runs a module's own validation and reports failures against `path`.
template <class F>
void validate_at(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(path.empty() ? "<root>" : path, e.what());
  }
}

}  // namespace detail

inline Scenario scenario_from_json(const json& j, const std::string& path) {
  using namespace detail;
  check_keys(j, path, {"rsus", "area", "tx_range", "r", "priors"});
  Scenario s = default_scenario();
  if (j.contains("rsus")) {
    const json& a = array_at(j, path, "rsus");
    s.rsus.clear();
    for (std::size_t i = 0; i < a.size(); ++i) s.rsus.push_back(as_location(a[i], index(join(path, "rsus"), i)));
  }
  read_if(j, path, "area", [&](const json& v, const std::string& p) {
    if (!v.is_array() || v.size() != 2) throw ConfigError(p, "expected [[xmin, ymin], [xmax, ymax]]");
    s.area = {as_location(v[0], index(p, 0)), as_location(v[1], index(p, 1))};
  });
  read_if(j, path, "tx_range", [&](const json& v, const std::string& p) { s.tx_range = as_double(v, p); });
  read_if(j, path, "r", [&](const json& v, const std::string& p) { s.r = as_double(v, p); });
  read_if(j, path, "priors", [&](const json& v, const std::string& p) {
    if (!v.is_array() || v.size() != 2) throw ConfigError(p, "expected [p0, p1]");
    s.prior_h0 = as_double(v[0], index(p, 0));
    s.prior_h1 = as_double(v[1], index(p, 1));
  });
  validate_at(path, [&] { s.validate(); });
  return s;
}

inline ChannelParams channel_from_json(const json& j, const std::string& path, ChannelParams c = {}) {
  using namespace detail;
  check_keys(j, path, {"p_d0", "d0", "gamma", "sigma_t"});
  read_if(j, path, "p_d0", [&](const json& v, const std::string& p) { c.p_d0 = as_double(v, p); });
  read_if(j, path, "d0", [&](const json& v, const std::string& p) { c.d0 = as_double(v, p); });
  read_if(j, path, "gamma", [&](const json& v, const std::string& p) { c.gamma = as_double(v, p); });
  read_if(j, path, "sigma_t", [&](const json& v, const std::string& p) { c.sigma_t = as_double(v, p); });
  validate_at(path, [&] { c.validate(); });
  return c;
}

inline const char* to_string(NoiseModel::Kind k) { return k == NoiseModel::Kind::gaussian ? "gaussian" : "student_t"; }
inline const char* to_string(H1MeanPolicy p) { return p == H1MeanPolicy::oracle ? "oracle" : "worst_case"; }
inline const char* to_string(Transfer t) {
  switch (t) {
    case Transfer::tansig: return "tansig";
    case Transfer::logsig: return "logsig";
    case Transfer::purelin: return "purelin";
  }
  return "?";
}
inline const char* to_string(Damping d) { return d == Damping::marquardt ? "marquardt" : "levenberg"; }

inline NoiseModel noise_from_json(const json& j, const std::string& path) {
  using namespace detail;
  check_keys(j, path, {"kind", "dof"});
  NoiseModel n;
  read_if(j, path, "kind", [&](const json& v, const std::string& p) {
    const auto s = as_string(v, p);
    if (s == "gaussian") n.kind = NoiseModel::Kind::gaussian;
    else if (s == "student_t") n.kind = NoiseModel::Kind::student_t;
    else throw ConfigError(p, "expected \"gaussian\" or \"student_t\", got \"" + s + "\"");
  });
  read_if(j, path, "dof", [&](const json& v, const std::string& p) { n.dof = as_double(v, p); });
  validate_at(path, [&] { n.validate(); });
  return n;
}

inline Transfer transfer_from_string(const std::string& s, const std::string& path) {
  if (s == "tansig") return Transfer::tansig;
  if (s == "logsig") return Transfer::logsig;
  if (s == "purelin") return Transfer::purelin;
  throw ConfigError(path, "unknown transfer function \"" + s + "\"");
}

inline TrainConfig train_config_from_json(const json& j, const std::string& path) {
  using namespace detail;
  check_keys(j, path,
             {"hidden_size", "hidden_transfer", "output_transfer", "max_validation_failures", "max_epochs",
              "lambda_init", "lambda_up", "lambda_down", "lambda_max", "min_gradient", "damping",
              "validation_fraction"});
  TrainConfig c;
  read_if(j, path, "hidden_size", [&](const json& v, const std::string& p) { c.hidden_size = as_uint(v, p); });
  read_if(j, path, "hidden_transfer",
          [&](const json& v, const std::string& p) { c.hidden_transfer = transfer_from_string(as_string(v, p), p); });
  read_if(j, path, "output_transfer",
          [&](const json& v, const std::string& p) { c.output_transfer = transfer_from_string(as_string(v, p), p); });
  read_if(j, path, "max_validation_failures",
          [&](const json& v, const std::string& p) { c.max_validation_failures = as_int(v, p); });
  read_if(j, path, "max_epochs", [&](const json& v, const std::string& p) { c.max_epochs = as_int(v, p); });
  read_if(j, path, "lambda_init", [&](const json& v, const std::string& p) { c.lambda_init = as_double(v, p); });
  read_if(j, path, "lambda_up", [&](const json& v, const std::string& p) { c.lambda_up = as_double(v, p); });
  read_if(j, path, "lambda_down", [&](const json& v, const std::string& p) { c.lambda_down = as_double(v, p); });
  read_if(j, path, "lambda_max", [&](const json& v, const std::string& p) { c.lambda_max = as_double(v, p); });
  read_if(j, path, "min_gradient", [&](const json& v, const std::string& p) { c.min_gradient = as_double(v, p); });
  read_if(j, path, "damping", [&](const json& v, const std::string& p) {
    const auto s = as_string(v, p);
    if (s == "marquardt") c.damping = Damping::marquardt;
    else if (s == "levenberg") c.damping = Damping::levenberg;
    else throw ConfigError(p, "expected \"marquardt\" or \"levenberg\", got \"" + s + "\"");
  });
  read_if(j, path, "validation_fraction",
          [&](const json& v, const std::string& p) { c.validation_fraction = as_double(v, p); });
  validate_at(path, [&] { c.validate(); });
  return c;
}

inline OptimizerOptions optimizer_from_json(const json& j, const std::string& path) {
  using namespace detail;
  check_keys(j, path, {"grid_step", "circle_step_deg", "local_starts", "max_iterations", "x_tolerance"});
  OptimizerOptions o;
  read_if(j, path, "grid_step", [&](const json& v, const std::string& p) { o.grid_step = as_double(v, p); });
  read_if(j, path, "circle_step_deg", [&](const json& v, const std::string& p) { o.circle_step_deg = as_double(v, p); });
  read_if(j, path, "local_starts", [&](const json& v, const std::string& p) { o.local_starts = as_int(v, p); });
  read_if(j, path, "max_iterations", [&](const json& v, const std::string& p) { o.max_iterations = as_int(v, p); });
  read_if(j, path, "x_tolerance", [&](const json& v, const std::string& p) { o.x_tolerance = as_double(v, p); });
  validate_at(path, [&] { o.validate(); });
  return o;
}

inline SpoofDistribution spoof_from_json(const json& j, const std::string& path) {
  using namespace detail;
  check_keys(j, path, {"extra_distance", "max_attempts"});
  SpoofDistribution s;
  read_if(j, path, "extra_distance", [&](const json& v, const std::string& p) {
    s.extra_distance = as_double(v, p);
    if (s.extra_distance < 0.0) throw ConfigError(p, "must be >= 0");
  });
  read_if(j, path, "max_attempts", [&](const json& v, const std::string& p) {
    s.max_attempts = as_int(v, p);
    if (s.max_attempts < 1) throw ConfigError(p, "must be >= 1");
  });
  return s;
}

/// Parses a full experiment config. Every section is optional and defaults apply per key.
/// `verifier` starts from the parsed `channel`, so an absent section means an exact model.
inline ExperimentConfig config_from_json(const json& j) {
  using namespace detail;
  check_keys(j, "",
             {"schema_version", "scenario", "channel", "verifier", "noise", "spoof", "experiment", "train",
              "optimizer"});
  read_if(j, "", "schema_version", [&](const json& v, const std::string& p) {
    if (as_int(v, p) != kConfigSchemaVersion)
      throw ConfigError(p, "unsupported schema version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  });
  ExperimentConfig c;
  read_if(j, "", "scenario", [&](const json& v, const std::string& p) { c.scenario = scenario_from_json(v, p); });
  read_if(j, "", "channel", [&](const json& v, const std::string& p) { c.channel = channel_from_json(v, p); });
  c.verifier = c.channel;
  read_if(j, "", "verifier",
          [&](const json& v, const std::string& p) { c.verifier = channel_from_json(v, p, c.channel); });
  read_if(j, "", "noise", [&](const json& v, const std::string& p) { c.noise = noise_from_json(v, p); });
  read_if(j, "", "spoof", [&](const json& v, const std::string& p) { c.spoof = spoof_from_json(v, p); });
  read_if(j, "", "train", [&](const json& v, const std::string& p) { c.train = train_config_from_json(v, p); });
  read_if(j, "", "optimizer", [&](const json& v, const std::string& p) { c.optimizer = optimizer_from_json(v, p); });

  const auto it = j.find("experiment");
  if (it != j.end()) {
    const json& e = *it;
    const std::string path = "experiment";
    check_keys(e, path,
               {"r_values", "attack_mode", "n_total", "train_fraction", "learning_curve_sizes", "seeds",
                "h1_policy", "threshold", "threads"});
    if (e.contains("r_values")) {
      const json& a = array_at(e, path, "r_values");
      c.r_values.clear();
      for (std::size_t i = 0; i < a.size(); ++i) {
        const std::string p = index(join(path, "r_values"), i);
        const double r = as_double(a[i], p);
        if (!(r > 0.0)) throw ConfigError(p, "r must be positive");
        c.r_values.push_back(r);
      }
      if (c.r_values.empty()) throw ConfigError(join(path, "r_values"), "must not be empty");
    }
    read_if(e, path, "attack_mode", [&](const json& v, const std::string& p) {
      const auto s = as_string(v, p);
      if (s == "random") c.attack_mode = AttackMode::random;
      else if (s == "optimized") c.attack_mode = AttackMode::optimized;
      else throw ConfigError(p, "expected \"random\" or \"optimized\", got \"" + s + "\"");
    });
    read_if(e, path, "n_total", [&](const json& v, const std::string& p) {
      c.n_total = as_uint(v, p);
      if (c.n_total == 0) throw ConfigError(p, "must be positive");
      if (c.n_total % 2 != 0) throw ConfigError(p, "must be even");
    });
    read_if(e, path, "train_fraction", [&](const json& v, const std::string& p) {
      c.train_fraction = as_double(v, p);
      if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError(p, "must lie in (0, 1)");
    });
    if (e.contains("learning_curve_sizes")) {
      const json& a = array_at(e, path, "learning_curve_sizes");
      c.learning_curve_sizes.clear();
      for (std::size_t i = 0; i < a.size(); ++i)
        c.learning_curve_sizes.push_back(as_uint(a[i], index(join(path, "learning_curve_sizes"), i)));
      if (c.learning_curve_sizes.empty()) throw ConfigError(join(path, "learning_curve_sizes"), "must not be empty");
    }
    if (e.contains("seeds")) {
      const json& a = array_at(e, path, "seeds");
      c.seeds.clear();
      for (std::size_t i = 0; i < a.size(); ++i) c.seeds.push_back(as_uint(a[i], index(join(path, "seeds"), i)));
      if (c.seeds.empty()) throw ConfigError(join(path, "seeds"), "must not be empty");
    }
    read_if(e, path, "h1_policy", [&](const json& v, const std::string& p) {
      const auto s = as_string(v, p);
      if (s == "oracle") c.h1_policy = H1MeanPolicy::oracle;
      else if (s == "worst_case") c.h1_policy = H1MeanPolicy::worst_case;
      else throw ConfigError(p, "expected \"oracle\" or \"worst_case\", got \"" + s + "\"");
    });
    read_if(e, path, "threshold", [&](const json& v, const std::string& p) {
      c.threshold = as_double(v, p);
      if (!(c.threshold > 0.0)) throw ConfigError(p, "must be positive");
    });
    read_if(e, path, "threads", [&](const json& v, const std::string& p) { c.threads = as_uint(v, p); });
    validate_at(path, [&] { c.validate(); });
  }
  validate_at("experiment", [&] { c.validate(); });
  return c;
}

inline json parse_json_text(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::string& path) { return config_from_json(parse_json_text(read_file(path))); }

// ---------------------------------------------------------------------------------------------
// JSON writing

inline json to_json(const Location& p) { return json::array({p.x, p.y}); }

inline json to_json(const Scenario& s) {
  json rsus = json::array();
  for (const auto& p : s.rsus) rsus.push_back(to_json(p));
  return {{"rsus", rsus},
          {"area", json::array({to_json(s.area.min), to_json(s.area.max)})},
          {"tx_range", s.tx_range},
          {"r", s.r},
          {"priors", json::array({s.prior_h0, s.prior_h1})}};
}

inline json to_json(const ChannelParams& c) {
  return {{"p_d0", c.p_d0}, {"d0", c.d0}, {"gamma", c.gamma}, {"sigma_t", c.sigma_t}};
}

inline json to_json(const NoiseModel& n) { return {{"kind", to_string(n.kind)}, {"dof", n.dof}}; }

inline json to_json(const SpoofDistribution& s) {
  return {{"extra_distance", s.extra_distance}, {"max_attempts", s.max_attempts}};
}

inline json to_json(const TrainConfig& c) {
  return {{"hidden_size", c.hidden_size},
          {"hidden_transfer", to_string(c.hidden_transfer)},
          {"output_transfer", to_string(c.output_transfer)},
          {"max_validation_failures", c.max_validation_failures},
          {"max_epochs", c.max_epochs},
          {"lambda_init", c.lambda_init},
          {"lambda_up", c.lambda_up},
          {"lambda_down", c.lambda_down},
          {"lambda_max", c.lambda_max},
          {"min_gradient", c.min_gradient},
          {"damping", to_string(c.damping)},
          {"validation_fraction", c.validation_fraction}};
}

inline json to_json(const OptimizerOptions& o) {
  return {{"grid_step", o.grid_step},
          {"circle_step_deg", o.circle_step_deg},
          {"local_starts", o.local_starts},
          {"max_iterations", o.max_iterations},
          {"x_tolerance", o.x_tolerance}};
}

/// Same schema as config_from_json reads, so an echoed config can be re-run.
inline json to_json(const ExperimentConfig& c) {
  return {{"schema_version", kConfigSchemaVersion},
          {"scenario", to_json(c.scenario)},
          {"channel", to_json(c.channel)},
          {"verifier", to_json(c.verifier)},
          {"noise", to_json(c.noise)},
          {"spoof", to_json(c.spoof)},
          {"experiment",
           {{"r_values", c.r_values},
            {"attack_mode", to_string(c.attack_mode)},
            {"n_total", c.n_total},
            {"train_fraction", c.train_fraction},
            {"learning_curve_sizes", c.learning_curve_sizes},
            {"seeds", c.seeds},
            {"h1_policy", to_string(c.h1_policy)},
            {"threshold", c.threshold},
            {"threads", c.threads}}},
          {"train", to_json(c.train)},
          {"optimizer", to_json(c.optimizer)}};
}

inline json to_json(const DetectionStats& s) {
  return {{"alpha", s.alpha},
          {"beta", s.beta},
          {"total_error", s.total_error},
          {"n_h0", s.counts.n_h0},
          {"n_h1", s.counts.n_h1},
          {"false_positives", s.counts.false_positives},
          {"true_detections", s.counts.true_detections}};
}

inline json to_json(const CellResult& c) {
  json curve = json::array();
  for (const auto& p : c.ml_curve)
    curve.push_back({{"train_size", p.train_size},
                     {"stop_reason", to_string(p.stop_reason)},
                     {"epochs", p.epochs},
                     {"test_hash", hex64(p.test_hash)},
                     {"stats", to_json(p.stats)}});
  return {{"seed", c.seed},
          {"r", c.r},
          {"attack_mode", to_string(c.attack_mode)},
          {"n_train", c.n_train},
          {"n_test", c.n_test},
          {"test_hash", hex64(c.lrt_test_hash)},
          {"lrt", to_json(c.lrt)},
          {"lrt_best", {{"ell", c.lrt_best_ell}, {"stats", to_json(c.lrt_best)}}},
          {"ml_curve", curve}};
}

inline json to_json(const ComparisonResult& r) {
  json cells = json::array();
  for (const auto& c : r.cells) cells.push_back(to_json(c));
  return {{"schema_version", kOutputSchemaVersion},
          {"toolkit_version", kToolkitVersion},
          {"config", to_json(r.config)},
          {"cells", cells}};
}

inline json to_json(const Standardizer& s) {
  return {{"mean", s.mean}, {"scale", s.scale}, {"fitted_rows", s.fitted_rows}, {"fingerprint", hex64(s.fingerprint)}};
}

/// Model document: layer sizes, row-major weights, biases, transfer tags, standardizer,
/// training-config echo and seed.
inline json model_to_json(const MlpModel& m, const TrainConfig& config) {
  std::vector<double> w1;
  for (Eigen::Index j = 0; j < m.w1.rows(); ++j)
    for (Eigen::Index i = 0; i < m.w1.cols(); ++i) w1.push_back(m.w1(j, i));
  return {{"schema_version", kOutputSchemaVersion},
          {"layer_sizes", json::array({m.input_size(), m.hidden_size(), 1})},
          {"weights", {{"w1", w1}, {"w2", std::vector<double>(m.w2.begin(), m.w2.end())}}},
          {"biases", {{"b1", std::vector<double>(m.b1.begin(), m.b1.end())}, {"b2", m.b2}}},
          {"transfers", json::array({to_string(m.hidden_transfer), to_string(m.output_transfer)})},
          {"standardizer", to_json(m.standardizer)},
          {"train_config", to_json(config)},
          {"seed", config.rng_seed}};
}

inline MlpModel model_from_json(const json& j) {
  using namespace detail;
  try {
    const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    if (sizes.size() != 3 || sizes[2] != 1) throw ConfigError("layer_sizes", "expected [inputs, hidden, 1]");
    MlpModel m = MlpModel::zeros(sizes[0], sizes[1]);
    const auto w1 = j.at("weights").at("w1").get<std::vector<double>>();
    const auto w2 = j.at("weights").at("w2").get<std::vector<double>>();
    const auto b1 = j.at("biases").at("b1").get<std::vector<double>>();
    if (w1.size() != sizes[0] * sizes[1]) throw ConfigError("weights.w1", "size does not match layer_sizes");
    if (w2.size() != sizes[1]) throw ConfigError("weights.w2", "size does not match layer_sizes");
    if (b1.size() != sizes[1]) throw ConfigError("biases.b1", "size does not match layer_sizes");
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.w1.rows(); ++r)
      for (Eigen::Index c = 0; c < m.w1.cols(); ++c) m.w1(r, c) = w1[k++];
    for (std::size_t i = 0; i < sizes[1]; ++i) {
      m.w2[static_cast<Eigen::Index>(i)] = w2[i];
      m.b1[static_cast<Eigen::Index>(i)] = b1[i];
    }
    m.b2 = j.at("biases").at("b2").get<double>();
    const auto& t = j.at("transfers");
    m.hidden_transfer = transfer_from_string(t.at(0).get<std::string>(), "transfers[0]");
    m.output_transfer = transfer_from_string(t.at(1).get<std::string>(), "transfers[1]");
    const auto& s = j.at("standardizer");
    m.standardizer.mean = s.at("mean").get<std::vector<double>>();
    m.standardizer.scale = s.at("scale").get<std::vector<double>>();
    m.standardizer.fitted_rows = s.at("fitted_rows").get<std::size_t>();
    m.standardizer.fingerprint = parse_hex64(s.at("fingerprint").get<std::string>());
    if (m.standardizer.size() != sizes[0]) throw ConfigError("standardizer", "size does not match layer_sizes");
    return m;
  } catch (const json::exception& e) {
    throw ConfigError("<model>", e.what());
  }
}

// ---------------------------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InvalidArgument("line " + std::to_string(line) + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

/// Reads non-empty lines, stripping a trailing '\r'.
inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

inline std::vector<DistanceRss> read_fit_csv(std::istream& in) {
  const auto lines = detail::read_lines(in);
  if (lines.empty() || lines.front() != "distance,rss") throw InvalidArgument("fit CSV must start with header 'distance,rss'");
  std::vector<DistanceRss> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = detail::split_csv(lines[i]);
    if (f.size() != 2) throw InvalidArgument("line " + std::to_string(i + 1) + ": expected 2 fields");
    out.push_back({detail::parse_double(f[0], i + 1), detail::parse_double(f[1], i + 1)});
  }
  return out;
}

inline void write_fit_csv(std::ostream& out, std::span<const DistanceRss> samples) {
  out << "distance,rss\n";
  for (const auto& s : samples) out << format_double(s.distance) << ',' << format_double(s.rss) << '\n';
}

inline constexpr std::string_view kDatasetHeader = "label,true_x,true_y,claim_x,claim_y";

inline void write_dataset_csv(std::ostream& out, std::span<const GroundTruthSample> samples) {
  out << kDatasetHeader << '\n';
  for (const auto& s : samples)
    out << label_value(s.label) << ',' << format_double(s.true_loc.x) << ',' << format_double(s.true_loc.y) << ','
        << format_double(s.claimed_loc.x) << ',' << format_double(s.claimed_loc.y) << '\n';
}

/// Dataset columns followed by one `rss_<i>` column per RSU (1-based).
inline void write_observations_csv(std::ostream& out, std::span<const LabeledObservation> data, std::size_t n_rsus) {
  out << kDatasetHeader;
  for (std::size_t i = 1; i <= n_rsus; ++i) out << ",rss_" << i;
  out << '\n';
  for (const auto& o : data) {
    const auto& s = o.sample;
    out << label_value(s.label) << ',' << format_double(s.true_loc.x) << ',' << format_double(s.true_loc.y) << ','
        << format_double(s.claimed_loc.x) << ',' << format_double(s.claimed_loc.y);
    for (double v : o.rss) out << ',' << format_double(v);
    out << '\n';
  }
}

/// Reads either a dataset CSV (no RSS columns) or an observations CSV.
inline std::vector<LabeledObservation> read_observations_csv(std::istream& in) {
  const auto lines = detail::read_lines(in);
  if (lines.empty() || !lines.front().starts_with(kDatasetHeader))
    throw InvalidArgument(std::string("dataset CSV must start with header '") + std::string(kDatasetHeader) + "'");
  const auto header = detail::split_csv(lines.front());
  for (std::size_t k = 5; k < header.size(); ++k)
    if (header[k] != "rss_" + std::to_string(k - 4))
      throw InvalidArgument("unexpected column '" + std::string(header[k]) + "' in dataset header");
  std::vector<LabeledObservation> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = detail::split_csv(lines[i]);
    if (f.size() != header.size())
      throw InvalidArgument("line " + std::to_string(i + 1) + ": expected " + std::to_string(header.size()) + " fields");
    const double label = detail::parse_double(f[0], i + 1);
    if (label != 0.0 && label != 1.0) throw InvalidArgument("line " + std::to_string(i + 1) + ": label must be 0 or 1");
    LabeledObservation o;
    o.sample.label = hypothesis_from_label(static_cast<int>(label));
    o.sample.true_loc = {detail::parse_double(f[1], i + 1), detail::parse_double(f[2], i + 1)};
    o.sample.claimed_loc = {detail::parse_double(f[3], i + 1), detail::parse_double(f[4], i + 1)};
    for (std::size_t k = 5; k < f.size(); ++k) o.rss.push_back(detail::parse_double(f[k], i + 1));
    out.push_back(std::move(o));
  }
  return out;
}

inline void write_lrt_header(std::ostream& out) { out << "ell,alpha,beta,total_error,n_h0,n_h1\n"; }

inline void write_lrt_row(std::ostream& out, double ell, const DetectionStats& s) {
  out << format_double(ell) << ',' << format_double(s.alpha) << ',' << format_double(s.beta) << ','
      << format_double(s.total_error) << ',' << s.counts.n_h0 << ',' << s.counts.n_h1 << '\n';
}

inline void write_attack_csv(std::ostream& out, std::span<const GroundTruthSample> samples,
                             std::span<const double> divergences) {
  out << "true_x,true_y,claim_x,claim_y,kl_divergence\n";
  for (std::size_t i = 0; i < samples.size(); ++i)
    out << format_double(samples[i].true_loc.x) << ',' << format_double(samples[i].true_loc.y) << ','
        << format_double(samples[i].claimed_loc.x) << ',' << format_double(samples[i].claimed_loc.y) << ','
        << format_double(divergences[i]) << '\n';
}

inline void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace) {
  out << "epoch,train_sse,val_sse,lambda,val_failures\n";
  for (const auto& t : trace)
    out << t.epoch << ',' << format_double(t.train_sse) << ',' << format_double(t.val_sse) << ','
        << format_double(t.lambda) << ',' << t.val_failures << '\n';
}

/// Learning curves averaged over seeds: one row per (r, train size), plus an LRT baseline row per r
/// with train_size = -1.
inline void write_curves_csv(std::ostream& out, const ComparisonResult& result) {
  out << "r,attack_mode,train_size,alpha,beta,total_error\n";
  const auto& cfg = result.config;
  const double n_seeds = static_cast<double>(cfg.seeds.size());
  for (double r : cfg.r_values) {
    const char* mode = to_string(cfg.attack_mode);
    double a = 0.0, b = 0.0, x = 0.0;
    for (auto seed : cfg.seeds) {
      const auto& s = result.cell(seed, r).lrt;
      a += s.alpha;
      b += s.beta;
      x += s.total_error;
    }
    out << format_double(r) << ',' << mode << ",-1," << format_double(a / n_seeds) << ',' << format_double(b / n_seeds)
        << ',' << format_double(x / n_seeds) << '\n';
    for (std::size_t k = 0; k < cfg.learning_curve_sizes.size(); ++k) {
      a = b = x = 0.0;
      for (auto seed : cfg.seeds) {
        const auto& s = result.cell(seed, r).ml_curve[k].stats;
        a += s.alpha;
        b += s.beta;
        x += s.total_error;
      }
      out << format_double(r) << ',' << mode << ',' << cfg.learning_curve_sizes[k] << ','
          << format_double(a / n_seeds) << ',' << format_double(b / n_seeds) << ',' << format_double(x / n_seeds)
          << '\n';
    }
  }
}

}  // namespace lvs::io

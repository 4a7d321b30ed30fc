// lvs: location verification experiments from the command line.
//
// Exit status: 0 success, 1 runtime error, 2 malformed config, 3 infeasible geometry.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lvs/adversary.hpp"
#include "lvs/channel.hpp"
#include "lvs/error.hpp"
#include "lvs/harness.hpp"
#include "lvs/io.hpp"
#include "lvs/lrt.hpp"
#include "lvs/neural.hpp"

namespace fs = std::filesystem;
using namespace lvs;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string data_path;
};

void add_common(CLI::App* cmd, Common& c, bool data_option) {
  cmd->add_option("--config", c.config_path, "experiment config JSON (defaults apply when omitted)");
  cmd->add_option("--seed", c.seed, "RNG seed (defaults to the first config seed)");
  cmd->add_option("--out", c.out_dir, "output directory")->required();
  if (data_option) cmd->add_option("--data", c.data_path, "observations CSV to use instead of simulating");
}

ExperimentConfig load(const Common& c) {
  return c.config_path.empty() ? ExperimentConfig{} : io::load_config(c.config_path);
}

std::uint64_t seed_of(const Common& c, const ExperimentConfig& cfg) { return c.seed ? *c.seed : cfg.seeds.front(); }

fs::path prepare_out(const Common& c) {
  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  return f;
}

void write_json(const fs::path& p, const io::json& j) { open_out(p) << j.dump(2) << '\n'; }

std::vector<LabeledObservation> observations(const Common& c, const ExperimentConfig& cfg, std::uint64_t seed) {
  if (c.data_path.empty()) return simulate_cell(cfg, seed, cfg.scenario.r);
  std::ifstream in(c.data_path, std::ios::binary);
  if (!in) throw Error("cannot open " + c.data_path);
  auto data = io::read_observations_csv(in);
  for (const auto& o : data)
    if (o.rss.size() != cfg.scenario.rsu_count())
      throw InvalidArgument(c.data_path + ": dataset has no RSS columns for the " +
                            std::to_string(cfg.scenario.rsu_count()) + " configured RSUs");
  return data;
}

int cmd_simulate(const Common& c) {
  const auto cfg = load(c);
  const auto seed = seed_of(c, cfg);
  const auto data = simulate_cell(cfg, seed, cfg.scenario.r);
  const auto dir = prepare_out(c);
  std::vector<GroundTruthSample> samples;
  for (const auto& o : data) samples.push_back(o.sample);
  auto ds = open_out(dir / "dataset.csv");
  io::write_dataset_csv(ds, samples);
  auto obs = open_out(dir / "observations.csv");
  io::write_observations_csv(obs, data, cfg.scenario.rsu_count());
  std::cout << "simulated " << data.size() << " samples (" << to_string(cfg.attack_mode) << " attacks, r = "
            << cfg.scenario.r << " m)\n";
  return 0;
}

int cmd_fit(const Common& c) {
  const auto cfg = load(c);
  if (c.data_path.empty()) throw InvalidArgument("fit needs --data <distance,rss CSV>");
  std::ifstream in(c.data_path, std::ios::binary);
  if (!in) throw Error("cannot open " + c.data_path);
  const auto samples = io::read_fit_csv(in);
  const auto fit = fit_gamma(samples, cfg.channel.d0);
  const auto dir = prepare_out(c);
  write_json(dir / "channel.json", io::to_json(fit.to_params(cfg.channel.d0)));
  std::cout << "gamma = " << io::format_double(fit.gamma) << ", p_d0 = " << io::format_double(fit.p_d0)
            << ", sigma = " << io::format_double(fit.sigma) << " (n = " << fit.n << ")\n";
  return 0;
}

int cmd_eval_lrt(const Common& c) {
  const auto cfg = load(c);
  const auto seed = seed_of(c, cfg);
  const auto data = observations(c, cfg, seed);
  const double r = cfg.scenario.r;
  const LrtVerifier lrt{cfg.verifier,    cfg.scenario, Threshold::ratio(cfg.threshold),
                        cfg.h1_policy,   cfg.attack_mode, cfg.spoof,
                        cell_rng(seed, r, cfg.attack_mode, 3)()};
  const auto scores = lrt_scores(lrt, data);
  const auto& s = cfg.scenario;
  const auto stats = stats_from_scores(scores, data, lrt.threshold, s.prior_h0, s.prior_h1);
  const auto dir = prepare_out(c);
  auto out = open_out(dir / "lrt.csv");
  io::write_lrt_header(out);
  io::write_lrt_row(out, cfg.threshold, stats);
  auto sweep = open_out(dir / "sweep.csv");
  io::write_lrt_header(sweep);
  for (double ell : comparison_threshold_grid())
    io::write_lrt_row(sweep, ell, stats_from_scores(scores, data, Threshold::ratio(ell), s.prior_h0, s.prior_h1));
  std::cout << "alpha = " << io::format_double(stats.alpha) << ", beta = " << io::format_double(stats.beta)
            << ", total error = " << io::format_double(stats.total_error) << '\n';
  return 0;
}

int cmd_attack_opt(const Common& c) {
  auto cfg = load(c);
  cfg.attack_mode = AttackMode::optimized;
  const auto seed = seed_of(c, cfg);
  const auto& s = cfg.scenario;
  Rng rng = cell_rng(seed, s.r, AttackMode::optimized, 0);
  const auto all = generate_optimized_dataset(s, cfg.channel, cfg.n_total, rng, cfg.spoof, cfg.optimizer);
  std::vector<GroundTruthSample> attacks;
  std::vector<double> kl;
  for (const auto& g : all) {
    if (g.label != Hypothesis::malicious) continue;
    attacks.push_back(g);
    kl.push_back(kl_divergence(cfg.channel, s.rsus, g.true_loc, g.claimed_loc));
  }
  const auto dir = prepare_out(c);
  auto out = open_out(dir / "attack.csv");
  io::write_attack_csv(out, attacks, kl);
  std::cout << "optimized " << attacks.size() << " claims (r = " << s.r << " m)\n";
  return 0;
}

int cmd_train_ml(const Common& c) {
  const auto cfg = load(c);
  const auto seed = seed_of(c, cfg);
  const auto data = observations(c, cfg, seed);
  const double r = cfg.scenario.r;
  Rng split_rng = cell_rng(seed, r, cfg.attack_mode, 1);
  const DataSplit split = stratified_split(data, cfg.train_fraction, split_rng);
  TrainConfig tc = cfg.train;
  tc.rng_seed = make_rng(seed, {std::bit_cast<std::uint64_t>(r), static_cast<std::uint64_t>(cfg.attack_mode), 2,
                                static_cast<std::uint64_t>(split.train.size())})();
  const TrainResult tr = train(cfg.scenario, split.train, tc);
  const auto stats = evaluate(tr.model, cfg.scenario, split.test);
  const auto dir = prepare_out(c);
  write_json(dir / "model.json", io::model_to_json(tr.model, tc));
  auto trace = open_out(dir / "trace.csv");
  io::write_trace_csv(trace, tr.trace);
  io::json summary = {{"n_train", split.train.size()},
                      {"n_test", split.test.size()},
                      {"stop_reason", to_string(tr.stop_reason)},
                      {"best_epoch", tr.best_epoch},
                      {"test", io::to_json(stats)}};
  write_json(dir / "evaluation.json", summary);
  std::cout << "trained on " << split.train.size() << " samples, stop: " << to_string(tr.stop_reason)
            << ", test total error = " << io::format_double(stats.total_error) << '\n';
  return 0;
}

int cmd_compare(const Common& c, std::optional<std::size_t> threads) {
  auto cfg = load(c);
  if (c.seed) cfg.seeds = {*c.seed};
  if (threads) cfg.threads = *threads;
  const auto result = run_comparison(cfg);
  const auto dir = prepare_out(c);
  write_json(dir / "comparison.json", io::to_json(result));
  auto curves = open_out(dir / "curves.csv");
  io::write_curves_csv(curves, result);
  for (const auto& cell : result.cells)
    std::cout << "seed " << cell.seed << "  r = " << cell.r << "  LRT " << io::format_double(cell.lrt.total_error)
              << "  LRT(best) " << io::format_double(cell.lrt_best.total_error) << "  ML "
              << io::format_double(cell.final_ml().stats.total_error) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Location verification: LRT and neural verifiers under spoofing attacks"};
  app.set_version_flag("--version", std::string("lvs ") + io::kToolkitVersion + " (config schema " +
                                        std::to_string(io::kConfigSchemaVersion) + ", output schema " +
                                        std::to_string(io::kOutputSchemaVersion) + ")");
  app.require_subcommand(1);

  Common simulate, fit, eval_lrt, attack_opt, train_ml, compare;
  std::optional<std::size_t> threads;
  auto* c_sim = app.add_subcommand("simulate", "emit a labeled dataset and its RSS observations");
  add_common(c_sim, simulate, false);
  auto* c_fit = app.add_subcommand("fit", "fit pathloss parameters from a distance,rss CSV");
  add_common(c_fit, fit, true);
  auto* c_lrt = app.add_subcommand("eval-lrt", "evaluate the LRT verifier and sweep its threshold");
  add_common(c_lrt, eval_lrt, true);
  auto* c_att = app.add_subcommand("attack-opt", "emit KL-optimized attack geometry");
  add_common(c_att, attack_opt, false);
  auto* c_ml = app.add_subcommand("train-ml", "train the neural verifier");
  add_common(c_ml, train_ml, true);
  auto* c_cmp = app.add_subcommand("compare", "run the LRT-vs-neural comparison");
  add_common(c_cmp, compare, false);
  c_cmp->add_option("--threads", threads, "worker threads (0 = all cores); results do not depend on it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_sim) return cmd_simulate(simulate);
    if (*c_fit) return cmd_fit(fit);
    if (*c_lrt) return cmd_eval_lrt(eval_lrt);
    if (*c_att) return cmd_attack_opt(attack_opt);
    if (*c_ml) return cmd_train_ml(train_ml);
    if (*c_cmp) return cmd_compare(compare, threads);
  } catch (const ConfigError& e) {
    std::cerr << "lvs: config error: " << e.what() << '\n';
    return 2;
  } catch (const InfeasibleError& e) {
    std::cerr << "lvs: infeasible geometry: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "lvs: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

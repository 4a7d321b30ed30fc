#include <gtest/gtest.h>

#include <sstream>

#include "lvs/io.hpp"

using namespace lvs;
using io::json;

namespace {

std::string key_path_of(const std::string& text) {
  try {
    io::config_from_json(io::parse_json_text(text));
  } catch (const ConfigError& e) {
    return e.key_path();
  }
  return "<no error>";
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = io::config_from_json(json::object());
  EXPECT_EQ(c, ExperimentConfig{});
  EXPECT_EQ(c.verifier, c.channel);
}

TEST(Config, RoundTripsThroughItsOwnEcho) {
  ExperimentConfig c;
  c.scenario.rsus = {{0.0, 0.0}, {100.0, 10.0}, {50.0, 90.0}, {90.0, 90.0}};
  c.scenario.area = {{0.0, 0.0}, {100.0, 100.0}};
  c.scenario.prior_h0 = 0.25;
  c.scenario.prior_h1 = 0.75;
  c.channel.gamma = 3.1;
  c.verifier.gamma = 3.1 * 1.3;
  c.noise = {NoiseModel::Kind::student_t, 3.0};
  c.r_values = {60.0, 30.5};
  c.attack_mode = AttackMode::optimized;
  c.n_total = 400;
  c.learning_curve_sizes = {10, 50, 300};
  c.seeds = {1, 18446744073709551615ull};
  c.h1_policy = H1MeanPolicy::worst_case;
  c.threshold = 0.1;
  c.spoof.extra_distance = 0.0;
  c.train.hidden_size = 7;
  c.train.damping = Damping::levenberg;
  c.train.hidden_transfer = Transfer::logsig;
  c.optimizer.grid_step = 2.5;
  c.threads = 3;
  EXPECT_EQ(io::config_from_json(io::to_json(c)), c);
  EXPECT_EQ(io::config_from_json(json::parse(io::to_json(c).dump())), c);
}

TEST(Config, VerifierInheritsUnsetChannelKeys) {
  const auto c = io::config_from_json(json::parse(R"({"channel":{"gamma":3.0,"sigma_t":6},"verifier":{"gamma":3.9}})"));
  EXPECT_EQ(c.verifier.gamma, 3.9);
  EXPECT_EQ(c.verifier.sigma_t, 6.0);
}

TEST(Config, ErrorsNameTheKeyPath) {
  EXPECT_EQ(key_path_of(R"({"bogus": 1})"), "bogus");
  EXPECT_EQ(key_path_of(R"({"experiment": {"r_values": [100, "x"]}})"), "experiment.r_values[1]");
  EXPECT_EQ(key_path_of(R"({"experiment": {"n_total": 0}})"), "experiment.n_total");
  EXPECT_EQ(key_path_of(R"({"experiment": {"n_total": 201}})"), "experiment.n_total");
  EXPECT_EQ(key_path_of(R"({"experiment": {"attack_mode": "clever"}})"), "experiment.attack_mode");
  EXPECT_EQ(key_path_of(R"({"scenario": {"rsus": [[0, 0], [1]]}})"), "scenario.rsus[1]");
  EXPECT_EQ(key_path_of(R"({"scenario": {"area": [[0, 0], [100, "a"]]}})"), "scenario.area[1][1]");
  EXPECT_EQ(key_path_of(R"({"scenario": {"r": -4}})"), "scenario");
  EXPECT_EQ(key_path_of(R"({"channel": {"sigma_t": 0}})"), "channel");
  EXPECT_EQ(key_path_of(R"({"train": {"damping": "none"}})"), "train.damping");
  EXPECT_EQ(key_path_of(R"({"noise": {"kind": "student_t", "dof": 2}})"), "noise");
  EXPECT_EQ(key_path_of(R"({"experiment": {"learning_curve_sizes": [10, 5000]}})"), "experiment");
  EXPECT_EQ(key_path_of(R"({"schema_version": 2})"), "schema_version");
  EXPECT_EQ(key_path_of(R"([1, 2])"), "<root>");
  EXPECT_EQ(key_path_of(R"({"scenario": )"), "<root>");
}

TEST(FormatDouble, ShortestRoundTrip) {
  Rng rng = make_rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng) / 7.0;
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
  EXPECT_EQ(io::format_double(0.5), "0.5");
  EXPECT_EQ(io::format_double(-60.0), "-60");
  EXPECT_EQ(io::format_double(NAN), "nan");
}

TEST(ObservationsCsv, RoundTripsExactly) {
  const Scenario s = default_scenario();
  Rng rng = make_rng(2);
  std::vector<LabeledObservation> data;
  for (const auto& g : generate_dataset(s, 50, rng))
    data.push_back({g, draw_observation(ChannelParams{}, g.true_loc, s.rsus, rng)});
  std::stringstream ss;
  io::write_observations_csv(ss, data, 3);
  EXPECT_EQ(io::read_observations_csv(ss), data);
}

TEST(ObservationsCsv, DatasetHeaderAndBadRows) {
  std::vector<GroundTruthSample> samples{{{1.0, 2.0}, {1.0, 2.0}, Hypothesis::legitimate}};
  std::stringstream ss;
  io::write_dataset_csv(ss, samples);
  EXPECT_EQ(ss.str(), "label,true_x,true_y,claim_x,claim_y\n0,1,2,1,2\n");
  const auto back = io::read_observations_csv(ss);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].sample, samples[0]);
  std::istringstream bad_label("label,true_x,true_y,claim_x,claim_y\n2,1,2,1,2\n");
  EXPECT_THROW(io::read_observations_csv(bad_label), InvalidArgument);
  std::istringstream bad_num("label,true_x,true_y,claim_x,claim_y\n0,1,x,1,2\n");
  EXPECT_THROW(io::read_observations_csv(bad_num), InvalidArgument);
  std::istringstream bad_header("a,b\n");
  EXPECT_THROW(io::read_observations_csv(bad_header), InvalidArgument);
}

TEST(FitCsv, ParsesAndRejects) {
  std::istringstream ok("distance,rss\r\n10,-65\r\n100,-90\r\n");
  const auto s = io::read_fit_csv(ok);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].distance, 100.0);
  EXPECT_EQ(s[1].rss, -90.0);
  std::istringstream bad("distance,rss\n10\n");
  EXPECT_THROW(io::read_fit_csv(bad), InvalidArgument);
}

TEST(ModelJson, RoundTripPreservesScores) {
  Rng rng = make_rng(3);
  FeatureMatrix rows;
  std::vector<int> labels;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 60; ++i) {
    rows.push_back({g(rng) + (i % 2), g(rng), 5.0});
    labels.push_back(i % 2);
  }
  TrainConfig cfg;
  cfg.rng_seed = 77;
  const auto res = train(rows, labels, cfg);
  const json j = io::model_to_json(res.model, cfg);
  EXPECT_EQ(j["layer_sizes"], json::array({3, 10, 1}));
  EXPECT_EQ(j["seed"], 77);
  EXPECT_EQ(j["transfers"], json::array({"tansig", "purelin"}));
  EXPECT_EQ(j["weights"]["w1"].size(), 30u);
  const MlpModel back = io::model_from_json(json::parse(j.dump()));
  EXPECT_EQ(back.parameters(), res.model.parameters());
  EXPECT_EQ(back.standardizer, res.model.standardizer);
  for (const auto& r : rows) {
    const auto x = res.model.standardizer.apply(r);
    EXPECT_EQ(forward(back, x), forward(res.model, x));
  }
  EXPECT_EQ(io::train_config_from_json(j["train_config"], "train_config").hidden_size, cfg.hidden_size);
}

TEST(TraceCsv, HeaderAndNanValidation) {
  std::vector<TraceRow> t{{0, 1.5, NAN, 1e-3, 0}, {1, 1.25, 0.5, 1e-4, 0}};
  std::ostringstream os;
  io::write_trace_csv(os, t);
  EXPECT_EQ(os.str(), "epoch,train_sse,val_sse,lambda,val_failures\n0,1.5,nan,0.001,0\n1,1.25,0.5,1e-04,0\n");
}

TEST(AttackCsv, Header) {
  std::vector<GroundTruthSample> s{{{1.0, 2.0}, {3.0, 4.0}, Hypothesis::malicious}};
  std::vector<double> kl{0.25};
  std::ostringstream os;
  io::write_attack_csv(os, s, kl);
  EXPECT_EQ(os.str(), "true_x,true_y,claim_x,claim_y,kl_divergence\n1,2,3,4,0.25\n");
}

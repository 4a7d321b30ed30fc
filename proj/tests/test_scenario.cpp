#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lvs/io.hpp"
#include "lvs/scenario.hpp"

using namespace lvs;

TEST(DefaultScenario, FirstRsuAtOriginOf150mSquare) {
  const Scenario s = default_scenario();
  ASSERT_EQ(s.rsu_count(), 3u);
  EXPECT_EQ(s.rsus[0], (Location{0.0, 0.0}));
  EXPECT_EQ(s.area.min, (Location{0.0, 0.0}));
  EXPECT_EQ(s.area.max, (Location{150.0, 150.0}));
  EXPECT_EQ(s.prior_h0, 0.5);
  EXPECT_EQ(s.prior_h1, 0.5);
  EXPECT_EQ(s.tx_range, 300.0);
  EXPECT_NO_THROW(s.validate());
}

TEST(ScenarioValidate, RejectsBadInvariants) {
  Scenario s = default_scenario();
  s.r = 0.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = default_scenario();
  s.prior_h0 = 0.7;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = default_scenario();
  s.rsus.push_back({200.0, 0.0});
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = default_scenario();
  s.rsus.push_back(s.rsus[1]);
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = default_scenario();
  s.tx_range = -1.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(SampleTrueLocation, SameSeedSameLocation) {
  const Scenario s = default_scenario();
  Rng a = make_rng(7), b = make_rng(7);
  EXPECT_EQ(sample_true_location(s, a), sample_true_location(s, b));
}

TEST(SampleTrueLocation, MeanNearAreaCenter) {
  const Scenario s = default_scenario();
  Rng rng = make_rng(11);
  double mx = 0.0, my = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Location p = sample_true_location(s, rng);
    ASSERT_TRUE(s.area.contains(p));
    mx += p.x;
    my += p.y;
  }
  EXPECT_NEAR(mx / n, 75.0, 5.0);
  EXPECT_NEAR(my / n, 75.0, 5.0);
}

TEST(SampleTrueLocation, DegenerateAreaReturnsCorner) {
  Scenario s = default_scenario();
  s.area = {{40.0, 60.0}, {40.0, 60.0}};
  s.rsus = {{40.0, 60.0}};
  Rng rng = make_rng(3);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_true_location(s, rng), (Location{40.0, 60.0}));
}

TEST(SampleSpoofedClaim, DisplacementAtLeastROverManyDraws) {
  Scenario s = default_scenario();
  for (double r : {50.0, 75.0, 100.0}) {
    s.r = r;
    Rng rng = make_rng(5, {static_cast<std::uint64_t>(r)});
    double min_d = INFINITY;
    for (int i = 0; i < 1000; ++i) {
      const Location t = sample_true_location(s, rng);
      const Location c = sample_spoofed_claim(s, t, rng);
      ASSERT_GE(distance(c, t), r);
      ASSERT_TRUE(is_observable(s.rsus, s.tx_range, c));
      min_d = std::min(min_d, distance(c, t));
    }
    EXPECT_GE(min_d, r);
    EXPECT_LT(min_d, r + 5.0);
  }
}

TEST(SampleSpoofedClaim, ZeroExtraDistancePlacesClaimOnCircle) {
  const Scenario s = default_scenario();
  SpoofDistribution spoof;
  spoof.extra_distance = 0.0;
  Rng rng = make_rng(9);
  for (int i = 0; i < 200; ++i) {
    const Location t{75.0, 75.0};
    const double d = distance(sample_spoofed_claim(s, t, rng, spoof), t);
    EXPECT_GE(d, s.r);
    EXPECT_NEAR(d, s.r, 1e-9);
  }
}

TEST(SampleSpoofedClaim, UnreachableRadiusIsInfeasible) {
  Scenario s = default_scenario();
  s.r = 1000.0;  // every claim would be farther than tx_range from all RSUs
  SpoofDistribution spoof;
  spoof.max_attempts = 500;
  Rng rng = make_rng(1);
  EXPECT_THROW(sample_spoofed_claim(s, {75.0, 75.0}, rng, spoof), InfeasibleError);
}

TEST(PlaceAtDistance, ExactLowerBoundOnManyAngles) {
  Rng rng = make_rng(2);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi), c(-1e3, 1e3);
  for (int i = 0; i < 20000; ++i) {
    const Location center{c(rng), c(rng)};
    const double radius = 0.1 + std::abs(c(rng));
    EXPECT_GE(distance(place_at_distance(center, u(rng), radius), center), radius);
  }
}

TEST(GenerateDataset, BalancedLabelsAndExactInvariants) {
  Scenario s = default_scenario();
  s.r = 75.0;
  Rng rng = make_rng(42);
  const auto data = generate_dataset(s, 1000, rng);
  ASSERT_EQ(data.size(), 1000u);
  int h0 = 0, h1 = 0;
  for (const auto& g : data) {
    if (g.label == Hypothesis::legitimate) {
      ++h0;
      EXPECT_EQ(std::bit_cast<std::uint64_t>(g.claimed_loc.x), std::bit_cast<std::uint64_t>(g.true_loc.x));
      EXPECT_EQ(std::bit_cast<std::uint64_t>(g.claimed_loc.y), std::bit_cast<std::uint64_t>(g.true_loc.y));
    } else {
      ++h1;
      EXPECT_GE(distance(g.claimed_loc, g.true_loc), s.r);
    }
    EXPECT_TRUE(s.area.contains(g.true_loc));
    EXPECT_TRUE(is_observable(s.rsus, s.tx_range, g.true_loc));
  }
  EXPECT_EQ(h0, 500);
  EXPECT_EQ(h1, 500);
}

TEST(GenerateDataset, TwoSamplesGiveOneOfEach) {
  Rng rng = make_rng(1);
  const auto data = generate_dataset(default_scenario(), 2, rng);
  ASSERT_EQ(data.size(), 2u);
  EXPECT_NE(data[0].label, data[1].label);
}

TEST(GenerateDataset, OddCountRejected) {
  Rng rng = make_rng(1);
  EXPECT_THROW(generate_dataset(default_scenario(), 7, rng), InvalidArgument);
}

TEST(GenerateDataset, SameSeedByteIdenticalSerialization) {
  auto serialize = [](std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const auto data = generate_dataset(default_scenario(), 200, rng);
    std::ostringstream os;
    io::write_dataset_csv(os, data);
    return os.str();
  };
  EXPECT_EQ(serialize(17), serialize(17));
  EXPECT_NE(serialize(17), serialize(18));
}

TEST(SampleSpoofOrigin, InsideAreaAtDistanceAtLeastR) {
  const Scenario s = default_scenario();
  Rng rng = make_rng(4);
  for (int i = 0; i < 500; ++i) {
    const Location claim = sample_true_location(s, rng);
    const Location o = sample_spoof_origin(s, claim, rng);
    EXPECT_TRUE(s.area.contains(o));
    EXPECT_GE(distance(o, claim), s.r);
  }
}

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "posa/population.hpp"
#include "posa/presets.hpp"
#include "posa/simulation.hpp"

using namespace posa;

namespace {

ClusterSpec preset_spec(const std::string& name) {
  return scenario_from_json(nlohmann::json{{"population", load_preset(name)}}).population;
}

}  // namespace

TEST(ComputeK, IdenticalAreasGiveZero) {
  Population pop = make_grid_population(400, {2, 2});
  for (std::size_t a = 0; a < 4; ++a) pop.y[a * 100] = 1;
  EXPECT_NEAR(compute_k(pop), 0.0, 1e-15);
}

TEST(ComputeK, TwoAreasHandComputed) {
  // Prevalences 0 and 0.01, mean 0.005, population SD 0.005.
  Population pop = make_grid_population(200, {1, 2});
  pop.y[100] = 1;
  EXPECT_DOUBLE_EQ(pop.mean(), 0.005);
  EXPECT_NEAR(compute_k(pop), 1.0, 1e-12);
}

TEST(ComputeK, MatchesDirectFormulaOnRandomGrid) {
  Population pop = make_grid_population(900, {3, 3});
  for (std::size_t i = 0; i < pop.size(); i += 7 + (i % 5)) pop.y[i] = 1;
  const auto areas = build_areas(pop);
  double mean = 0.0;
  for (const auto& a : areas) mean += a.prevalence();
  mean /= static_cast<double>(areas.size());
  double ss = 0.0;
  for (const auto& a : areas) ss += (a.prevalence() - mean) * (a.prevalence() - mean);
  const double expected = std::sqrt(ss / static_cast<double>(areas.size())) / pop.mean();
  EXPECT_NEAR(compute_k(pop), expected, 1e-12);
}

TEST(Generator, ZeroPrevalenceGivesEmptyPopulation) {
  ClusterSpec spec;
  spec.target_size = 100;
  spec.target_prevalence = 0.0;
  spec.n_areas = 4;
  const auto g = generate_clustered_population(spec);
  EXPECT_EQ(g.population.case_count(), 0u);
  EXPECT_FALSE(summarize(g.population).k.has_value());
}

TEST(Generator, SameSpecSameSeedIsBitwiseEqual) {
  const ClusterSpec spec = preset_spec("pop4-desk");
  const auto a = generate_clustered_population(spec);
  const auto b = generate_clustered_population(spec);
  EXPECT_TRUE(a.population == b.population);
  ClusterSpec other = spec;
  other.seed = 99;
  EXPECT_FALSE(generate_clustered_population(other).population.y == a.population.y);
}

TEST(Generator, ExactCaseCountAndGrid) {
  const auto g = generate_clustered_population(preset_spec("pop2"));
  EXPECT_EQ(g.population.size(), 250000u);
  EXPECT_EQ(g.population.case_count(), 1250u);
  EXPECT_EQ(g.population.area_count(), 225);
  validate(g.population);
}

class KLadder : public ::testing::TestWithParam<std::pair<const char*, double>> {};

TEST_P(KLadder, PresetHitsTargetK) {
  const auto [name, k] = GetParam();
  const auto g = generate_clustered_population(preset_spec(name));
  EXPECT_NEAR(compute_k(g.population), k, 0.05) << name;
}

INSTANTIATE_TEST_SUITE_P(Presets, KLadder,
                         ::testing::Values(std::pair{"pop1", 0.5}, std::pair{"pop2", 1.1}, std::pair{"pop3", 1.4},
                                           std::pair{"pop4", 1.7}, std::pair{"pop5", 2.0}, std::pair{"pop6", 2.5},
                                           std::pair{"pop1-desk", 0.5}, std::pair{"pop6-desk", 2.5}));

TEST(Generator, KIncreasesWithClusteredFraction) {
  double prev = -1.0;
  for (int i = 1; i <= 6; ++i) {
    const double k = compute_k(generate_clustered_population(preset_spec("pop" + std::to_string(i) + "-desk")).population);
    EXPECT_GT(k, prev);
    prev = k;
  }
}

TEST(Serpentine, TwoByTwo) {
  EXPECT_EQ(serpentine_area_sequence({2, 2}), (std::vector<int>{0, 1, 3, 2}));
}

TEST(Serpentine, SingleArea) {
  EXPECT_EQ(serpentine_area_sequence({1, 1}), (std::vector<int>{0}));
  Population pop = make_grid_population(5, {1, 1});
  const Population s = serpentine_order(pop);
  EXPECT_EQ(s.order, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Serpentine, FifteenByFifteenIsAdjacent) {
  const GridDims g{15, 15};
  const auto seq = serpentine_area_sequence(g);
  ASSERT_EQ(seq.size(), 225u);
  std::vector<int> seen(225, 0);
  for (int a : seq) ++seen[a];
  for (int c : seen) EXPECT_EQ(c, 1);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const int r0 = seq[i - 1] / 15, c0 = seq[i - 1] % 15;
    const int r1 = seq[i] / 15, c1 = seq[i] % 15;
    EXPECT_EQ(std::abs(r0 - r1) + std::abs(c0 - c1), 1) << "step " << i;
  }
}

TEST(Serpentine, UnitsOfAnAreaAreConsecutive) {
  Population pop = serpentine_order(make_grid_population(40, {2, 2}));
  ASSERT_EQ(pop.order.size(), 40u);
  std::vector<int> areas;
  for (std::size_t id : pop.order) {
    if (areas.empty() || areas.back() != pop.area_of[id]) areas.push_back(pop.area_of[id]);
  }
  EXPECT_EQ(areas, (std::vector<int>{0, 1, 3, 2}));
}

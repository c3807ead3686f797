#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "posa/presets.hpp"
#include "posa/simulation.hpp"

using namespace posa;

namespace {

SequentialFrame equal_areas(const std::vector<double>& cases, double size) {
  SequentialFrame f;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    f.ids.push_back(i);
    f.values.push_back(cases[i]);
    f.sizes.push_back(size);
  }
  f.population_size = size * static_cast<double>(cases.size());
  return f;
}

ScenarioConfig small_scenario() {
  nlohmann::json j = {{"name", "small"},
                      {"population", {{"N", 4000}, {"prevalence", 0.02}, {"M", 16}, {"clustered_fraction", 0.4}, {"seed", 3}}},
                      {"m", 5},
                      {"n_min_ratio", 0.8},
                      {"replicates", 300},
                      {"seed", 9},
                      {"range_policy", "clamp"}};
  return scenario_from_json(j);
}

}  // namespace

TEST(Cost, EmptySelectionIsFixedCost) {
  EXPECT_DOUBLE_EQ(CostModel{}.cost(0, 0, false), 100000.0);
}

TEST(Cost, TenAreasOfHundred) {
  EXPECT_DOUBLE_EQ(CostModel{}.cost(10, 1000, false), 120000.0);
  EXPECT_DOUBLE_EQ(CostModel{}.cost(10, 1000, true), 96000.0);
}

TEST(DetectionRate, TableOneRows) {
  EXPECT_EQ(format_rate(detection_rate(271, 22160)), "1.22");
  EXPECT_EQ(format_rate(detection_rate(33, 52098)), "0.06");
}

TEST(Who, UnitDesignEffectIsClassicalFormula) {
  WhoInputs in;
  in.prevalence = 0.005;
  in.precision = 0.25;
  in.k = 0.0;
  in.area_size = 1000;
  const auto w = who_sample_size(in);
  EXPECT_DOUBLE_EQ(w.deff, 1.0);
  EXPECT_NEAR(w.n, 1.96 * 1.96 * 0.995 / (0.0625 * 0.005), 1e-9);
  EXPECT_NEAR(w.n, 12231.65, 0.01);
  EXPECT_EQ(w.m, 13);
}

TEST(Who, DesignEffectFromK) {
  WhoInputs in;
  in.prevalence = 0.0556;
  in.k = 0.5;
  in.area_size = 100;
  const auto w = who_sample_size(in);
  const double rho = 0.25 * 0.0556 / (1 - 0.0556);
  EXPECT_NEAR(w.rho, rho, 1e-15);
  EXPECT_NEAR(w.deff, 1 + 99 * rho, 1e-12);
  EXPECT_EQ(w.m, static_cast<int>(std::ceil(w.n / 100)));
}

TEST(Who, RejectsZeroPrevalence) {
  WhoInputs in;
  in.prevalence = 0.0;
  EXPECT_THROW(who_sample_size(in), ConfigError);
}

TEST(Benchmark, CensusWhenMEqualsM) {
  const auto f = equal_areas({3, 0, 5, 1}, 10);
  Rng rng(1);
  const auto o = traditional_benchmark_draw(f, 4, rng);
  EXPECT_EQ(o.realized_n(), 4u);
  EXPECT_DOUBLE_EQ(o.sampled_total() / o.sampled_size(), 9.0 / 40.0);
}

TEST(Benchmark, OneOfTwoAreasIsFair) {
  const auto f = equal_areas({0, 1}, 100);
  std::map<double, int> seen;
  for (std::uint64_t r = 0; r < 20000; ++r) {
    Rng rng(derive_seed(5, "benchmark", r));
    const auto o = traditional_benchmark_draw(f, 1, rng);
    ++seen[o.sampled_total() / o.sampled_size()];
  }
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_NEAR(seen[0.0] / 20000.0, 0.5, 4 * std::sqrt(0.25 / 20000));
  EXPECT_EQ(seen.count(0.01), 1u);
}

TEST(Benchmark, FixedSizeAcrossReplicates) {
  const auto f = equal_areas({1, 2, 0, 0, 4, 0, 1, 3}, 50);
  for (std::uint64_t r = 0; r < 100; ++r) {
    Rng rng(r);
    EXPECT_DOUBLE_EQ(traditional_benchmark_draw(f, 3, rng).sampled_size(), 150.0);
  }
}

TEST(Config, ExplicitMBypassesCalculator) {
  const auto p = prepare_scenario(small_scenario());
  EXPECT_EQ(p.m, 5);
  EXPECT_EQ(p.n_min_areas, 4);
}

TEST(Config, RejectsUnknownRangePolicyAndDesign) {
  nlohmann::json j = {{"population", "pop1-desk"}, {"range_policy", "wrap"}};
  EXPECT_THROW(scenario_from_json(j), ConfigError);
  j = {{"population", "pop1-desk"}, {"designs", {"benchmark", "srs"}}};
  EXPECT_THROW(scenario_from_json(j), ConfigError);
}

TEST(Config, StudyDefaultsAreMerged) {
  const auto study = study_from_json(load_preset("desk-nmin-0.8"));
  ASSERT_EQ(study.size(), 6u);
  for (const auto& s : study) {
    EXPECT_DOUBLE_EQ(s.n_min_ratio, 0.8);
    EXPECT_EQ(s.replicates, 1000u);
  }
}

TEST(Config, RoundTripsThroughJson) {
  const auto c = small_scenario();
  const auto back = scenario_from_json(scenario_to_json(c));
  EXPECT_EQ(scenario_to_json(back).dump(), scenario_to_json(c).dump());
}

TEST(MonteCarlo, CposaNeverFallsBelowMinimum) {
  const auto p = prepare_scenario(small_scenario());
  const auto recs = run_replicates(p);
  for (const auto& r : recs) {
    ASSERT_TRUE(r.ok) << r.error;
    if (r.design == "cposa") {
      EXPECT_GE(r.areas, static_cast<std::size_t>(p.n_min_areas));
    }
    if (r.design == "benchmark") {
      EXPECT_EQ(r.areas, 5u);
    }
  }
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResults) {
  const auto p = prepare_scenario(small_scenario());
  RunOptions one, many;
  many.jobs = 4;
  many.chunk = 37;
  const auto a = aggregate(p, run_replicates(p, one));
  const auto b = aggregate(p, run_replicates(p, many));
  ASSERT_EQ(a.designs.size(), b.designs.size());
  for (std::size_t i = 0; i < a.designs.size(); ++i) {
    EXPECT_EQ(a.designs[i].rmse, b.designs[i].rmse);
    EXPECT_EQ(a.designs[i].detection, b.designs[i].detection);
    EXPECT_EQ(a.designs[i].cost_per_case, b.designs[i].cost_per_case);
  }
}

TEST(MonteCarlo, CheckpointResumeGivesSameAggregates) {
  const auto p = prepare_scenario(small_scenario());
  const auto dir = std::filesystem::temp_directory_path() / "posa_ck_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  RunOptions o;
  o.checkpoint = (dir / "ck.csv").string();
  const auto full = aggregate(p, run_replicates(p));

  auto partial = p;
  partial.config.replicates = 120;
  run_replicates(partial, o);
  const auto resumed = aggregate(p, run_replicates(p, o));
  for (std::size_t i = 0; i < full.designs.size(); ++i) {
    EXPECT_EQ(full.designs[i].rmse, resumed.designs[i].rmse);
    EXPECT_EQ(full.designs[i].mean_size, resumed.designs[i].mean_size);
  }
  std::filesystem::remove_all(dir);
}

TEST(Ratios, DesignAgainstItselfIsOne) {
  auto c = small_scenario();
  c.designs = {"benchmark"};
  c.replicates = 50;
  const auto set = run_monte_carlo(c);
  for (const auto& row : ratio_report({set})) EXPECT_DOUBLE_EQ(row.ratio, 1.0);
}

#include <gtest/gtest.h>

#include <filesystem>

#include "posa/serialize.hpp"

using namespace posa;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("posa_ser_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Serialize, DoublesRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 0.30000000000000004, 123456.789}) {
    EXPECT_EQ(std::stod(fmt_double(x)), x);
  }
}

TEST(Serialize, PopulationRoundTrip) {
  ClusterSpec spec;
  spec.target_size = 900;
  spec.target_prevalence = 0.03;
  spec.n_areas = 9;
  spec.clustered_fraction = 0.5;
  spec.seed = 4;
  const Population pop = generate_clustered_population(spec).population;
  const auto dir = scratch("pop");
  write_population(pop, dir / "p");
  EXPECT_TRUE(read_population(dir / "p") == pop);
  EXPECT_TRUE(read_population(dir / "p.csv") == pop);
  fs::remove_all(dir);
}

TEST(Serialize, CorruptPopulationIsRejected) {
  const auto dir = scratch("bad");
  write_population(make_line_population({1, 0, 1}), dir / "p");
  write_text(dir / "p.csv", "unit_id,area_id,y\n0,0,1\n1,0,7\n2,0,0\n");
  EXPECT_ANY_THROW(read_population(dir / "p"));
  fs::remove_all(dir);
}

TEST(Serialize, ZeroPrevalenceSummaryFlagsK) {
  const auto j = summary_json(summarize(make_line_population({0, 0, 0})));
  EXPECT_TRUE(j.at("k").is_null());
  EXPECT_FALSE(j.at("k_defined").get<bool>());
}

TEST(Serialize, RecordsRoundTripAndSkipTornLines) {
  ReplicateRecord a{"posa", 3, true, "", 27, 2700, 150, 0.0555, 123456.5};
  ReplicateRecord b{"cposa", 4, false, "out of range, step 7", 0, 0, 0, 0, 0};
  const auto dir = scratch("rec");
  write_text(dir / "r.csv", records_csv_header() + record_csv_row(a) + record_csv_row(b) + "posa,5,1,2");
  const auto back = read_records(dir / "r.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].estimate, a.estimate);
  EXPECT_EQ(back[0].cost, a.cost);
  EXPECT_FALSE(back[1].ok);
  EXPECT_EQ(back[1].replicate, 4u);
  fs::remove_all(dir);
}

TEST(Serialize, TraceHasOneRowPerStep) {
  const auto pop = make_line_population({1, 0, 1, 1});
  EngineOptions o;
  o.record_trace = true;
  const auto out = run_list_sequential(pop, std::vector<double>(4, 0.5), *posa_rule(), 8, o);
  const std::string csv = trace_csv(out);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.rfind("step,unit,prob_in_force,s_i,y_i_if_observed\n", 0), 0u);
}

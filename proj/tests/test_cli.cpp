#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "posa/serialize.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(POSA_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("posa_cli_" + name);
  fs::remove_all(p);
  return p;
}

void expect_same_files(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(posa::read_text(e.path()), posa::read_text(b / rel)) << rel;
    ++n;
  }
  EXPECT_GT(n, 0u);
}

}  // namespace

TEST(Cli, GenPopIsDeterministic) {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  ASSERT_EQ(run("gen-pop --preset pop6-desk --out " + a.string()), 0);
  ASSERT_EQ(run("gen-pop --preset pop6-desk --out " + b.string()), 0);
  expect_same_files(a, b);
  const auto j = nlohmann::json::parse(posa::read_text(a / "summary.json"));
  EXPECT_NEAR(j.at("k").get<double>(), 2.5, 0.05);
}

TEST(Cli, RunDesignIsDeterministic) {
  const auto a = scratch("run_a"), b = scratch("run_b");
  const std::string args = "run-design --y 1,0,1,1,0,0,1 --design posa --pi0 0.4 --seed 12 --explain --exact --out ";
  ASSERT_EQ(run(args + a.string()), 0);
  ASSERT_EQ(run(args + b.string()), 0);
  expect_same_files(a, b);
  EXPECT_TRUE(fs::exists(a / "explain.csv"));
}

TEST(Cli, VerifyRejectsSeventeen) {
  EXPECT_EQ(run("verify --max-n 17 --out " + scratch("v17").string()), 2);
}

TEST(Cli, VerifyCorruptedRuleFails) {
  EXPECT_EQ(run("verify --max-n 5 --designs posa --corrupt --out " + scratch("vc").string()), 1);
}

TEST(Cli, VerifyPoissonPasses) {
  const auto d = scratch("vp");
  EXPECT_EQ(run("verify --max-n 6 --designs poisson --out " + d.string()), 0);
  const auto j = nlohmann::json::parse(posa::read_text(d / "verify.json"));
  EXPECT_TRUE(j.contains("checks"));
}

TEST(Cli, SimulateAndReportAreDeterministic) {
  const auto a = scratch("sim_a"), b = scratch("sim_b");
  ASSERT_EQ(run("simulate --preset desk-nmin-1 --replicates 40 --jobs 3 --out " + a.string()), 0);
  ASSERT_EQ(run("simulate --preset desk-nmin-1 --replicates 40 --jobs 1 --out " + b.string()), 0);
  expect_same_files(a, b);
  ASSERT_EQ(run("report " + a.string() + " --out " + (a / "rep").string()), 0);
  EXPECT_TRUE(fs::exists(a / "rep" / "ratios.csv"));
}

TEST(Cli, UnknownPresetIsAUsageError) {
  EXPECT_EQ(run("gen-pop --preset nope --out " + scratch("np").string()), 2);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  const auto d = scratch("env");
  const std::string cmd = "POSA_OUT=" + d.string() + " " + POSA_CLI + " gen-pop --preset pop1-desk -q";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(d / "population.csv"));
}

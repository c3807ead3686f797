#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "posa/design.hpp"
#include "posa/population.hpp"
#include "posa/rng.hpp"

namespace posa {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CostModel {
  double c0 = 100000.0;
  double c1 = 1000.0;
  double c2 = 10.0;
  double discount = 0.20;  // applied to sequential designs only

  /// C = c0 + c1 * areas + c2 * individuals, times (1 - discount) if sequential.
  double cost(std::size_t areas, double individuals, bool sequential) const;
};

struct WhoInputs {
  double prevalence = 0.0;
  double precision = 0.25;  // relative
  double k = 0.0;
  double area_size = 1.0;
  double z = 1.96;
};

struct WhoSampleSize {
  double n = 0.0;
  double rho = 0.0;
  double deff = 1.0;
  int m = 0;
};

/// n = z^2 (1-p) / (d^2 p) * deff, deff = 1 + (area_size - 1) rho,
/// rho = k^2 p / (1-p), m = ceil(n / area_size).
WhoSampleSize who_sample_size(const WhoInputs& in);

/// Per 100 participants.
double detection_rate(double cases, double participants);
std::string format_rate(double rate);

struct ScenarioConfig {
  std::string name = "scenario";
  ClusterSpec population;
  std::optional<std::string> population_file;
  std::vector<std::string> designs = {"benchmark", "posa", "cposa"};
  std::optional<double> threshold;  // area cutoff; default is the true prevalence
  std::optional<int> m;             // pins the benchmark area count
  std::optional<double> prevalence_guess;
  double precision = 0.25;
  std::optional<double> planning_k;  // default is the population's own k
  double z = 1.96;
  double n_min_ratio = 1.0;
  std::size_t replicates = 5000;
  std::uint64_t seed = 2024;
  CostModel cost;
  RangePolicy range_policy = RangePolicy::kError;
  double max_error_fraction = 0.01;
};

ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::ordered_json scenario_to_json(const ScenarioConfig& c);

/// A study file holds shared "defaults" and a list of "scenarios" that
/// override them. A plain scenario object is a study of one.
std::vector<ScenarioConfig> study_from_json(const nlohmann::json& j);

/// One replicate of one design.
struct ReplicateRecord {
  std::string design;
  std::size_t replicate = 0;
  bool ok = true;
  std::string error;
  std::size_t areas = 0;
  double individuals = 0.0;
  double cases = 0.0;
  double estimate = 0.0;
  double cost = 0.0;
};

struct DesignMetrics {
  std::string design;
  std::size_t replicates = 0;
  std::size_t errors = 0;
  std::string first_error;
  std::size_t zero_case = 0;
  std::size_t empty_samples = 0;
  double mean_areas = 0.0;
  std::size_t min_areas = 0;
  double mean_size = 0.0;
  double sd_size = 0.0;
  double se_size = 0.0;
  double min_size = 0.0;
  double max_size = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double se_rmse = 0.0;
  double detection = 0.0;  // per 100
  double se_detection = 0.0;
  double cost_per_case = 0.0;
  double se_cost_per_case = 0.0;
  double mean_cost = 0.0;
  bool failed = false;

  double zero_case_fraction() const;
};

struct MetricSet {
  std::string scenario;
  double k = 0.0;
  double prevalence = 0.0;
  std::size_t N = 0;
  int M = 0;
  int m = 0;
  int n_min_areas = 0;
  WhoSampleSize who;
  std::vector<DesignMetrics> designs;

  const DesignMetrics* find(const std::string& design) const;
  bool failed() const;
};

/// Simple random sample of m areas without replacement; every unit of a
/// selected area is surveyed. Areas are the sampling units of the outcome.
DesignOutcome traditional_benchmark_draw(const Population& pop, int m, Rng& rng);
DesignOutcome traditional_benchmark_draw(const SequentialFrame& areas, int m, Rng& rng);

struct RunOptions {
  unsigned jobs = 1;
  std::optional<std::string> checkpoint;  // per-replicate CSV, appended and resumed
  std::size_t chunk = 250;
  bool verbose = false;
};

/// Everything a scenario needs that does not change across replicates.
struct PreparedScenario {
  ScenarioConfig config;
  Population population;
  SequentialFrame areas;
  double k = 0.0;
  int m = 0;
  int n_min_areas = 0;
  WhoSampleSize who;

  double population_size_per_area() const;
};

PreparedScenario prepare_scenario(const ScenarioConfig& config);

ReplicateRecord run_replicate(const PreparedScenario& s, const std::string& design, std::size_t replicate);

std::vector<ReplicateRecord> run_replicates(const PreparedScenario& s, const RunOptions& options = {});

MetricSet aggregate(const PreparedScenario& s, const std::vector<ReplicateRecord>& records);

MetricSet run_monte_carlo(const ScenarioConfig& config, const RunOptions& options = {});

struct RatioRow {
  std::string scenario;
  double k = 0.0;
  std::string design;
  std::string metric;
  double value = 0.0;
  double benchmark = 0.0;
  double ratio = 0.0;
  double ratio_se = 0.0;
};

std::vector<RatioRow> ratio_report(const std::vector<MetricSet>& sets, const std::string& benchmark = "benchmark");

}  // namespace posa

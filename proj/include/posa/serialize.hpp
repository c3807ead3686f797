#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "posa/design.hpp"
#include "posa/estimation.hpp"
#include "posa/oracle.hpp"
#include "posa/population.hpp"
#include "posa/simulation.hpp"

namespace posa {

/// Shortest text that reads back to the same double.
std::string fmt_double(double x);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Population: <stem>.csv with unit_id,area_id,y plus <stem>.json header.
nlohmann::ordered_json population_header(const Population& pop);
std::string population_csv(const Population& pop);
void write_population(const Population& pop, const std::filesystem::path& stem);
/// Accepts the stem, the .csv or the .json path.
Population read_population(const std::filesystem::path& path);

nlohmann::ordered_json summary_json(const PopulationSummary& s);

nlohmann::ordered_json outcome_json(const DesignOutcome& outcome);
std::string trace_csv(const DesignOutcome& outcome);
nlohmann::ordered_json estimate_json(const EstimateReport& report);
std::string explain_csv(const std::vector<ExplainTerm>& terms);
std::string path_distribution_csv(const PathDistribution& dist);

std::string records_csv_header();
std::string record_csv_row(const ReplicateRecord& r);
std::vector<ReplicateRecord> read_records(const std::filesystem::path& path);

std::string results_csv(const std::vector<MetricSet>& sets, const std::vector<RatioRow>& ratios);
nlohmann::ordered_json results_json(const std::vector<MetricSet>& sets);
std::vector<MetricSet> metric_sets_from_json(const nlohmann::json& j);
std::string ratio_table_csv(const std::vector<RatioRow>& rows);

}  // namespace posa

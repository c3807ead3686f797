#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace posa {

struct GridDims {
  int rows = 1;
  int cols = 1;

  int areas() const { return rows * cols; }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

enum class OrderRule { kIdentity, kSerpentine };

std::string to_string(OrderRule rule);
OrderRule order_rule_from_string(const std::string& name);

/// A finite population of units carrying a binary trait, partitioned into
/// areas laid out on a grid. `order` is the visit sequence: order[step] is
/// the unit id visited at that step.
struct Population {
  std::vector<std::uint8_t> y;
  std::vector<int> area_of;
  GridDims grid;
  std::vector<std::size_t> order;
  OrderRule order_rule = OrderRule::kIdentity;
  std::uint64_t seed = 0;

  std::size_t size() const { return y.size(); }
  int area_count() const { return grid.areas(); }
  std::size_t case_count() const;
  double mean() const;

  friend bool operator==(const Population&, const Population&) = default;
};

struct Area {
  int id = 0;
  std::vector<std::size_t> unit_ids;
  std::size_t case_count = 0;
  double threshold = 1.0;

  std::size_t size() const { return unit_ids.size(); }
  double prevalence() const {
    return unit_ids.empty() ? 0.0 : static_cast<double>(case_count) / static_cast<double>(size());
  }
};

struct ClusterSpec {
  std::size_t target_size = 0;
  double target_prevalence = 0.0;
  int n_areas = 1;
  std::optional<GridDims> grid;  // defaults to a square grid of n_areas
  int n_clusters = 3;
  double clustered_fraction = 0.0;
  std::optional<double> target_k;
  /// Areas per hot-spot cluster; by default about 7% of all areas are split
  /// across the clusters.
  std::optional<int> areas_per_cluster;
  std::uint64_t seed = 1;
};

struct PopulationSummary {
  std::size_t N = 0;
  int M = 0;
  std::size_t cases = 0;
  double prevalence = 0.0;
  std::optional<double> k;  // empty when prevalence is zero
  std::vector<double> area_prevalences;
  double clustered_fraction = 0.0;  // as realised by the generator, if known
};

class PopulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds a line population: one area, identity order. Handy for small fixtures.
Population make_line_population(const std::vector<std::uint8_t>& y);

/// Grid population with equal-as-possible area sizes and no cases yet.
/// Unit ids are area-major; order is the identity.
Population make_grid_population(std::size_t n_units, GridDims grid);

GridDims resolve_grid(const ClusterSpec& spec);
int resolve_areas_per_cluster(const ClusterSpec& spec);

/// Realised clustered fraction after generation, reported back for audit.
struct GeneratedPopulation {
  Population population;
  double clustered_fraction = 0.0;
  std::vector<int> cluster_areas;
  int iterations = 0;
};

GeneratedPopulation generate_clustered_population(const ClusterSpec& spec);

/// Per-area view with the given prevalence cutoff attached to each area.
std::vector<Area> build_areas(const Population& pop, double threshold = 1.0);

/// Population SD of the area prevalences divided by the overall mean.
double compute_k(const Population& pop);

PopulationSummary summarize(const Population& pop);

/// Boustrophedon area sequence: row 0 left to right, row 1 right to left, ...
std::vector<int> serpentine_area_sequence(GridDims grid);

/// Returns a copy whose order visits areas serpentine-wise, units within an
/// area consecutively (ascending id).
Population serpentine_order(const Population& pop);

/// Recomputes `order` from `order_rule`.
void apply_order_rule(Population& pop);

void validate(const Population& pop);

}  // namespace posa

#include "posa/population.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "posa/rng.hpp"

namespace posa {

namespace {

constexpr double kClusterAreaShare = 0.07;
constexpr double kTargetKTolerance = 0.05;
constexpr int kMaxKIterations = 100;

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

std::vector<std::vector<std::size_t>> units_by_area(const Population& pop) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(pop.area_count()));
  for (std::size_t u = 0; u < pop.size(); ++u) {
    out[static_cast<std::size_t>(pop.area_of[u])].push_back(u);
  }
  return out;
}

std::vector<int> grow_clusters(GridDims grid, int n_clusters, int per_cluster, Rng& rng) {
  const int M = grid.areas();
  std::vector<int> owner(static_cast<std::size_t>(M), -1);
  auto neighbours = [&](int a) {
    std::vector<int> out;
    const int r = a / grid.cols, c = a % grid.cols;
    if (r > 0) out.push_back(a - grid.cols);
    if (r + 1 < grid.rows) out.push_back(a + grid.cols);
    if (c > 0) out.push_back(a - 1);
    if (c + 1 < grid.cols) out.push_back(a + 1);
    return out;
  };
  auto touches_cluster = [&](int a) {
    for (int b : neighbours(a)) {
      if (owner[static_cast<std::size_t>(b)] >= 0) return true;
    }
    return false;
  };

  std::vector<int> cluster_areas;
  for (int cl = 0; cl < n_clusters; ++cl) {
    std::vector<int> isolated, free;
    for (int a = 0; a < M; ++a) {
      if (owner[static_cast<std::size_t>(a)] >= 0) continue;
      free.push_back(a);
      if (!touches_cluster(a)) isolated.push_back(a);
    }
    const auto& pool = isolated.empty() ? free : isolated;
    if (pool.empty()) throw PopulationError("not enough areas to place clusters");
    const int seed_area = pool[static_cast<std::size_t>(uniform_below(rng, pool.size()))];
    const double sr = seed_area / grid.cols, sc = seed_area % grid.cols;

    std::vector<int> members{seed_area};
    owner[static_cast<std::size_t>(seed_area)] = cl;
    while (static_cast<int>(members.size()) < per_cluster) {
      std::vector<int> frontier;
      for (int m : members) {
        for (int b : neighbours(m)) {
          if (owner[static_cast<std::size_t>(b)] < 0 &&
              std::find(frontier.begin(), frontier.end(), b) == frontier.end()) {
            frontier.push_back(b);
          }
        }
      }
      if (frontier.empty()) throw PopulationError("cluster cannot grow: grid too crowded");
      shuffle_in_place(frontier, rng);
      auto dist = [&](int a) {
        const double dr = a / grid.cols - sr, dc = a % grid.cols - sc;
        return dr * dr + dc * dc;
      };
      const int pick = *std::min_element(frontier.begin(), frontier.end(),
                                         [&](int a, int b) { return dist(a) < dist(b); });
      owner[static_cast<std::size_t>(pick)] = cl;
      members.push_back(pick);
    }
    cluster_areas.insert(cluster_areas.end(), members.begin(), members.end());
  }
  std::sort(cluster_areas.begin(), cluster_areas.end());
  return cluster_areas;
}

}  // namespace

std::string to_string(OrderRule rule) {
  switch (rule) {
    case OrderRule::kIdentity: return "identity";
    case OrderRule::kSerpentine: return "serpentine";
  }
  return "identity";
}

OrderRule order_rule_from_string(const std::string& name) {
  if (name == "identity") return OrderRule::kIdentity;
  if (name == "serpentine") return OrderRule::kSerpentine;
  throw PopulationError("unknown order rule: " + name);
}

std::size_t Population::case_count() const {
  return static_cast<std::size_t>(std::count(y.begin(), y.end(), std::uint8_t{1}));
}

double Population::mean() const {
  return y.empty() ? 0.0 : static_cast<double>(case_count()) / static_cast<double>(size());
}

Population make_line_population(const std::vector<std::uint8_t>& y) {
  Population pop;
  pop.y = y;
  pop.area_of.assign(y.size(), 0);
  pop.grid = {1, 1};
  pop.order.resize(y.size());
  std::iota(pop.order.begin(), pop.order.end(), std::size_t{0});
  return pop;
}

Population make_grid_population(std::size_t n_units, GridDims grid) {
  const auto M = static_cast<std::size_t>(grid.areas());
  if (grid.rows < 1 || grid.cols < 1) throw PopulationError("grid dims must be positive");
  if (n_units < M) throw PopulationError("every area needs at least one unit");
  Population pop;
  pop.grid = grid;
  pop.y.assign(n_units, 0);
  pop.area_of.resize(n_units);
  const std::size_t base = n_units / M, extra = n_units % M;
  std::size_t u = 0;
  for (std::size_t a = 0; a < M; ++a) {
    const std::size_t sz = base + (a < extra ? 1 : 0);
    for (std::size_t k = 0; k < sz; ++k) pop.area_of[u++] = static_cast<int>(a);
  }
  pop.order.resize(n_units);
  std::iota(pop.order.begin(), pop.order.end(), std::size_t{0});
  return pop;
}

GridDims resolve_grid(const ClusterSpec& spec) {
  if (spec.grid) {
    if (spec.grid->areas() != spec.n_areas) {
      throw PopulationError("grid dims do not multiply to n_areas");
    }
    return *spec.grid;
  }
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(spec.n_areas))));
  if (side * side != spec.n_areas) {
    throw PopulationError("n_areas is not a perfect square; give explicit grid dims");
  }
  return {side, side};
}

int resolve_areas_per_cluster(const ClusterSpec& spec) {
  if (spec.areas_per_cluster) return *spec.areas_per_cluster;
  if (spec.n_clusters <= 0) return 0;
  const double share = kClusterAreaShare * spec.n_areas / spec.n_clusters;
  return std::max(1, static_cast<int>(std::lround(share)));
}

GeneratedPopulation generate_clustered_population(const ClusterSpec& spec) {
  if (spec.target_prevalence < 0.0 || spec.target_prevalence > 1.0) {
    throw PopulationError("target_prevalence must lie in [0,1]");
  }
  if (spec.clustered_fraction < 0.0 || spec.clustered_fraction > 1.0) {
    throw PopulationError("clustered_fraction must lie in [0,1]");
  }
  if (spec.n_clusters < 0) throw PopulationError("n_clusters must be nonnegative");
  const GridDims grid = resolve_grid(spec);
  const int per_cluster = resolve_areas_per_cluster(spec);
  if (spec.n_clusters * per_cluster > grid.areas()) {
    throw PopulationError("clusters need more areas than the grid has");
  }

  GeneratedPopulation out;
  out.population = make_grid_population(spec.target_size, grid);
  Population& pop = out.population;
  pop.seed = spec.seed;

  Rng rng(spec.seed);
  out.cluster_areas = grow_clusters(grid, spec.n_clusters, per_cluster, rng);

  std::vector<char> in_cluster(static_cast<std::size_t>(grid.areas()), 0);
  for (int a : out.cluster_areas) in_cluster[static_cast<std::size_t>(a)] = 1;
  std::vector<std::size_t> cluster_units, other_units;
  for (std::size_t u = 0; u < pop.size(); ++u) {
    (in_cluster[static_cast<std::size_t>(pop.area_of[u])] ? cluster_units : other_units).push_back(u);
  }
  // Fixed permutations: changing the fraction moves cases at the margin only,
  // which keeps k a near-monotone function of the fraction.
  shuffle_in_place(cluster_units, rng);
  shuffle_in_place(other_units, rng);

  const auto cases = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.target_size) * spec.target_prevalence));

  auto place = [&](double fraction) {
    const auto clustered = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cases)));
    if (clustered > cluster_units.size()) {
      throw PopulationError("infeasible spec: more clustered cases than cluster capacity");
    }
    if (cases - clustered > other_units.size()) {
      throw PopulationError("infeasible spec: background cases exceed non-cluster capacity");
    }
    std::fill(pop.y.begin(), pop.y.end(), std::uint8_t{0});
    for (std::size_t k = 0; k < clustered; ++k) pop.y[cluster_units[k]] = 1;
    for (std::size_t k = 0; k < cases - clustered; ++k) pop.y[other_units[k]] = 1;
    return cases == 0 ? 0.0 : static_cast<double>(clustered) / static_cast<double>(cases);
  };

  out.clustered_fraction = place(spec.clustered_fraction);
  if (spec.target_k && cases > 0) {
    const double target = *spec.target_k;
    double lo = 0.0;
    double hi = std::min(1.0, static_cast<double>(cluster_units.size()) / static_cast<double>(cases));
    double f = std::clamp(spec.clustered_fraction, lo, hi);
    bool hit = false;
    for (int it = 0; it < kMaxKIterations; ++it) {
      out.clustered_fraction = place(f);
      out.iterations = it + 1;
      const double k = compute_k(pop);
      if (std::abs(k - target) <= kTargetKTolerance) {
        hit = true;
        break;
      }
      (k < target ? lo : hi) = f;
      f = 0.5 * (lo + hi);
    }
    if (!hit) {
      throw PopulationError("target k " + std::to_string(target) +
                            " unattainable within the iteration budget");
    }
  }
  pop.order_rule = OrderRule::kSerpentine;
  apply_order_rule(pop);
  return out;
}

std::vector<Area> build_areas(const Population& pop, double threshold) {
  std::vector<Area> areas(static_cast<std::size_t>(pop.area_count()));
  for (std::size_t a = 0; a < areas.size(); ++a) {
    areas[a].id = static_cast<int>(a);
    areas[a].threshold = threshold;
  }
  for (std::size_t u = 0; u < pop.size(); ++u) {
    Area& area = areas[static_cast<std::size_t>(pop.area_of[u])];
    area.unit_ids.push_back(u);
    area.case_count += pop.y[u];
  }
  return areas;
}

double compute_k(const Population& pop) {
  const double mean = pop.mean();
  if (!(mean > 0.0)) throw PopulationError("k is undefined for a population with no cases");
  const auto areas = build_areas(pop);
  double sum = 0.0;
  for (const auto& a : areas) sum += a.prevalence();
  const double avg = sum / static_cast<double>(areas.size());
  double ss = 0.0;
  for (const auto& a : areas) ss += (a.prevalence() - avg) * (a.prevalence() - avg);
  return std::sqrt(ss / static_cast<double>(areas.size())) / mean;
}

PopulationSummary summarize(const Population& pop) {
  PopulationSummary s;
  s.N = pop.size();
  s.M = pop.area_count();
  s.cases = pop.case_count();
  s.prevalence = pop.mean();
  for (const auto& a : build_areas(pop)) s.area_prevalences.push_back(a.prevalence());
  if (s.cases > 0) s.k = compute_k(pop);
  return s;
}

std::vector<int> serpentine_area_sequence(GridDims grid) {
  std::vector<int> seq;
  seq.reserve(static_cast<std::size_t>(grid.areas()));
  for (int r = 0; r < grid.rows; ++r) {
    for (int k = 0; k < grid.cols; ++k) {
      const int c = (r % 2 == 0) ? k : grid.cols - 1 - k;
      seq.push_back(r * grid.cols + c);
    }
  }
  return seq;
}

void apply_order_rule(Population& pop) {
  pop.order.clear();
  pop.order.reserve(pop.size());
  if (pop.order_rule == OrderRule::kIdentity) {
    for (std::size_t u = 0; u < pop.size(); ++u) pop.order.push_back(u);
    return;
  }
  const auto members = units_by_area(pop);
  for (int a : serpentine_area_sequence(pop.grid)) {
    const auto& units = members[static_cast<std::size_t>(a)];
    pop.order.insert(pop.order.end(), units.begin(), units.end());
  }
}

Population serpentine_order(const Population& pop) {
  Population out = pop;
  out.order_rule = OrderRule::kSerpentine;
  apply_order_rule(out);
  return out;
}

void validate(const Population& pop) {
  const std::size_t N = pop.size();
  if (pop.area_of.size() != N) throw PopulationError("area_of length differs from N");
  if (pop.order.size() != N) throw PopulationError("order length differs from N");
  const int M = pop.area_count();
  std::vector<char> area_seen(static_cast<std::size_t>(M), 0);
  for (std::size_t u = 0; u < N; ++u) {
    if (pop.y[u] > 1) throw PopulationError("trait values must be binary");
    if (pop.area_of[u] < 0 || pop.area_of[u] >= M) throw PopulationError("area index out of range");
    area_seen[static_cast<std::size_t>(pop.area_of[u])] = 1;
  }
  if (std::find(area_seen.begin(), area_seen.end(), 0) != area_seen.end()) {
    throw PopulationError("every area needs at least one unit");
  }
  std::vector<char> seen(N, 0);
  for (std::size_t u : pop.order) {
    if (u >= N || seen[u]) throw PopulationError("order is not a permutation of the units");
    seen[u] = 1;
  }
}

}  // namespace posa

#include "posa/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "posa/estimation.hpp"
#include "posa/numeric.hpp"
#include "posa/presets.hpp"
#include "posa/rng.hpp"
#include "posa/serialize.hpp"

namespace posa {

namespace {

bool is_sequential(const std::string& design) { return design != "benchmark"; }

struct Moments {
  KahanSum sum, sum_sq;
  std::size_t n = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum.value() / static_cast<double>(n) : 0.0; }
  double var() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::max(0.0, (sum_sq.value() - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
  }
  double se() const { return n ? std::sqrt(var() / static_cast<double>(n)) : 0.0; }
};

ClusterSpec merged_spec(const nlohmann::json& j, ClusterSpec s) {
  if (j.contains("N")) s.target_size = j.at("N").get<std::size_t>();
  if (j.contains("prevalence")) s.target_prevalence = j.at("prevalence").get<double>();
  if (j.contains("M")) s.n_areas = j.at("M").get<int>();
  if (j.contains("grid")) s.grid = GridDims{j.at("grid").at(0).get<int>(), j.at("grid").at(1).get<int>()};
  if (j.contains("n_clusters")) s.n_clusters = j.at("n_clusters").get<int>();
  if (j.contains("clustered_fraction")) s.clustered_fraction = j.at("clustered_fraction").get<double>();
  if (j.contains("target_k") && !j.at("target_k").is_null()) s.target_k = j.at("target_k").get<double>();
  if (j.contains("areas_per_cluster")) s.areas_per_cluster = j.at("areas_per_cluster").get<int>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

double CostModel::cost(std::size_t areas, double individuals, bool sequential) const {
  const double c = c0 + c1 * static_cast<double>(areas) + c2 * individuals;
  return sequential ? c * (1.0 - discount) : c;
}

WhoSampleSize who_sample_size(const WhoInputs& in) {
  if (!(in.prevalence > 0.0 && in.prevalence < 1.0)) throw ConfigError("prevalence guess must lie in (0,1)");
  if (!(in.precision > 0.0) || !(in.z > 0.0) || !(in.area_size >= 1.0) || !(in.k >= 0.0)) {
    throw ConfigError("sample size inputs must be positive");
  }
  WhoSampleSize out;
  const double p = in.prevalence;
  out.rho = in.k * in.k * p / (1.0 - p);
  out.deff = 1.0 + (in.area_size - 1.0) * out.rho;
  out.n = in.z * in.z * (1.0 - p) / (in.precision * in.precision * p) * out.deff;
  out.m = static_cast<int>(std::ceil(out.n / in.area_size));
  return out;
}

double detection_rate(double cases, double participants) {
  if (!(participants > 0.0)) throw std::invalid_argument("no participants");
  return 100.0 * cases / participants;
}

std::string format_rate(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", rate);
  return buf;
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  try {
    if (j.contains("name")) c.name = j.at("name").get<std::string>();
    if (j.contains("population")) {
      const auto& p = j.at("population");
      if (p.is_string()) {
        c.population = merged_spec(load_preset(p.get<std::string>()), c.population);
      } else {
        nlohmann::json spec = p;
        if (p.contains("preset")) {
          spec = load_preset(p.at("preset").get<std::string>());
          spec.merge_patch(p);
        }
        c.population = merged_spec(spec, c.population);
      }
    }
    if (j.contains("population_file")) c.population_file = j.at("population_file").get<std::string>();
    if (j.contains("designs")) c.designs = j.at("designs").get<std::vector<std::string>>();
    if (j.contains("threshold") && !j.at("threshold").is_null()) c.threshold = j.at("threshold").get<double>();
    if (j.contains("m") && !j.at("m").is_null()) c.m = j.at("m").get<int>();
    if (j.contains("prevalence_guess")) c.prevalence_guess = j.at("prevalence_guess").get<double>();
    if (j.contains("precision")) c.precision = j.at("precision").get<double>();
    if (j.contains("planning_k")) c.planning_k = j.at("planning_k").get<double>();
    if (j.contains("z")) c.z = j.at("z").get<double>();
    if (j.contains("n_min_ratio")) c.n_min_ratio = j.at("n_min_ratio").get<double>();
    if (j.contains("replicates")) c.replicates = j.at("replicates").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("cost")) {
      const auto& k = j.at("cost");
      c.cost.c0 = k.value("c0", c.cost.c0);
      c.cost.c1 = k.value("c1", c.cost.c1);
      c.cost.c2 = k.value("c2", c.cost.c2);
      c.cost.discount = k.value("discount", c.cost.discount);
    }
    if (j.contains("range_policy")) {
      const auto s = j.at("range_policy").get<std::string>();
      if (s == "error") {
        c.range_policy = RangePolicy::kError;
      } else if (s == "clamp") {
        c.range_policy = RangePolicy::kClamp;
      } else {
        throw ConfigError("range_policy must be \"error\" or \"clamp\"");
      }
    }
    if (j.contains("max_error_fraction")) c.max_error_fraction = j.at("max_error_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad scenario config: ") + e.what());
  }

  if (c.replicates < 1) throw ConfigError("replicates must be at least 1");
  if (!(c.cost.discount >= 0.0 && c.cost.discount < 1.0)) throw ConfigError("discount must lie in [0,1)");
  if (c.cost.c0 < 0 || c.cost.c1 < 0 || c.cost.c2 < 0) throw ConfigError("cost coefficients must be nonnegative");
  if (!(c.n_min_ratio > 0.0)) throw ConfigError("n_min_ratio must be positive");
  for (const auto& d : c.designs) {
    if (d != "benchmark" && d != "posa" && d != "cposa") throw ConfigError("unknown design: " + d);
  }
  return c;
}

nlohmann::ordered_json scenario_to_json(const ScenarioConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  if (c.population_file) {
    j["population_file"] = *c.population_file;
  } else {
    auto& p = j["population"];
    p["N"] = c.population.target_size;
    p["prevalence"] = c.population.target_prevalence;
    p["M"] = c.population.n_areas;
    if (c.population.grid) p["grid"] = {c.population.grid->rows, c.population.grid->cols};
    p["n_clusters"] = c.population.n_clusters;
    p["clustered_fraction"] = c.population.clustered_fraction;
    if (c.population.target_k) p["target_k"] = *c.population.target_k;
    if (c.population.areas_per_cluster) p["areas_per_cluster"] = *c.population.areas_per_cluster;
    p["seed"] = c.population.seed;
  }
  j["designs"] = c.designs;
  if (c.threshold) j["threshold"] = *c.threshold;
  if (c.m) j["m"] = *c.m;
  if (c.prevalence_guess) j["prevalence_guess"] = *c.prevalence_guess;
  j["precision"] = c.precision;
  if (c.planning_k) j["planning_k"] = *c.planning_k;
  j["z"] = c.z;
  j["n_min_ratio"] = c.n_min_ratio;
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  j["cost"] = {{"c0", c.cost.c0}, {"c1", c.cost.c1}, {"c2", c.cost.c2}, {"discount", c.cost.discount}};
  j["range_policy"] = c.range_policy == RangePolicy::kError ? "error" : "clamp";
  j["max_error_fraction"] = c.max_error_fraction;
  return j;
}

std::vector<ScenarioConfig> study_from_json(const nlohmann::json& j) {
  if (!j.contains("scenarios")) return {scenario_from_json(j)};
  const nlohmann::json defaults = j.value("defaults", nlohmann::json::object());
  std::vector<ScenarioConfig> out;
  for (const auto& s : j.at("scenarios")) {
    nlohmann::json merged = defaults;
    merged.merge_patch(s);
    out.push_back(scenario_from_json(merged));
  }
  if (out.empty()) throw ConfigError("study has no scenarios");
  return out;
}

double DesignMetrics::zero_case_fraction() const {
  const std::size_t ok = replicates - errors;
  return ok ? static_cast<double>(zero_case) / static_cast<double>(ok) : 0.0;
}

const DesignMetrics* MetricSet::find(const std::string& design) const {
  for (const auto& d : designs) {
    if (d.design == design) return &d;
  }
  return nullptr;
}

bool MetricSet::failed() const {
  return std::any_of(designs.begin(), designs.end(), [](const DesignMetrics& d) { return d.failed; });
}

DesignOutcome traditional_benchmark_draw(const SequentialFrame& areas, int m, Rng& rng) {
  const std::size_t M = areas.size();
  if (m < 1 || static_cast<std::size_t>(m) > M) throw ConfigError("m must lie in [1, M]");
  // Partial Fisher-Yates, then restore frame order so outcomes read like the other designs.
  std::vector<std::size_t> idx(M);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
    const std::size_t j = i + uniform_below(rng, M - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(m));
  std::sort(idx.begin(), idx.end());

  DesignOutcome out;
  out.rule_id = "benchmark";
  out.frame_size = M;
  out.population_size = areas.population_size;
  const double p = static_cast<double>(m) / static_cast<double>(M);
  for (std::size_t t : idx) {
    SampledUnit u;
    u.position = t;
    u.id = areas.ids[t];
    u.y = areas.values[t];
    u.size = areas.sizes[t];
    u.draw_prob = p;
    out.sample.push_back(u);
  }
  return out;
}

DesignOutcome traditional_benchmark_draw(const Population& pop, int m, Rng& rng) {
  return traditional_benchmark_draw(area_frame(pop), m, rng);
}

PreparedScenario prepare_scenario(const ScenarioConfig& config) {
  PreparedScenario s;
  s.config = config;
  if (config.population_file) {
    s.population = read_population(*config.population_file);
  } else {
    s.population = generate_clustered_population(config.population).population;
  }
  s.areas = area_frame(s.population);
  const double prevalence = s.population.mean();
  if (!(prevalence > 0.0)) throw ConfigError("scenario population has no cases");
  s.k = compute_k(s.population);

  const auto [min_size, max_size] = std::minmax_element(s.areas.sizes.begin(), s.areas.sizes.end());
  if (config.m) {
    s.m = *config.m;
  } else {
    if (*max_size - *min_size > 1.0) throw ConfigError("the sample size calculator needs equal-sized areas");
    WhoInputs in;
    in.prevalence = config.prevalence_guess.value_or(prevalence);
    in.precision = config.precision;
    in.k = config.planning_k.value_or(s.k);
    in.area_size = s.population_size_per_area();
    in.z = config.z;
    s.who = who_sample_size(in);
    s.m = s.who.m;
  }
  const int M = static_cast<int>(s.areas.size());
  if (s.m < 1 || s.m > M) {
    throw ConfigError("benchmark needs " + std::to_string(s.m) + " areas but the population has " +
                      std::to_string(M) + "; pin m or relax the precision");
  }
  s.n_min_areas = std::max(1, static_cast<int>(std::lround(config.n_min_ratio * s.m)));
  if (s.n_min_areas > M) throw ConfigError("n_min exceeds the number of areas");
  return s;
}

double PreparedScenario::population_size_per_area() const {
  return areas.population_size / static_cast<double>(areas.size());
}

ReplicateRecord run_replicate(const PreparedScenario& s, const std::string& design, std::size_t replicate) {
  ReplicateRecord rec;
  rec.design = design;
  rec.replicate = replicate;
  const std::uint64_t seed = derive_seed(s.config.seed, design, replicate);
  const std::size_t M = s.areas.size();
  const double prevalence = s.population.mean();
  try {
    DesignOutcome out;
    if (design == "benchmark") {
      Rng rng(seed);
      out = traditional_benchmark_draw(s.areas, s.m, rng);
      rec.estimate = out.sampled_total() / out.sampled_size();
    } else {
      const bool cposa = design == "cposa";
      const double target = cposa ? s.n_min_areas : s.m;
      std::vector<double> initial(M, target / static_cast<double>(M));
      std::vector<double> cutoffs(M, s.config.threshold.value_or(prevalence));
      const RulePtr rule = area_threshold_rule(s.areas, std::move(cutoffs),
                                               cposa ? DesignKind::kCposa : DesignKind::kPosa, target);
      EngineOptions opts;
      opts.policy = s.config.range_policy;
      out = run_sequential(s.areas, initial, *rule, seed, opts);
      rec.estimate = ht_mean_estimate(out);
    }
    rec.areas = out.realized_n();
    rec.individuals = out.sampled_size();
    rec.cases = out.sampled_total();
    rec.cost = s.config.cost.cost(rec.areas, rec.individuals, is_sequential(design));
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

std::vector<ReplicateRecord> run_replicates(const PreparedScenario& s, const RunOptions& options) {
  const std::size_t R = s.config.replicates;
  std::map<std::pair<std::string, std::size_t>, ReplicateRecord> done;
  if (options.checkpoint && std::filesystem::exists(*options.checkpoint)) {
    for (auto& r : read_records(*options.checkpoint)) {
      if (r.replicate < R) done[{r.design, r.replicate}] = std::move(r);
    }
  }
  std::ofstream ck;
  if (options.checkpoint) {
    const bool fresh = !std::filesystem::exists(*options.checkpoint);
    ck.open(*options.checkpoint, std::ios::app);
    if (!ck) throw ConfigError("cannot write checkpoint " + *options.checkpoint);
    if (fresh) ck << records_csv_header();
  }

  const unsigned jobs = std::max(1u, options.jobs);
  for (const auto& design : s.config.designs) {
    std::vector<std::size_t> todo;
    for (std::size_t r = 0; r < R; ++r) {
      if (!done.count({design, r})) todo.push_back(r);
    }
    for (std::size_t begin = 0; begin < todo.size(); begin += options.chunk) {
      const std::size_t end = std::min(todo.size(), begin + options.chunk);
      std::vector<ReplicateRecord> chunk(end - begin);
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (std::size_t i = next++; i < chunk.size(); i = next++) chunk[i] = run_replicate(s, design, todo[begin + i]);
      };
      std::vector<std::thread> pool;
      for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
      worker();
      for (auto& th : pool) th.join();
      for (auto& rec : chunk) {
        if (ck) ck << record_csv_row(rec);
        done[{design, rec.replicate}] = std::move(rec);
      }
      if (ck) ck.flush();
      if (options.verbose) {
        std::cerr << s.config.name << " " << design << ": " << (R - todo.size() + end) << "/" << R << "\n";
      }
    }
  }

  std::vector<ReplicateRecord> out;
  out.reserve(done.size());
  for (const auto& design : s.config.designs) {
    for (std::size_t r = 0; r < R; ++r) out.push_back(done.at({design, r}));
  }
  return out;
}

MetricSet aggregate(const PreparedScenario& s, const std::vector<ReplicateRecord>& records) {
  MetricSet set;
  set.scenario = s.config.name;
  set.k = s.k;
  set.prevalence = s.population.mean();
  set.N = s.population.size();
  set.M = s.population.area_count();
  set.m = s.m;
  set.n_min_areas = s.n_min_areas;
  set.who = s.who;
  const double truth = set.prevalence;

  for (const auto& design : s.config.designs) {
    DesignMetrics d;
    d.design = design;
    Moments size, areas, sq_err, err, det, cpc, cost;
    d.min_areas = std::numeric_limits<std::size_t>::max();
    d.min_size = std::numeric_limits<double>::infinity();
    d.max_size = 0.0;
    for (const auto& r : records) {
      if (r.design != design) continue;
      ++d.replicates;
      if (!r.ok) {
        if (d.errors++ == 0) d.first_error = r.error;
        continue;
      }
      size.add(r.individuals);
      areas.add(static_cast<double>(r.areas));
      d.min_areas = std::min(d.min_areas, r.areas);
      d.min_size = std::min(d.min_size, r.individuals);
      d.max_size = std::max(d.max_size, r.individuals);
      err.add(r.estimate - truth);
      sq_err.add((r.estimate - truth) * (r.estimate - truth));
      cost.add(r.cost);
      if (r.individuals > 0.0) {
        det.add(detection_rate(r.cases, r.individuals));
      } else {
        ++d.empty_samples;
      }
      if (r.cases > 0.0) {
        cpc.add(r.cost / r.cases);
      } else {
        ++d.zero_case;
      }
    }
    if (d.min_areas == std::numeric_limits<std::size_t>::max()) d.min_areas = 0;
    if (!std::isfinite(d.min_size)) d.min_size = 0.0;
    d.mean_size = size.mean();
    d.sd_size = std::sqrt(size.var());
    d.se_size = size.se();
    d.mean_areas = areas.mean();
    d.bias = err.mean();
    d.rmse = std::sqrt(sq_err.mean());
    d.se_rmse = d.rmse > 0.0 ? sq_err.se() / (2.0 * d.rmse) : 0.0;
    d.detection = det.mean();
    d.se_detection = det.se();
    d.cost_per_case = cpc.mean();
    d.se_cost_per_case = cpc.se();
    d.mean_cost = cost.mean();
    d.failed = d.replicates == 0 ||
               static_cast<double>(d.errors) > s.config.max_error_fraction * static_cast<double>(d.replicates);
    set.designs.push_back(std::move(d));
  }
  return set;
}

MetricSet run_monte_carlo(const ScenarioConfig& config, const RunOptions& options) {
  const PreparedScenario s = prepare_scenario(config);
  return aggregate(s, run_replicates(s, options));
}

std::vector<RatioRow> ratio_report(const std::vector<MetricSet>& sets, const std::string& benchmark) {
  std::vector<RatioRow> rows;
  for (const auto& set : sets) {
    const DesignMetrics* b = set.find(benchmark);
    if (!b) throw ConfigError("scenario " + set.scenario + " has no " + benchmark + " results");
    for (const auto& d : set.designs) {
      auto add = [&](const char* metric, double v, double se_v, double bv, double se_bv) {
        RatioRow r;
        r.scenario = set.scenario;
        r.k = set.k;
        r.design = d.design;
        r.metric = metric;
        r.value = v;
        r.benchmark = bv;
        r.ratio = bv != 0.0 ? v / bv : std::numeric_limits<double>::quiet_NaN();
        // Delta method; the designs use independent random streams.
        const double rel = (v != 0.0 ? se_v * se_v / (v * v) : 0.0) + (bv != 0.0 ? se_bv * se_bv / (bv * bv) : 0.0);
        r.ratio_se = std::abs(r.ratio) * std::sqrt(rel);
        if (&d == b) r.ratio_se = 0.0;
        rows.push_back(r);
      };
      add("sample_size", d.mean_size, d.se_size, b->mean_size, b->se_size);
      add("rmse", d.rmse, d.se_rmse, b->rmse, b->se_rmse);
      add("detection_rate", d.detection, d.se_detection, b->detection, b->se_detection);
      add("cost_per_case", d.cost_per_case, d.se_cost_per_case, b->cost_per_case, b->se_cost_per_case);
    }
  }
  return rows;
}

}  // namespace posa

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "posa/design.hpp"
#include "posa/estimation.hpp"
#include "posa/oracle.hpp"
#include "posa/population.hpp"
#include "posa/presets.hpp"
#include "posa/serialize.hpp"
#include "posa/simulation.hpp"
#include "posa/verify.hpp"

namespace fs = std::filesystem;
using namespace posa;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  int verbosity = 0;
};

fs::path output_dir(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("POSA_OUT"); env && *env) return env;
  return "posa-out";
}

nlohmann::json load_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

nlohmann::json config_or_preset(const Common& c) {
  if (!c.config.empty() && !c.preset.empty()) throw CLI::ValidationError("use either --config or --preset");
  if (!c.config.empty()) return load_json_file(c.config);
  if (!c.preset.empty()) return load_preset(c.preset);
  throw CLI::ValidationError("--config or --preset is required");
}

ClusterSpec cluster_spec_from(const nlohmann::json& j) {
  ScenarioConfig holder = scenario_from_json(nlohmann::json{{"population", j}});
  return holder.population;
}

void say(const Common& c, const std::string& msg) {
  if (c.verbosity >= 0) std::cout << msg << "\n";
}

// gen-pop ---------------------------------------------------------------

int cmd_gen_pop(const Common& c) {
  ClusterSpec spec = cluster_spec_from(config_or_preset(c));
  if (c.seed) spec.seed = *c.seed;
  const GeneratedPopulation g = generate_clustered_population(spec);
  const fs::path dir = output_dir(c);
  write_population(g.population, dir / "population");
  PopulationSummary s = summarize(g.population);
  s.clustered_fraction = g.clustered_fraction;
  auto j = summary_json(s);
  j["generator_iterations"] = g.iterations;
  j["cluster_areas"] = g.cluster_areas;
  write_text(dir / "summary.json", j.dump(2) + "\n");
  char line[160];
  if (s.k) {
    std::snprintf(line, sizeof line, "N=%zu M=%d cases=%zu prevalence=%.6g k=%.4f clustered_fraction=%.4f", s.N, s.M,
                  s.cases, s.prevalence, *s.k, s.clustered_fraction);
  } else {
    std::snprintf(line, sizeof line, "N=%zu M=%d cases=0 k=undefined", s.N, s.M);
  }
  say(c, line);
  say(c, "wrote " + (dir / "population.csv").string());
  return 0;
}

// run-design ------------------------------------------------------------

struct DesignArgs {
  std::string population;
  std::string y;
  std::string design = "posa";
  std::string level = "unit";
  double pi0 = -1.0;
  double expected_n = -1.0;
  double n_min = 0.0;
  std::optional<double> threshold;
  std::string policy = "error";
  bool explain = false;
  bool exact = false;
};

std::vector<std::uint8_t> parse_y(const std::string& s) {
  std::vector<std::uint8_t> y;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok != "0" && tok != "1") throw CLI::ValidationError("--y takes a comma-separated list of 0/1");
    y.push_back(tok == "1");
  }
  if (y.empty()) throw CLI::ValidationError("--y is empty");
  return y;
}

int cmd_run_design(const Common& c, const DesignArgs& a) {
  Population pop;
  if (!a.y.empty()) {
    pop = make_line_population(parse_y(a.y));
  } else if (!a.population.empty()) {
    pop = read_population(a.population);
  } else {
    ClusterSpec spec = cluster_spec_from(config_or_preset(c));
    if (c.seed) spec.seed = *c.seed;
    pop = generate_clustered_population(spec).population;
  }

  const DesignKind kind = design_kind_from_string(a.design);
  const bool area = a.level == "area";
  const SequentialFrame frame = area ? area_frame(pop) : unit_frame(pop);
  const double n = static_cast<double>(frame.size());

  double target = 0.0;
  if (kind == DesignKind::kCposa) {
    if (!(a.n_min >= 1.0)) throw CLI::ValidationError("cposa needs --n-min >= 1");
    target = a.n_min;
  } else if (a.pi0 >= 0.0) {
    target = a.pi0 * n;
  } else if (a.expected_n >= 0.0) {
    target = a.expected_n;
  } else {
    throw CLI::ValidationError("give --pi0 or --n");
  }
  const std::vector<double> initial(frame.size(), target / n);

  RulePtr rule;
  if (area && kind != DesignKind::kPoisson) {
    std::vector<double> cutoffs(frame.size(), a.threshold.value_or(pop.mean()));
    rule = area_threshold_rule(frame, std::move(cutoffs), kind, a.n_min);
  } else {
    rule = make_rule(kind, a.n_min);
  }

  EngineOptions opts;
  opts.policy = a.policy == "clamp" ? RangePolicy::kClamp : RangePolicy::kError;
  opts.record_trace = true;
  const std::uint64_t seed = c.seed.value_or(1);
  const DesignOutcome out = run_sequential(frame, initial, *rule, seed, opts);

  EstimateReport rep = estimate(out);
  if (a.exact) {
    switch (kind) {
      case DesignKind::kPoisson: rep.exact_variance = poisson_exact_variance(frame, initial); break;
      case DesignKind::kPosa: rep.exact_variance = posa_exact_variance(frame, initial, *rule); break;
      case DesignKind::kCposa: {
        const auto dist = enumerate_design(frame, initial, *rule, opts.policy);
        rep.exact_variance = exact_variance_on_paths(dist, *rule);
        break;
      }
    }
  }

  const fs::path dir = output_dir(c);
  write_text(dir / "outcome.json", outcome_json(out).dump(2) + "\n");
  write_text(dir / "trace.csv", trace_csv(out));
  write_text(dir / "estimate.json", estimate_json(rep).dump(2) + "\n");
  if (a.explain) write_text(dir / "explain.csv", explain_csv(explain_terms(out)));

  char line[200];
  std::snprintf(line, sizeof line, "%s: n=%zu estimate=%.6g variance_estimate=%.6g", out.rule_id.c_str(),
                out.realized_n(), rep.point, rep.variance_estimate);
  say(c, line);
  return 0;
}

// verify ----------------------------------------------------------------

struct VerifyArgs {
  std::size_t max_n = 10;
  std::vector<std::string> designs;
  bool corrupt = false;
  std::string policy = "clamp";
  bool dump_paths = false;
};

int cmd_verify(const Common& c, const VerifyArgs& a) {
  VerifyOptions o;
  o.max_n = a.max_n;
  o.corrupt = a.corrupt;
  o.cposa_policy = a.policy == "error" ? RangePolicy::kError : RangePolicy::kClamp;
  if (!a.designs.empty()) {
    o.designs.clear();
    for (const auto& d : a.designs) o.designs.push_back(design_kind_from_string(d));
  }
  const VerifyReport report = run_verify(o);
  const fs::path dir = output_dir(c);
  write_text(dir / "verify.json", report_json(report));
  if (a.dump_paths) {
    for (const auto& fx : default_battery(a.max_n)) {
      for (DesignKind k : o.designs) {
        const bool cp = k == DesignKind::kCposa;
        RulePtr rule = cp ? cposa_rule(fx.n_min) : (a.corrupt && k == DesignKind::kPosa ? corrupted_posa_rule() : make_rule(k));
        const auto dist = enumerate_design(fx.frame, cp ? fx.cposa_initial : fx.initial, *rule,
                                           cp ? o.cposa_policy : RangePolicy::kError);
        write_text(dir / "paths" / (fx.name + "-" + rule->id() + ".csv"), path_distribution_csv(dist));
      }
    }
  }
  if (c.verbosity >= 0) std::cout << report_text(report);
  return report.all_pass() ? 0 : kExitFailure;
}

// simulate --------------------------------------------------------------

struct SimulateArgs {
  std::optional<std::size_t> replicates;
  bool fresh = false;
};

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  std::vector<ScenarioConfig> study = study_from_json(config_or_preset(c));
  for (auto& s : study) {
    if (c.seed) s.seed = *c.seed;
    if (a.replicates) s.replicates = *a.replicates;
  }
  const fs::path dir = output_dir(c);
  const fs::path ck = dir / "checkpoints";
  if (a.fresh) fs::remove_all(ck);
  fs::create_directories(ck);

  std::vector<MetricSet> sets;
  for (const auto& s : study) {
    RunOptions ro;
    ro.jobs = c.jobs;
    ro.verbose = c.verbosity > 0;
    const std::string tag = s.name + "-" + std::to_string(s.seed) + "-" + std::to_string(s.replicates);
    ro.checkpoint = (ck / (tag + ".csv")).string();
    const PreparedScenario p = prepare_scenario(s);
    sets.push_back(aggregate(p, run_replicates(p, ro)));
    const MetricSet& m = sets.back();
    char line[200];
    std::snprintf(line, sizeof line, "%s: k=%.3f m=%d n_min=%d%s", m.scenario.c_str(), m.k, m.m, m.n_min_areas,
                  m.failed() ? " FAILED" : "");
    say(c, line);
    for (const auto& d : m.designs) {
      if (d.failed) say(c, "  " + d.design + ": " + std::to_string(d.errors) + " replicate errors; first: " + d.first_error);
    }
  }
  const auto ratios = ratio_report(sets);
  write_text(dir / "results.csv", results_csv(sets, ratios));
  write_text(dir / "summary.json", results_json(sets).dump(2) + "\n");
  write_text(dir / "ratios.csv", ratio_table_csv(ratios));
  say(c, "wrote " + (dir / "results.csv").string());
  const bool failed = std::any_of(sets.begin(), sets.end(), [](const MetricSet& m) { return m.failed(); });
  return failed ? kExitFailure : 0;
}

// report ----------------------------------------------------------------

int cmd_report(const Common& c, const std::vector<std::string>& inputs) {
  std::vector<MetricSet> sets;
  for (const auto& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "summary.json";
    auto more = metric_sets_from_json(load_json_file(p.string()));
    sets.insert(sets.end(), more.begin(), more.end());
  }
  const auto rows = ratio_report(sets);
  const std::string csv = ratio_table_csv(rows);
  if (!c.out.empty()) {
    write_text(fs::path(c.out) / "ratios.csv", csv);
  }
  if (c.verbosity >= 0) {
    std::printf("%-10s %6s %-10s %-15s %10s %8s\n", "scenario", "k", "design", "metric", "ratio", "se");
    for (const auto& r : rows) {
      if (r.design == "benchmark") continue;
      std::printf("%-10s %6.2f %-10s %-15s %10.3f %8.3f\n", r.scenario.c_str(), r.k, r.design.c_str(),
                  r.metric.c_str(), r.ratio, r.ratio_se);
    }
  }
  return 0;
}

void add_common(CLI::App* app, Common& c, bool config = true) {
  if (config) {
    app->add_option("--config", c.config, "JSON config file");
    app->add_option("--preset", c.preset, "named preset from the presets directory");
  }
  app->add_option("--out", c.out, "output directory (default $POSA_OUT or ./posa-out)");
  app->add_option("--seed", c.seed, "seed override");
  app->add_option("--jobs", c.jobs, "worker threads")->check(CLI::Range(1u, 1024u));
  app->add_flag("-v,--verbose", [&c](std::int64_t n) { c.verbosity += static_cast<int>(n); }, "more output");
  app->add_flag("-q,--quiet", [&c](std::int64_t) { c.verbosity = -1; }, "no output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"List-sequential adaptive survey sampling: designs, exact oracle and Monte Carlo comparison"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-pop", "generate a clustered population");
  add_common(gen, common);

  DesignArgs da;
  auto* run = app.add_subcommand("run-design", "draw one sample and estimate");
  add_common(run, common);
  run->add_option("--population", da.population, "population stem or .csv written by gen-pop");
  run->add_option("--y", da.y, "toy population as 0/1 list, e.g. 1,0,1");
  run->add_option("--design", da.design, "poisson, posa or cposa")
      ->check(CLI::IsMember({"poisson", "posa", "cposa"}));
  run->add_option("--level", da.level, "unit or area")->check(CLI::IsMember({"unit", "area"}));
  run->add_option("--pi0", da.pi0, "equal initial probability")->check(CLI::Range(0.0, 1.0));
  run->add_option("--n", da.expected_n, "expected sample size (sets equal initial probabilities)");
  run->add_option("--n-min", da.n_min, "CPoSA minimum sample size");
  run->add_option("--threshold", da.threshold, "area prevalence cutoff (default: true prevalence)");
  run->add_option("--policy", da.policy, "out-of-range probabilities: error or clamp")
      ->check(CLI::IsMember({"error", "clamp"}));
  run->add_flag("--explain", da.explain, "write every estimator term to explain.csv");
  run->add_flag("--exact", da.exact, "also compute the exact design variance");

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "exhaustive-enumeration checks of moments and estimators");
  add_common(ver, common, false);
  ver->add_option("--max-n", va.max_n, "largest fixture size")
      ->check(CLI::Range(std::size_t{3}, kMaxEnumerationSize));
  ver->add_option("--designs", va.designs, "subset of poisson,posa,cposa")->delimiter(',');
  ver->add_flag("--corrupt", va.corrupt, "negative control: replace PoSA by a broken rule");
  ver->add_option("--policy", va.policy, "CPoSA out-of-range handling: error or clamp")
      ->check(CLI::IsMember({"error", "clamp"}));
  ver->add_flag("--dump-paths", va.dump_paths, "write each path distribution to CSV");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo comparison against the two-stage benchmark");
  add_common(sim, common);
  sim->add_option("--replicates", sa.replicates, "replicate override")->check(CLI::PositiveNumber);
  sim->add_flag("--fresh", sa.fresh, "discard checkpoints instead of resuming");

  std::vector<std::string> inputs;
  auto* rep = app.add_subcommand("report", "ratio tables from simulate output");
  add_common(rep, common, false);
  rep->add_option("inputs", inputs, "summary.json files or simulate output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_pop(common);
    if (*run) return cmd_run_design(common, da);
    if (*ver) return cmd_verify(common, va);
    if (*sim) return cmd_simulate(common, sa);
    if (*rep) return cmd_report(common, inputs);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

#include "posa/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace posa {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  }
  return s;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number: " + s);
  return v;
}

std::size_t parse_size(const std::string& s) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad integer: " + s);
  return static_cast<std::size_t>(v);
}

nlohmann::ordered_json metrics_json(const DesignMetrics& d) {
  nlohmann::ordered_json j;
  j["design"] = d.design;
  j["replicates"] = d.replicates;
  j["errors"] = d.errors;
  if (!d.first_error.empty()) j["first_error"] = d.first_error;
  j["failed"] = d.failed;
  j["zero_case"] = d.zero_case;
  j["zero_case_fraction"] = d.zero_case_fraction();
  j["empty_samples"] = d.empty_samples;
  j["mean_areas"] = d.mean_areas;
  j["min_areas"] = d.min_areas;
  j["mean_size"] = d.mean_size;
  j["sd_size"] = d.sd_size;
  j["se_size"] = d.se_size;
  j["min_size"] = d.min_size;
  j["max_size"] = d.max_size;
  j["bias"] = d.bias;
  j["rmse"] = d.rmse;
  j["se_rmse"] = d.se_rmse;
  j["detection_rate"] = d.detection;
  j["se_detection_rate"] = d.se_detection;
  j["cost_per_case"] = d.cost_per_case;
  j["se_cost_per_case"] = d.se_cost_per_case;
  j["mean_cost"] = d.mean_cost;
  return j;
}

DesignMetrics metrics_from_json(const nlohmann::json& j) {
  DesignMetrics d;
  d.design = j.at("design").get<std::string>();
  d.replicates = j.at("replicates").get<std::size_t>();
  d.errors = j.at("errors").get<std::size_t>();
  d.first_error = j.value("first_error", std::string());
  d.failed = j.at("failed").get<bool>();
  d.zero_case = j.at("zero_case").get<std::size_t>();
  d.empty_samples = j.at("empty_samples").get<std::size_t>();
  d.mean_areas = j.at("mean_areas").get<double>();
  d.min_areas = j.at("min_areas").get<std::size_t>();
  d.mean_size = j.at("mean_size").get<double>();
  d.sd_size = j.at("sd_size").get<double>();
  d.se_size = j.at("se_size").get<double>();
  d.min_size = j.at("min_size").get<double>();
  d.max_size = j.at("max_size").get<double>();
  d.bias = j.at("bias").get<double>();
  d.rmse = j.at("rmse").get<double>();
  d.se_rmse = j.at("se_rmse").get<double>();
  d.detection = j.at("detection_rate").get<double>();
  d.se_detection = j.at("se_detection_rate").get<double>();
  d.cost_per_case = j.at("cost_per_case").get<double>();
  d.se_cost_per_case = j.at("se_cost_per_case").get<double>();
  d.mean_cost = j.at("mean_cost").get<double>();
  return d;
}

}  // namespace

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::ordered_json population_header(const Population& pop) {
  nlohmann::ordered_json j;
  j["N"] = pop.size();
  j["M"] = pop.area_count();
  j["grid"] = {pop.grid.rows, pop.grid.cols};
  j["order_rule"] = to_string(pop.order_rule);
  j["seed"] = pop.seed;
  j["cases"] = pop.case_count();
  return j;
}

std::string population_csv(const Population& pop) {
  std::string out = "unit_id,area_id,y\n";
  out.reserve(out.size() + pop.size() * 14);
  char buf[64];
  for (std::size_t u = 0; u < pop.size(); ++u) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%d\n", u, pop.area_of[u], int(pop.y[u]));
    out += buf;
  }
  return out;
}

void write_population(const Population& pop, const std::filesystem::path& stem) {
  write_text(std::filesystem::path(stem).concat(".csv"), population_csv(pop));
  write_text(std::filesystem::path(stem).concat(".json"), population_header(pop).dump(2) + "\n");
}

Population read_population(const std::filesystem::path& path) {
  std::filesystem::path stem = path;
  if (stem.extension() == ".csv" || stem.extension() == ".json") stem.replace_extension();
  const auto header = nlohmann::json::parse(read_text(std::filesystem::path(stem).concat(".json")));
  std::istringstream csv(read_text(std::filesystem::path(stem).concat(".csv")));

  Population pop;
  pop.grid = GridDims{header.at("grid").at(0).get<int>(), header.at("grid").at(1).get<int>()};
  pop.order_rule = order_rule_from_string(header.at("order_rule").get<std::string>());
  pop.seed = header.at("seed").get<std::uint64_t>();
  const std::size_t n = header.at("N").get<std::size_t>();
  pop.y.resize(n);
  pop.area_of.resize(n);

  std::string line;
  std::getline(csv, line);
  if (line != "unit_id,area_id,y") throw PopulationError("population CSV has an unexpected header: " + line);
  std::vector<bool> seen(n, false);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw PopulationError("bad population row: " + line);
    const std::size_t u = parse_size(f[0]);
    if (u >= n || seen[u]) throw PopulationError("bad or repeated unit id: " + f[0]);
    seen[u] = true;
    pop.area_of[u] = static_cast<int>(parse_size(f[1]));
    const std::size_t y = parse_size(f[2]);
    if (y > 1) throw PopulationError("y must be 0 or 1: " + line);
    pop.y[u] = static_cast<std::uint8_t>(y);
  }
  for (std::size_t u = 0; u < n; ++u) {
    if (!seen[u]) throw PopulationError("population CSV lacks unit " + std::to_string(u));
  }
  apply_order_rule(pop);
  validate(pop);
  return pop;
}

nlohmann::ordered_json summary_json(const PopulationSummary& s) {
  nlohmann::ordered_json j;
  j["N"] = s.N;
  j["M"] = s.M;
  j["cases"] = s.cases;
  j["prevalence"] = s.prevalence;
  if (s.k) {
    j["k"] = *s.k;
    j["k_defined"] = true;
  } else {
    j["k"] = nullptr;
    j["k_defined"] = false;
  }
  j["clustered_fraction"] = s.clustered_fraction;
  j["area_prevalences"] = s.area_prevalences;
  return j;
}

nlohmann::ordered_json outcome_json(const DesignOutcome& o) {
  nlohmann::ordered_json j;
  j["rule"] = o.rule_id;
  j["seed"] = o.seed;
  j["frame_size"] = o.frame_size;
  j["population_size"] = o.population_size;
  j["realized_n"] = o.realized_n();
  auto& ids = j["sample"] = nlohmann::ordered_json::array();
  auto& probs = j["draw_probs"] = nlohmann::ordered_json::array();
  for (const auto& u : o.sample) {
    ids.push_back(u.id);
    probs.push_back(u.draw_prob);
  }
  return j;
}

std::string trace_csv(const DesignOutcome& o) {
  std::string out = "step,unit,prob_in_force,s_i,y_i_if_observed\n";
  for (const auto& r : o.trace) {
    out += std::to_string(r.position + 1) + "," + std::to_string(r.id) + "," + fmt_double(r.prob_in_force) + "," +
           (r.selected ? "1" : "0") + "," + (r.observed ? fmt_double(*r.observed) : "") + "\n";
  }
  return out;
}

nlohmann::ordered_json estimate_json(const EstimateReport& r) {
  nlohmann::ordered_json j;
  j["design"] = r.design_id;
  j["point"] = r.point;
  j["variance_estimate"] = r.variance_estimate;
  if (r.exact_variance) {
    j["exact_variance"] = *r.exact_variance;
  } else {
    j["exact_variance"] = nullptr;
  }
  j["realized_n"] = r.realized_n;
  j["population_size"] = r.population_size;
  return j;
}

std::string explain_csv(const std::vector<ExplainTerm>& terms) {
  std::string out = "term,step,unit,y,draw_prob,value\n";
  for (const auto& t : terms) {
    out += t.term + "," + std::to_string(t.position + 1) + "," + std::to_string(t.id) + "," + fmt_double(t.y) + "," +
           fmt_double(t.draw_prob) + "," + fmt_double(t.value) + "\n";
  }
  return out;
}

std::string path_distribution_csv(const PathDistribution& dist) {
  std::string out = "path,probability,realized_n";
  for (std::size_t t = 0; t < dist.size(); ++t) out += ",p" + std::to_string(t + 1);
  out += "\n";
  for (const auto& p : dist.paths) {
    for (auto s : p.smi) out.push_back(s ? '1' : '0');
    out += "," + fmt_double(p.probability) + "," + std::to_string(p.outcome.realized_n());
    for (const auto& r : p.outcome.trace) out += "," + fmt_double(r.prob_in_force);
    out += "\n";
  }
  return out;
}

std::string records_csv_header() { return "design,replicate,ok,areas,individuals,cases,estimate,cost,error\n"; }

std::string record_csv_row(const ReplicateRecord& r) {
  return r.design + "," + std::to_string(r.replicate) + "," + (r.ok ? "1" : "0") + "," + std::to_string(r.areas) +
         "," + fmt_double(r.individuals) + "," + fmt_double(r.cases) + "," + fmt_double(r.estimate) + "," +
         fmt_double(r.cost) + "," + sanitize(r.error) + "\n";
}

std::vector<ReplicateRecord> read_records(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<ReplicateRecord> out;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      if (line + "\n" == records_csv_header()) continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    // A torn last line from an interrupted run is dropped and recomputed.
    if (f.size() != 9) continue;
    try {
      ReplicateRecord r;
      r.design = f[0];
      r.replicate = parse_size(f[1]);
      r.ok = f[2] == "1";
      r.areas = parse_size(f[3]);
      r.individuals = parse_double(f[4]);
      r.cases = parse_double(f[5]);
      r.estimate = parse_double(f[6]);
      r.cost = parse_double(f[7]);
      r.error = f[8];
      out.push_back(std::move(r));
    } catch (const std::exception&) {
      continue;
    }
  }
  return out;
}

std::string results_csv(const std::vector<MetricSet>& sets, const std::vector<RatioRow>& ratios) {
  std::string out = "scenario,k,design,metric,value,ratio,ratio_se\n";
  for (const auto& r : ratios) {
    out += r.scenario + "," + fmt_double(r.k) + "," + r.design + "," + r.metric + "," + fmt_double(r.value) + "," +
           fmt_double(r.ratio) + "," + fmt_double(r.ratio_se) + "\n";
  }
  for (const auto& s : sets) {
    for (const auto& d : s.designs) {
      auto row = [&](const char* metric, double v) {
        out += s.scenario + "," + fmt_double(s.k) + "," + d.design + "," + metric + "," + fmt_double(v) + ",,\n";
      };
      row("zero_case_fraction", d.zero_case_fraction());
      row("errors", static_cast<double>(d.errors));
      row("mean_areas", d.mean_areas);
      row("min_areas", static_cast<double>(d.min_areas));
    }
  }
  return out;
}

nlohmann::ordered_json results_json(const std::vector<MetricSet>& sets) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& s : sets) {
    nlohmann::ordered_json e;
    e["scenario"] = s.scenario;
    e["k"] = s.k;
    e["prevalence"] = s.prevalence;
    e["N"] = s.N;
    e["M"] = s.M;
    e["m"] = s.m;
    e["n_min_areas"] = s.n_min_areas;
    e["who"] = {{"n", s.who.n}, {"rho", s.who.rho}, {"deff", s.who.deff}, {"m", s.who.m}};
    e["failed"] = s.failed();
    auto& designs = e["designs"] = nlohmann::ordered_json::array();
    for (const auto& d : s.designs) designs.push_back(metrics_json(d));
    j.push_back(std::move(e));
  }
  return j;
}

std::vector<MetricSet> metric_sets_from_json(const nlohmann::json& j) {
  std::vector<MetricSet> out;
  const auto& arr = j.contains("scenarios") ? j.at("scenarios") : j;
  for (const auto& e : arr) {
    MetricSet s;
    s.scenario = e.at("scenario").get<std::string>();
    s.k = e.at("k").get<double>();
    s.prevalence = e.at("prevalence").get<double>();
    s.N = e.at("N").get<std::size_t>();
    s.M = e.at("M").get<int>();
    s.m = e.at("m").get<int>();
    s.n_min_areas = e.at("n_min_areas").get<int>();
    const auto& w = e.at("who");
    s.who = {w.at("n").get<double>(), w.at("rho").get<double>(), w.at("deff").get<double>(), w.at("m").get<int>()};
    for (const auto& d : e.at("designs")) s.designs.push_back(metrics_from_json(d));
    out.push_back(std::move(s));
  }
  return out;
}

std::string ratio_table_csv(const std::vector<RatioRow>& rows) {
  std::string out = "scenario,k,design,metric,value,benchmark,ratio,ratio_se\n";
  for (const auto& r : rows) {
    out += r.scenario + "," + fmt_double(r.k) + "," + r.design + "," + r.metric + "," + fmt_double(r.value) + "," +
           fmt_double(r.benchmark) + "," + fmt_double(r.ratio) + "," + fmt_double(r.ratio_se) + "\n";
  }
  return out;
}

}  // namespace posa

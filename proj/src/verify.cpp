#include "posa/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "posa/estimation.hpp"
#include "posa/numeric.hpp"
#include "posa/oracle.hpp"

namespace posa {

namespace {

constexpr double kProbTol = 1e-12;
constexpr double kMeanTol = 1e-12;
constexpr double kVarTol = 1e-10;
constexpr double kMomentTol = 1e-12;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// Accumulates one check over the battery.
struct Tally {
  CheckResult r;
  Tally(std::string check, std::string design, double tol) {
    r.check = std::move(check);
    r.design = std::move(design);
    r.tolerance = tol;
  }
  void observe(const std::string& fixture, double deviation) {
    ++r.fixtures;
    if (!(deviation <= r.tolerance)) ++r.failures;
    if (r.worst_fixture.empty() || !(deviation <= r.max_deviation)) {
      r.max_deviation = std::isnan(deviation) ? std::numeric_limits<double>::infinity()
                                              : std::max(r.max_deviation, deviation);
      r.worst_fixture = fixture;
    }
  }
  void fail(const std::string& fixture, const std::string& why) {
    ++r.fixtures;
    ++r.failures;
    r.max_deviation = std::numeric_limits<double>::infinity();
    if (r.note.empty()) {
      r.worst_fixture = fixture;
      r.note = why;
    }
  }
};

std::string design_name(DesignKind kind, bool corrupt) {
  if (corrupt && kind == DesignKind::kPosa) return "posa-corrupt";
  return to_string(kind);
}

bool path_has_positivity_gap(const EnumeratedPath& path, const SequentialFrame& frame) {
  for (std::size_t t = 0; t < frame.size(); ++t) {
    if (frame.values[t] != 0.0 && path.outcome.trace[t].prob_in_force == 0.0) return true;
  }
  return false;
}

}  // namespace

double Fixture::mean() const {
  return std::accumulate(frame.values.begin(), frame.values.end(), 0.0) / frame.population_size;
}

Fixture make_fixture(std::string name, std::vector<double> y, std::vector<double> initial) {
  Fixture f;
  f.name = std::move(name);
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) f.frame.ids.push_back(i);
  f.frame.values = std::move(y);
  f.frame.sizes.assign(n, 1.0);
  f.frame.population_size = static_cast<double>(n);
  f.initial = std::move(initial);
  const double sum = std::accumulate(f.initial.begin(), f.initial.end(), 0.0);
  f.n_min = std::max(1.0, std::round(sum));
  f.cposa_initial = f.initial;
  for (double& p : f.cposa_initial) p *= f.n_min / sum;
  return f;
}

std::vector<Fixture> default_battery(std::size_t max_n) {
  std::vector<Fixture> out;
  const std::pair<const char*, int> patterns[] = {{"sparse", 0}, {"run", 1}, {"alternating", 2}, {"tail", 3}};
  for (std::size_t n = 3; n <= max_n; ++n) {
    for (double p0 : {0.2, 0.5, 0.8}) {
      for (const auto& [label, pat] : patterns) {
        std::vector<double> y(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          switch (pat) {
            case 0: y[i] = i % 3 == 0; break;
            case 1: y[i] = i >= n / 3 && i < n / 3 + 2; break;
            case 2: y[i] = i % 2; break;
            default: y[i] = i + 1 == n; break;
          }
        }
        char name[64];
        std::snprintf(name, sizeof name, "N%zu-p%.1f-%s", n, p0, label);
        out.push_back(make_fixture(name, std::move(y), std::vector<double>(n, p0)));
      }
    }
  }
  return out;
}

bool VerifyReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass(); });
}

const CheckResult* VerifyReport::find(const std::string& check, const std::string& design) const {
  for (const auto& c : checks) {
    if (c.check == check && c.design == design) return &c;
  }
  return nullptr;
}

VerifyReport run_verify(const VerifyOptions& options) {
  return run_verify(options, default_battery(options.max_n));
}

VerifyReport run_verify(const VerifyOptions& options, const std::vector<Fixture>& battery) {
  if (options.max_n > kMaxEnumerationSize) {
    throw std::invalid_argument("verify supports N <= " + std::to_string(kMaxEnumerationSize));
  }
  VerifyReport report;
  for (DesignKind kind : options.designs) {
    const std::string name = design_name(kind, options.corrupt);
    Tally total("total-probability", name, kProbTol);
    Tally unbiased("unbiasedness", name, kMeanTol);
    Tally exact("exact-variance", name, kVarTol);
    Tally estimator("variance-estimator", name, kVarTol);
    Tally moments("smi-moments", name, kMomentTol);
    Tally printed("smi-moments-as-printed", name, kMomentTol);
    Tally zero_cov("zero-covariance", name, kMomentTol);
    Tally min_n("minimum-size", name, 0.0);
    std::size_t range_errors = 0, positivity_fixtures = 0, unbiased_when_positive = 0, clean_fixtures = 0;
    std::size_t skipped_histories = 0;
    std::size_t clean_variance_ok = 0;
    std::string first_range_error, first_positivity;

    for (const Fixture& fx : battery) {
      if (fx.frame.size() > options.max_n) continue;
      RulePtr rule;
      std::vector<double> initial = fx.initial;
      RangePolicy policy = RangePolicy::kError;
      switch (kind) {
        case DesignKind::kPoisson: rule = poisson_rule(); break;
        case DesignKind::kPosa: rule = options.corrupt ? corrupted_posa_rule() : posa_rule(); break;
        case DesignKind::kCposa:
          rule = cposa_rule(fx.n_min);
          initial = fx.cposa_initial;
          policy = options.cposa_policy;
          try {
            enumerate_design(fx.frame, initial, *rule, RangePolicy::kError);
          } catch (const EnumerationError& e) {
            if (range_errors++ == 0) first_range_error = fx.name + ": " + e.what();
          }
          break;
      }

      PathDistribution dist;
      try {
        dist = enumerate_design(fx.frame, initial, *rule, policy);
      } catch (const std::exception& e) {
        total.fail(fx.name, e.what());
        continue;
      }
      total.observe(fx.name, std::abs(dist.total_probability() - 1.0));

      const EstimatorLaw law = oracle_estimator_law(dist, [](const DesignOutcome& o) { return ht_mean_estimate(o); });
      const double bias = std::abs(law.mean - fx.mean());
      unbiased.observe(fx.name, bias);

      const bool gap = std::any_of(dist.paths.begin(), dist.paths.end(),
                                   [&](const EnumeratedPath& p) { return path_has_positivity_gap(p, fx.frame); });
      if (gap) {
        if (positivity_fixtures++ == 0) first_positivity = fx.name;
      } else {
        ++clean_fixtures;
        if (bias <= kMeanTol) ++unbiased_when_positive;
      }

      // Closed-form exact variance.
      bool variance_ok = false;
      try {
        double closed = 0.0;
        switch (kind) {
          case DesignKind::kPoisson: closed = poisson_exact_variance(fx.frame, initial); break;
          case DesignKind::kPosa: closed = posa_exact_variance(fx.frame, initial, *rule); break;
          case DesignKind::kCposa: closed = exact_variance_on_paths(dist, *rule); break;
        }
        exact.observe(fx.name, std::abs(closed - law.variance));
        variance_ok = std::abs(closed - law.variance) <= kVarTol;
      } catch (const std::exception& e) {
        exact.fail(fx.name, e.what());
      }

      // Expected variance estimate.
      const EstimatorLaw vlaw = oracle_estimator_law(dist, [kind](const DesignOutcome& o) {
        switch (kind) {
          case DesignKind::kPoisson: return poisson_variance_estimate(o);
          case DesignKind::kPosa: return posa_variance_estimate(o);
          case DesignKind::kCposa: return cposa_variance_estimate(o);
        }
        return 0.0;
      });
      estimator.observe(fx.name, std::abs(vlaw.mean - law.variance));
      variance_ok = variance_ok && std::abs(vlaw.mean - law.variance) <= kVarTol;
      if (!gap && variance_ok) ++clean_variance_ok;

      // Moment formulas, conditional on each reachable history.
      double dev = 0.0, dev_printed = 0.0;
      for (const auto& h : oracle_history_moments(dist, *rule)) {
        if (h.history_probability <= 0.0) continue;
        const std::size_t t = h.position;
        const std::size_t n = dist.size();
        if (kind == DesignKind::kCposa && t + 1 < n) {
          const double rem = static_cast<double>(n - t - 1);
          const double lo = h.next_before - (1.0 - h.prob_in_force) / rem;
          const double hi = h.next_before + h.prob_in_force / rem;
          if (lo < 0.0 || hi > 1.0) {
            ++skipped_histories;
            continue;
          }
        }
        const auto f = pair_moments_given_history(kind, t, n, h.fires_if_selected, h.prob_in_force, h.next_initial,
                                                  h.next_before);
        dev = std::max({dev, std::abs(h.e_s - f.e_s), std::abs(h.e_s * (1.0 - h.e_s) - f.var_s)});
        if (t + 1 < n) {
          dev = std::max({dev, std::abs(h.e_s_next - f.e_joint), std::abs(h.cov_next - f.cov),
                          std::abs(h.e_next - f.expected_next)});
          if (kind == DesignKind::kCposa) {
            const auto g = pair_moments_given_history(kind, t, n, h.fires_if_selected, h.prob_in_force,
                                                      h.next_initial, h.next_before, CposaBracket::kAsPrinted);
            dev_printed = std::max({dev_printed, std::abs(h.e_s_next - g.e_joint), std::abs(h.cov_next - g.cov)});
          }
        }
      }
      const SmiMoments om = oracle_moments(dist);
      if (kind != DesignKind::kCposa && !options.corrupt) {
        const auto fm = smi_moments(*rule, fx.frame, initial);
        for (std::size_t i = 0; i < dist.size(); ++i) {
          dev = std::max({dev, std::abs(om.mean[i] - fm.mean[i]), std::abs(om.cov[i][i] - fm.var[i])});
          if (i + 1 < dist.size()) {
            dev = std::max({dev, std::abs(om.joint[i][i + 1] - fm.joint_next[i]),
                            std::abs(om.cov[i][i + 1] - fm.cov_next[i])});
          }
        }
      }
      moments.observe(fx.name, dev);
      if (kind == DesignKind::kCposa) printed.observe(fx.name, dev_printed);

      double far = 0.0;
      for (std::size_t i = 0; i < dist.size(); ++i) {
        for (std::size_t j = i + 2; j < dist.size(); ++j) far = std::max(far, std::abs(om.cov[i][j]));
      }
      zero_cov.observe(fx.name, far);

      if (kind == DesignKind::kCposa) {
        const std::size_t got = min_realized_n(dist);
        min_n.observe(fx.name, got >= static_cast<std::size_t>(fx.n_min) ? 0.0 : fx.n_min - static_cast<double>(got));
      }
    }

    report.checks.push_back(total.r);
    report.checks.push_back(unbiased.r);
    report.checks.push_back(exact.r);
    report.checks.push_back(estimator.r);
    report.checks.push_back(moments.r);
    report.checks.push_back(zero_cov.r);
    if (kind == DesignKind::kCposa) {
      report.checks.push_back(min_n.r);
      if (printed.r.failures > 0) {
        report.findings.push_back("cposa: the pair-moment bracket written with (1 - pi_{i+1}^{(i-1)}) misses the "
                                  "enumerated E(S_i S_{i+1}) by up to " + fmt(printed.r.max_deviation) + " (" +
                                  printed.r.worst_fixture + "); the form implied by the update rule, with "
                                  "(1 - pi_i^{(i-1)}), matches to " + fmt(moments.r.max_deviation));
      }
      if (range_errors > 0) {
        report.findings.push_back("cposa: " + std::to_string(range_errors) + " of " + std::to_string(battery.size()) +
                                  " fixtures drive a probability outside [0,1] on some path; first: " +
                                  first_range_error);
      }
      if (skipped_histories > 0) {
        report.findings.push_back("cposa: " + std::to_string(skipped_histories) +
                                  " histories with a clamped successor probability were left out of the moment check");
      }
    }
    if (positivity_fixtures > 0) {
      report.findings.push_back(name + ": " + std::to_string(positivity_fixtures) +
                                " fixtures have a positive unit reached with draw probability 0 on some path (first: " +
                                first_positivity + "); the estimator is unbiased on " +
                                std::to_string(unbiased_when_positive) + " of the " + std::to_string(clean_fixtures) +
                                " remaining fixtures, and both variance checks hold on " +
                                std::to_string(clean_variance_ok) + " of them");
    }
    if (!zero_cov.r.pass()) {
      report.findings.push_back(name + ": Cov(S_i, S_j) for j > i+1 reaches " + fmt(zero_cov.r.max_deviation) + " (" +
                                zero_cov.r.worst_fixture + ")");
    }
  }
  return report;
}

std::string report_json(const VerifyReport& report) {
  nlohmann::ordered_json j;
  j["pass"] = report.all_pass();
  auto& checks = j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : report.checks) {
    nlohmann::ordered_json e;
    e["check"] = c.check;
    e["design"] = c.design;
    e["tolerance"] = c.tolerance;
    if (std::isfinite(c.max_deviation)) {
      e["max_deviation"] = c.max_deviation;
    } else {
      e["max_deviation"] = nullptr;
    }
    e["fixtures"] = c.fixtures;
    e["failures"] = c.failures;
    e["worst_fixture"] = c.worst_fixture;
    if (!c.note.empty()) e["note"] = c.note;
    e["pass"] = c.pass();
    checks.push_back(std::move(e));
  }
  j["findings"] = report.findings;
  return j.dump(2) + "\n";
}

std::string report_text(const VerifyReport& report) {
  std::ostringstream os;
  for (const auto& c : report.checks) {
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-22s %-13s max_dev=%-10.3g tol=%-7.0e failures=%zu/%zu", c.pass() ? "ok" : "FAIL",
                  c.check.c_str(), c.design.c_str(), c.max_deviation, c.tolerance, c.failures, c.fixtures);
    os << line;
    if (!c.pass()) os << "  worst=" << c.worst_fixture;
    if (!c.note.empty()) os << "  (" << c.note << ")";
    os << "\n";
  }
  for (const auto& f : report.findings) os << "finding: " << f << "\n";
  return os.str();
}

}  // namespace posa

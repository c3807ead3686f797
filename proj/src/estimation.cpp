#include "posa/estimation.hpp"

#include <algorithm>
#include <sstream>

#include "posa/numeric.hpp"

namespace posa {

namespace {

double remaining_after(std::size_t position, std::size_t frame_size) {
  return static_cast<double>(frame_size - position - 1);
}

// Probability of position t+1 after step t on each branch of S_t.
std::pair<double, double> successor_branches(DesignKind kind, bool fires, double p, double next_initial,
                                             double next_before, double remaining) {
  switch (kind) {
    case DesignKind::kPoisson: return {next_initial, next_initial};
    case DesignKind::kPosa: return {next_initial, fires ? 1.0 : next_initial};
    case DesignKind::kCposa: {
      const double b0 = std::clamp(next_before + p / remaining, 0.0, 1.0);
      const double b1 = fires ? 1.0 : std::clamp(next_before - (1.0 - p) / remaining, 0.0, 1.0);
      return {b0, b1};
    }
  }
  return {next_initial, next_initial};
}

std::string path_string(const std::vector<std::uint8_t>& smi) {
  std::string s;
  for (auto v : smi) s.push_back(v ? '1' : '0');
  return s;
}

double pair_term(double y, double y_next, double bracket, double next_prob) {
  const double num = bracket - next_prob;
  if (y * y_next == 0.0 || num == 0.0) return 0.0;
  return y * y_next * num / next_prob;
}

}  // namespace

InvalidWeight::InvalidWeight(std::size_t position, double value)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "sampled unit at position " << position << " has draw probability " << value;
        return os.str();
      }()),
      position_(position) {}

DesignKind estimation_kind(const std::string& rule_id) {
  if (rule_id == "poisson") return DesignKind::kPoisson;
  if (rule_id.rfind("cposa", 0) == 0) return DesignKind::kCposa;
  if (rule_id.rfind("posa", 0) == 0) return DesignKind::kPosa;
  throw DesignError("no estimator for rule " + rule_id);
}

double ht_mean_estimate(std::span<const double> y_sampled, std::span<const double> draw_probs, double N) {
  if (y_sampled.size() != draw_probs.size()) throw std::invalid_argument("one draw probability per sampled value");
  if (!(N > 0.0)) throw std::invalid_argument("population size must be positive");
  KahanSum sum;
  for (std::size_t k = 0; k < y_sampled.size(); ++k) {
    if (!(draw_probs[k] > 0.0)) throw InvalidWeight(k, draw_probs[k]);
    sum += y_sampled[k] / draw_probs[k];
  }
  return sum.value() / N;
}

double ht_mean_estimate(const DesignOutcome& outcome) {
  if (!(outcome.population_size > 0.0)) throw std::invalid_argument("population size must be positive");
  KahanSum sum;
  for (const auto& u : outcome.sample) {
    if (!(u.draw_prob > 0.0)) throw InvalidWeight(u.position, u.draw_prob);
    sum += u.y / u.draw_prob;
  }
  return sum.value() / outcome.population_size;
}

double pair_bracket(DesignKind kind, bool fires, double draw_prob, double next_initial, double next_before,
                    std::size_t remaining, CposaBracket variant) {
  const double f = fires ? 1.0 : 0.0;
  switch (kind) {
    case DesignKind::kPoisson: return next_initial;
    case DesignKind::kPosa: return f + next_initial * (1.0 - f);
    case DesignKind::kCposa: {
      // The printed y_i in the bracket is the trigger indicator; identical for binary units.
      const double r = static_cast<double>(remaining);
      const double deficit = variant == CposaBracket::kConsistent ? 1.0 - draw_prob : 1.0 - next_before;
      return f + (1.0 - f) * (next_before - deficit / r);
    }
  }
  return 0.0;
}

double poisson_exact_variance(const SequentialFrame& frame, std::span<const double> initial) {
  KahanSum sum;
  for (std::size_t t = 0; t < frame.size(); ++t) {
    const double y = frame.values[t];
    if (y == 0.0) continue;
    if (!(initial[t] > 0.0)) throw PositivityViolation("unit at position " + std::to_string(t) + " has y != 0 and probability 0");
    sum += y * y * (1.0 - initial[t]) / initial[t];
  }
  return sum.value() / (frame.population_size * frame.population_size);
}

double posa_exact_variance(const SequentialFrame& frame, std::span<const double> initial, const UpdatingRule& rule) {
  const std::size_t n = frame.size();
  if (initial.size() != n) throw std::invalid_argument("need one initial probability per unit");
  KahanSum left, pairs;
  double q_prev = 0.0;   // P(S_{t-1} = 1)
  bool f_prev = false;   // whether t-1 fires when selected
  for (std::size_t t = 0; t < n; ++t) {
    const double forced = t == 0 ? 0.0 : (f_prev ? q_prev : 0.0);
    const double y = frame.values[t];
    if (y != 0.0 && forced < 1.0) {
      if (!(initial[t] > 0.0)) {
        throw PositivityViolation("unit at position " + std::to_string(t) +
                                  " has y != 0 and can be visited with probability 0");
      }
      left += y * y * (1.0 - forced) * (1.0 - initial[t]) / initial[t];
    }
    const bool fires = rule.fires(t, y);
    if (t + 1 < n) {
      const double bracket = pair_bracket(DesignKind::kPosa, fires, 0.0, initial[t + 1], initial[t + 1], 1);
      const double next_forced_branch = fires ? 1.0 : initial[t + 1];
      pairs += 2.0 * pair_term(y, frame.values[t + 1], bracket, next_forced_branch);
    }
    q_prev = forced + (1.0 - forced) * initial[t];
    f_prev = fires;
  }
  return (left.value() + pairs.value()) / (frame.population_size * frame.population_size);
}

double posa_exact_variance(const Population& pop, std::span<const double> initial_by_unit) {
  std::vector<double> by_position;
  for (std::size_t u : pop.order) by_position.push_back(initial_by_unit[u]);
  auto rule = posa_rule();
  return posa_exact_variance(unit_frame(pop), by_position, *rule);
}

namespace {

double variance_estimate(const DesignOutcome& outcome, DesignKind kind, CposaBracket variant) {
  const double N = outcome.population_size;
  KahanSum left, pairs;
  const auto& s = outcome.sample;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto& u = s[k];
    if (!(u.draw_prob > 0.0)) throw InvalidWeight(u.position, u.draw_prob);
    const double w = u.y / u.draw_prob;
    left += w * w * (1.0 - u.draw_prob);
    if (kind == DesignKind::kPoisson) continue;
    if (k + 1 < s.size() && s[k + 1].position == u.position + 1) {
      const auto& v = s[k + 1];
      const double bracket = pair_bracket(kind, u.triggered, u.draw_prob, u.next_initial, u.next_before,
                                          outcome.frame_size - u.position - 1, variant);
      const double num = bracket - u.next_after;
      if (u.y * v.y == 0.0 || num == 0.0) continue;
      pairs += 2.0 * u.y * v.y * num / (u.next_after * u.draw_prob * bracket);
    }
  }
  return (left.value() + pairs.value()) / (N * N);
}

}  // namespace

double posa_variance_estimate(const DesignOutcome& outcome) {
  return variance_estimate(outcome, DesignKind::kPosa, CposaBracket::kConsistent);
}

double cposa_variance_estimate(const DesignOutcome& outcome, CposaBracket variant) {
  return variance_estimate(outcome, DesignKind::kCposa, variant);
}

double poisson_variance_estimate(const DesignOutcome& outcome) {
  return variance_estimate(outcome, DesignKind::kPoisson, CposaBracket::kConsistent);
}

double exact_variance_on_paths(const PathDistribution& dist, const UpdatingRule& rule, CposaBracket variant) {
  const DesignKind kind = estimation_kind(rule.id());
  const std::size_t n = dist.size();
  const auto& values = dist.frame.values;
  KahanSum total;
  for (const auto& path : dist.paths) {
    const auto& trace = path.outcome.trace;
    KahanSum inner;
    for (std::size_t t = 0; t < n; ++t) {
      const double y = values[t];
      const double p = trace[t].prob_in_force;
      if (y != 0.0) {
        if (!(p > 0.0)) {
          throw PositivityViolation("path " + path_string(path.smi) + ": unit at position " + std::to_string(t) +
                                    " has y != 0 and probability 0");
        }
        inner += y * y * (1.0 - p) / p;
      }
      if (kind == DesignKind::kPoisson || t + 1 >= n) continue;
      const bool fires = rule.fires(t, y);
      const double rem = remaining_after(t, n);
      const double bracket =
          pair_bracket(kind, fires, p, dist.initial[t + 1], trace[t].next_before, n - t - 1, variant);
      const double branch1 =
          successor_branches(kind, fires, p, dist.initial[t + 1], trace[t].next_before, rem).second;
      inner += 2.0 * pair_term(y, values[t + 1], bracket, branch1);
    }
    total += path.probability * inner.value();
  }
  const double N = dist.frame.population_size;
  return total.value() / (N * N);
}

double cposa_exact_variance(const SequentialFrame& frame, std::span<const double> initial, double n_min,
                            RangePolicy policy) {
  auto rule = cposa_rule(n_min);
  const auto dist = enumerate_design(frame, {initial.begin(), initial.end()}, *rule, policy);
  return exact_variance_on_paths(dist, *rule);
}

EstimateReport estimate(const DesignOutcome& outcome) {
  EstimateReport r;
  r.design_id = outcome.rule_id;
  r.point = ht_mean_estimate(outcome);
  r.realized_n = outcome.realized_n();
  r.population_size = outcome.population_size;
  switch (estimation_kind(outcome.rule_id)) {
    case DesignKind::kPoisson: r.variance_estimate = poisson_variance_estimate(outcome); break;
    case DesignKind::kPosa: r.variance_estimate = posa_variance_estimate(outcome); break;
    case DesignKind::kCposa: r.variance_estimate = cposa_variance_estimate(outcome); break;
  }
  return r;
}

SmiFormulaMoments smi_moments(const UpdatingRule& rule, const SequentialFrame& frame,
                              std::span<const double> initial) {
  const DesignKind kind = estimation_kind(rule.id());
  if (kind == DesignKind::kCposa) {
    throw DesignError("CPoSA moments depend on the selection path; use pair_moments_given_history");
  }
  const std::size_t n = frame.size();
  SmiFormulaMoments m;
  m.mean.resize(n);
  m.var.resize(n);
  m.joint_next.assign(n, 0.0);
  m.cov_next.assign(n, 0.0);
  // q_t = P(S_t = 1) unconditionally.
  for (std::size_t t = 0; t < n; ++t) {
    if (t == 0 || kind == DesignKind::kPoisson) {
      m.mean[t] = initial[t];
    } else {
      const double forced = rule.fires(t - 1, frame.values[t - 1]) ? m.mean[t - 1] : 0.0;
      m.mean[t] = forced + (1.0 - forced) * initial[t];
    }
    m.var[t] = m.mean[t] * (1.0 - m.mean[t]);
  }
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const bool fires = rule.fires(t, frame.values[t]);
    const double b = pair_bracket(kind, fires, m.mean[t], initial[t + 1], initial[t + 1], n - t - 1);
    m.joint_next[t] = m.mean[t] * b;
    m.cov_next[t] = m.mean[t] * (b - m.mean[t + 1]);
  }
  return m;
}

PairMoments pair_moments_given_history(DesignKind kind, std::size_t position, std::size_t frame_size, bool fires,
                                       double draw_prob, double next_initial, double next_before,
                                       CposaBracket variant) {
  PairMoments m;
  m.e_s = draw_prob;
  m.var_s = draw_prob * (1.0 - draw_prob);
  if (position + 1 >= frame_size) return m;
  const double rem = remaining_after(position, frame_size);
  const double b = pair_bracket(kind, fires, draw_prob, next_initial, next_before, frame_size - position - 1, variant);
  m.e_joint = draw_prob * b;
  const auto [b0, b1] = successor_branches(kind, fires, draw_prob, next_initial, next_before, rem);
  m.expected_next = draw_prob * b1 + (1.0 - draw_prob) * b0;
  m.cov = draw_prob * (b - m.expected_next);
  return m;
}

std::vector<ExplainTerm> explain_terms(const DesignOutcome& outcome) {
  const DesignKind kind = estimation_kind(outcome.rule_id);
  const double N = outcome.population_size;
  std::vector<ExplainTerm> rows;
  const auto& s = outcome.sample;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto& u = s[k];
    if (!(u.draw_prob > 0.0)) throw InvalidWeight(u.position, u.draw_prob);
    rows.push_back({"ht", u.position, u.id, u.y, u.draw_prob, u.y / u.draw_prob / N});
    const double w = u.y / u.draw_prob;
    rows.push_back({"left", u.position, u.id, u.y, u.draw_prob, w * w * (1.0 - u.draw_prob) / (N * N)});
    if (kind != DesignKind::kPoisson && k + 1 < s.size() && s[k + 1].position == u.position + 1) {
      const auto& v = s[k + 1];
      const double bracket = pair_bracket(kind, u.triggered, u.draw_prob, u.next_initial, u.next_before,
                                          outcome.frame_size - u.position - 1);
      const double num = bracket - u.next_after;
      double value = 0.0;
      if (u.y * v.y != 0.0 && num != 0.0) {
        value = 2.0 * u.y * v.y * num / (u.next_after * u.draw_prob * bracket) / (N * N);
      }
      rows.push_back({"pair", u.position, u.id, u.y, u.draw_prob, value});
    }
  }
  return rows;
}

}  // namespace posa

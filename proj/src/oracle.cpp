#include "posa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "posa/numeric.hpp"
#include "posa/rng.hpp"

namespace posa {

namespace {

struct Walker {
  const SequentialFrame& frame;
  const std::vector<double>& initial;
  const UpdatingRule& rule;
  RangePolicy policy;
  std::vector<EnumeratedPath>& out;

  void walk(InclusionState state, DesignOutcome partial, double prob) {
    if (state.finished()) {
      EnumeratedPath path;
      path.smi.assign(state.smi().begin(), state.smi().end());
      path.probability = prob;
      path.outcome = std::move(partial);
      out.push_back(std::move(path));
      return;
    }
    const std::size_t t = state.step();
    double p = 0.0;
    try {
      p = current_draw_prob(state, policy);
    } catch (const ProbabilityOutOfRange& e) {
      throw EnumerationError(e.what(), {state.smi().begin(), state.smi().end()}, prob);
    }
    for (int s = 0; s <= 1; ++s) {
      const double branch = s == 1 ? p : 1.0 - p;
      if (branch <= 0.0) continue;
      InclusionState next = state;
      TraceRow row;
      try {
        row = advance(next, frame, rule, s == 1, policy);
      } catch (const ProbabilityOutOfRange& e) {
        throw EnumerationError(e.what(), {next.smi().begin(), next.smi().end()}, prob * branch);
      }
      DesignOutcome child = partial;
      if (s == 1) {
        SampledUnit su;
        su.position = t;
        su.id = row.id;
        su.y = frame.values[t];
        su.size = frame.sizes[t];
        su.draw_prob = row.prob_in_force;
        if (t + 1 < frame.size()) {
          su.next_initial = initial[t + 1];
          su.next_before = row.next_before;
          su.next_after = row.next_after;
        }
        su.triggered = rule.fires(t, su.y);
        child.sample.push_back(su);
      }
      child.trace.push_back(row);
      walk(std::move(next), std::move(child), prob * branch);
    }
  }
};

}  // namespace

EnumerationError::EnumerationError(const std::string& what, std::vector<std::uint8_t> prefix,
                                   double prefix_probability)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << what << " [path prefix ";
        for (auto s : prefix) os << int(s);
        os << ", probability " << prefix_probability << "]";
        return os.str();
      }()),
      prefix_(std::move(prefix)),
      prefix_probability_(prefix_probability) {}

double PathDistribution::total_probability() const {
  KahanSum sum;
  for (const auto& p : paths) sum += p.probability;
  return sum.value();
}

std::uint64_t fingerprint(const SequentialFrame& frame, const std::vector<double>& initial) {
  std::uint64_t h = fnv1a("frame");
  auto fold = [&h](double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    h = mix64(h ^ bits);
  };
  for (double v : frame.values) fold(v);
  for (double v : frame.sizes) fold(v);
  for (double v : initial) fold(v);
  return h;
}

PathDistribution enumerate_design(const SequentialFrame& frame, const std::vector<double>& initial_by_position,
                                  const UpdatingRule& rule, RangePolicy policy) {
  if (frame.size() > kMaxEnumerationSize) {
    throw std::invalid_argument("enumeration supports at most " + std::to_string(kMaxEnumerationSize) +
                                " units, got " + std::to_string(frame.size()));
  }
  if (initial_by_position.size() != frame.size()) {
    throw std::invalid_argument("need one initial probability per unit");
  }
  rule.check_initial(initial_by_position);

  PathDistribution dist;
  dist.design_id = rule.id();
  dist.frame = frame;
  dist.initial = initial_by_position;
  dist.fingerprint = fingerprint(frame, initial_by_position);

  DesignOutcome root;
  root.rule_id = rule.id();
  root.frame_size = frame.size();
  root.population_size = frame.population_size;
  Walker walker{frame, initial_by_position, rule, policy, dist.paths};
  walker.walk(InclusionState(initial_by_position), std::move(root), 1.0);
  return dist;
}

PathDistribution enumerate_design(const Population& pop, const std::vector<double>& initial_by_unit,
                                  const UpdatingRule& rule, RangePolicy policy) {
  if (initial_by_unit.size() != pop.size()) throw std::invalid_argument("need one initial probability per unit");
  std::vector<double> by_position;
  for (std::size_t u : pop.order) by_position.push_back(initial_by_unit[u]);
  return enumerate_design(unit_frame(pop), by_position, rule, policy);
}

SmiMoments oracle_moments(const PathDistribution& dist) {
  const std::size_t n = dist.size();
  std::vector<KahanSum> mean(n);
  std::vector<std::vector<KahanSum>> joint(n, std::vector<KahanSum>(n));
  for (const auto& path : dist.paths) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!path.smi[i]) continue;
      mean[i] += path.probability;
      for (std::size_t j = 0; j < n; ++j) {
        if (path.smi[j]) joint[i][j] += path.probability;
      }
    }
  }
  SmiMoments m;
  m.mean.resize(n);
  m.joint.assign(n, std::vector<double>(n));
  m.cov.assign(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) m.mean[i] = mean[i].value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m.joint[i][j] = joint[i][j].value();
      m.cov[i][j] = m.joint[i][j] - m.mean[i] * m.mean[j];
    }
  }
  return m;
}

std::vector<HistoryMoments> oracle_history_moments(const PathDistribution& dist, const UpdatingRule& rule) {
  const std::size_t n = dist.size();
  struct Acc {
    KahanSum prob, s, s_next, next;
    std::vector<KahanSum> sj, s_sj;
    const EnumeratedPath* witness = nullptr;
  };
  std::map<std::pair<std::size_t, std::vector<std::uint8_t>>, Acc> groups;
  for (const auto& path : dist.paths) {
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<std::uint8_t> history(path.smi.begin(), path.smi.begin() + static_cast<std::ptrdiff_t>(t));
      Acc& acc = groups[{t, std::move(history)}];
      if (!acc.witness) {
        acc.witness = &path;
        acc.sj.resize(n);
        acc.s_sj.resize(n);
      }
      const double p = path.probability;
      acc.prob += p;
      if (path.smi[t]) acc.s += p;
      if (t + 1 < n) {
        if (path.smi[t + 1]) acc.next += p;
        if (path.smi[t] && path.smi[t + 1]) acc.s_next += p;
      }
      for (std::size_t j = t + 2; j < n; ++j) {
        if (path.smi[j]) {
          acc.sj[j] += p;
          if (path.smi[t]) acc.s_sj[j] += p;
        }
      }
    }
  }

  std::vector<HistoryMoments> out;
  out.reserve(groups.size());
  for (const auto& [key, acc] : groups) {
    HistoryMoments h;
    h.position = key.first;
    h.history = key.second;
    h.history_probability = acc.prob.value();
    const double P = h.history_probability;
    const TraceRow& row = acc.witness->outcome.trace[h.position];
    h.prob_in_force = row.prob_in_force;
    h.next_before = row.next_before;
    if (h.position + 1 < n) h.next_initial = dist.initial[h.position + 1];
    h.fires_if_selected = rule.fires(h.position, dist.frame.values[h.position]);
    h.e_s = acc.s.value() / P;
    h.e_next = acc.next.value() / P;
    h.e_s_next = acc.s_next.value() / P;
    h.cov_next = h.e_s_next - h.e_s * h.e_next;
    for (std::size_t j = h.position + 2; j < n; ++j) {
      const double c = acc.s_sj[j].value() / P - h.e_s * (acc.sj[j].value() / P);
      h.max_abs_cov_distant = std::max(h.max_abs_cov_distant, std::abs(c));
    }
    out.push_back(std::move(h));
  }
  return out;
}

EstimatorLaw oracle_estimator_law(const PathDistribution& dist, const PathEstimator& estimator) {
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(dist.paths.size());
  KahanSum mean;
  for (const auto& path : dist.paths) {
    double v = 0.0;
    try {
      v = estimator(path.outcome);
    } catch (const std::exception& e) {
      throw EnumerationError(std::string("estimator undefined: ") + e.what(), path.smi, path.probability);
    }
    atoms.emplace_back(v, path.probability);
    mean += v * path.probability;
  }
  EstimatorLaw law;
  law.mean = mean.value();
  KahanSum var;
  for (const auto& [v, p] : atoms) var += p * (v - law.mean) * (v - law.mean);
  law.variance = var.value();

  std::sort(atoms.begin(), atoms.end());
  for (const auto& [v, p] : atoms) {
    if (!law.atoms.empty() && law.atoms.back().first == v) {
      law.atoms.back().second += p;
    } else {
      law.atoms.emplace_back(v, p);
    }
  }
  return law;
}

std::size_t min_realized_n(const PathDistribution& dist) {
  std::size_t best = dist.size();
  for (const auto& path : dist.paths) {
    if (path.probability > 0.0) best = std::min(best, path.outcome.realized_n());
  }
  return best;
}

}  // namespace posa

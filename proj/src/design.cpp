#include "posa/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "posa/rng.hpp"

namespace posa {

namespace {

// Drift from repeated constant corrections stays far below this.
constexpr double kRangeSlack = 1e-9;
constexpr double kSumTolerance = 1e-9;
// Probabilities this close to 0 or 1 are rounding residue of exact 0 or 1.
constexpr double kSnap = 1e-12;

class PoissonRule final : public UpdatingRule {
 public:
  std::string id() const override { return "poisson"; }
  void apply(InclusionState&, const StepEvent&) const override {}
  bool fires(std::size_t, double) const override { return false; }
};

class PosaRule final : public UpdatingRule {
 public:
  PosaRule(AdaptiveTrigger trigger, std::string id) : trigger_(std::move(trigger)), id_(std::move(id)) {}

  std::string id() const override { return id_; }

  void apply(InclusionState& state, const StepEvent& e) const override {
    if (e.selected && trigger_.fires(e.position, *e.observed)) {
      state.override_next(1.0);
    } else {
      state.clear_override();
    }
  }

  bool fires(std::size_t position, double y) const override { return trigger_.fires(position, y); }

 private:
  AdaptiveTrigger trigger_;
  std::string id_;
};

class CposaRule final : public UpdatingRule {
 public:
  CposaRule(AdaptiveTrigger trigger, double n_min, std::string id)
      : trigger_(std::move(trigger)), n_min_(n_min), id_(std::move(id)) {}

  std::string id() const override { return id_; }

  void apply(InclusionState& state, const StepEvent& e) const override {
    const double s = e.selected ? 1.0 : 0.0;
    state.shift((s - e.draw_prob) / static_cast<double>(e.remaining()));
    if (e.selected && trigger_.fires(e.position, *e.observed)) {
      state.override_next(1.0);
    } else {
      state.clear_override();
    }
  }

  bool fires(std::size_t position, double y) const override { return trigger_.fires(position, y); }

  void check_initial(std::span<const double> initial) const override {
    UpdatingRule::check_initial(initial);
    if (!(n_min_ >= 1.0) || std::abs(n_min_ - std::round(n_min_)) > kSumTolerance) {
      throw DesignError("n_min must be a positive integer");
    }
    const double sum = std::accumulate(initial.begin(), initial.end(), 0.0);
    if (std::abs(sum - n_min_) > kSumTolerance) {
      std::ostringstream os;
      os << "initial probabilities sum to " << sum << " but n_min is " << n_min_;
      throw DesignError(os.str());
    }
  }

 private:
  AdaptiveTrigger trigger_;
  double n_min_;
  std::string id_;
};

class CorruptedPosaRule final : public UpdatingRule {
 public:
  std::string id() const override { return "posa-corrupt"; }
  void apply(InclusionState& state, const StepEvent& e) const override {
    if (e.selected && trigger_.fires(e.position, *e.observed)) {
      state.override_next(0.0);
    } else {
      state.clear_override();
    }
  }
  bool fires(std::size_t position, double y) const override { return trigger_.fires(position, y); }

 private:
  AdaptiveTrigger trigger_;
};

}  // namespace

ProbabilityOutOfRange::ProbabilityOutOfRange(std::size_t step, std::size_t position, double value,
                                             const std::string& rule)
    : std::runtime_error([&] {
        std::ostringstream os;
        os.precision(17);
        os << "rule " << rule << ": probability " << value << " outside [0,1] after step " << step
           << " (position " << position << "); reduce n_min or flatten the initial probabilities";
        return os.str();
      }()),
      step_(step),
      position_(position),
      value_(value) {}

SequentialFrame unit_frame(const Population& pop) {
  SequentialFrame f;
  f.ids = pop.order;
  f.values.reserve(pop.size());
  for (std::size_t u : pop.order) f.values.push_back(pop.y[u]);
  f.sizes.assign(pop.size(), 1.0);
  f.population_size = static_cast<double>(pop.size());
  return f;
}

SequentialFrame area_frame(const Population& pop) {
  const auto areas = build_areas(pop);
  SequentialFrame f;
  for (int a : serpentine_area_sequence(pop.grid)) {
    const Area& area = areas[static_cast<std::size_t>(a)];
    f.ids.push_back(static_cast<std::size_t>(a));
    f.values.push_back(static_cast<double>(area.case_count));
    f.sizes.push_back(static_cast<double>(area.size()));
  }
  f.population_size = static_cast<double>(pop.size());
  return f;
}

InclusionState::InclusionState(std::vector<double> initial) {
  auto shared = std::make_shared<Shared>();
  const std::size_t n = initial.size();
  shared->suffix_min.assign(n + 1, std::numeric_limits<double>::infinity());
  shared->suffix_max.assign(n + 1, -std::numeric_limits<double>::infinity());
  for (std::size_t j = n; j-- > 0;) {
    shared->suffix_min[j] = std::min(shared->suffix_min[j + 1], initial[j]);
    shared->suffix_max[j] = std::max(shared->suffix_max[j + 1], initial[j]);
  }
  shared->initial = std::move(initial);
  data_ = std::move(shared);
  smi_.reserve(n);
  draw_probs_.reserve(n);
}

double InclusionState::prob(std::size_t j) const {
  if (next_override_ && j == step()) return *next_override_;
  return data_->initial[j] - offset_;
}

std::pair<double, double> InclusionState::range_after(std::size_t t) const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t from = t + 1;
  if (next_override_ && step() == t + 1) {
    lo = hi = *next_override_;
    ++from;
  }
  if (from < size()) {
    lo = std::min(lo, data_->suffix_min[from] - offset_);
    hi = std::max(hi, data_->suffix_max[from] - offset_);
  }
  return {lo, hi};
}

void InclusionState::override_next(double value) { next_override_ = value; }
void InclusionState::clear_override() { next_override_.reset(); }
void InclusionState::shift(double delta) { offset_ += delta; }

void InclusionState::record(bool selected, double draw_prob) {
  smi_.push_back(selected ? 1 : 0);
  draw_probs_.push_back(draw_prob);
  next_override_.reset();
}

AdaptiveTrigger::AdaptiveTrigger(std::vector<double> sizes, std::vector<double> cutoffs)
    : sizes_(std::move(sizes)), cutoffs_(std::move(cutoffs)) {
  if (sizes_.size() != cutoffs_.size()) throw DesignError("sizes and cutoffs differ in length");
}

bool AdaptiveTrigger::fires(std::size_t t, double y) const {
  if (sizes_.empty()) return y > 0.5;
  return y / sizes_[t] > cutoffs_[t];
}

void UpdatingRule::check_initial(std::span<const double> initial) const {
  for (std::size_t j = 0; j < initial.size(); ++j) {
    if (!(initial[j] >= 0.0 && initial[j] <= 1.0)) {
      throw ProbabilityOutOfRange(0, j, initial[j], id());
    }
  }
}

std::string to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::kPoisson: return "poisson";
    case DesignKind::kPosa: return "posa";
    case DesignKind::kCposa: return "cposa";
  }
  return "poisson";
}

DesignKind design_kind_from_string(const std::string& name) {
  if (name == "poisson") return DesignKind::kPoisson;
  if (name == "posa") return DesignKind::kPosa;
  if (name == "cposa") return DesignKind::kCposa;
  throw DesignError("unknown design: " + name);
}

RulePtr poisson_rule() { return std::make_shared<PoissonRule>(); }
RulePtr posa_rule() { return std::make_shared<PosaRule>(AdaptiveTrigger{}, "posa"); }
RulePtr cposa_rule(double n_min) { return std::make_shared<CposaRule>(AdaptiveTrigger{}, n_min, "cposa"); }
RulePtr corrupted_posa_rule() { return std::make_shared<CorruptedPosaRule>(); }

RulePtr area_threshold_rule(const SequentialFrame& areas, std::vector<double> cutoffs, DesignKind base,
                            double n_min) {
  if (cutoffs.size() != areas.size()) throw DesignError("one cutoff per area is required");
  for (double c : cutoffs) {
    if (!(c >= 0.0 && c <= 1.0)) throw DesignError("area cutoffs must lie in [0,1]");
  }
  AdaptiveTrigger trigger(areas.sizes, std::move(cutoffs));
  switch (base) {
    case DesignKind::kPosa: return std::make_shared<PosaRule>(std::move(trigger), "posa-area");
    case DesignKind::kCposa:
      return std::make_shared<CposaRule>(std::move(trigger), n_min, "cposa-area");
    case DesignKind::kPoisson: break;
  }
  throw DesignError("area threshold rule needs a PoSA or CPoSA base");
}

RulePtr make_rule(DesignKind kind, double n_min) {
  switch (kind) {
    case DesignKind::kPoisson: return poisson_rule();
    case DesignKind::kPosa: return posa_rule();
    case DesignKind::kCposa: return cposa_rule(n_min);
  }
  return poisson_rule();
}

double DesignOutcome::sampled_size() const {
  double total = 0.0;
  for (const auto& u : sample) total += u.size;
  return total;
}

double DesignOutcome::sampled_total() const {
  double total = 0.0;
  for (const auto& u : sample) total += u.y;
  return total;
}

double current_draw_prob(const InclusionState& state, RangePolicy policy) {
  const double p = state.prob(state.step());
  if (policy == RangePolicy::kError &&
      (p < -kRangeSlack || p > 1.0 + kRangeSlack)) {
    throw ProbabilityOutOfRange(state.step(), state.step(), p, "engine");
  }
  if (p < kSnap) return 0.0;
  if (p > 1.0 - kSnap) return 1.0;
  return p;
}

TraceRow advance(InclusionState& state, const SequentialFrame& frame, const UpdatingRule& rule,
                 bool selected, RangePolicy policy) {
  const std::size_t t = state.step();
  const std::size_t n = frame.size();
  TraceRow row;
  row.position = t;
  row.id = frame.ids[t];
  row.prob_in_force = current_draw_prob(state, policy);
  row.selected = selected;
  if (selected) row.observed = frame.values[t];
  state.record(selected, row.prob_in_force);
  if (t + 1 < n) {
    row.next_before = state.prob(t + 1);
    StepEvent event{t, n, selected, row.observed, row.prob_in_force};
    rule.apply(state, event);
    row.next_after = state.prob(t + 1);
    if (policy == RangePolicy::kError) {
      const auto [lo, hi] = state.range_after(t);
      if (lo < -kRangeSlack) throw ProbabilityOutOfRange(t + 1, t + 1, lo, rule.id());
      if (hi > 1.0 + kRangeSlack) throw ProbabilityOutOfRange(t + 1, t + 1, hi, rule.id());
    }
  }
  return row;
}

DesignOutcome run_sequential(const SequentialFrame& frame, std::span<const double> initial_by_position,
                             const UpdatingRule& rule, std::uint64_t seed, const EngineOptions& options) {
  const std::size_t n = frame.size();
  if (initial_by_position.size() != n) throw DesignError("need one initial probability per unit");
  rule.check_initial(initial_by_position);

  InclusionState state({initial_by_position.begin(), initial_by_position.end()});
  Rng rng(seed);
  DesignOutcome out;
  out.rule_id = rule.id();
  out.seed = seed;
  out.frame_size = n;
  out.population_size = frame.population_size;
  if (options.record_trace) out.trace.reserve(n);

  for (std::size_t t = 0; t < n; ++t) {
    const double p = current_draw_prob(state, options.policy);
    const bool selected = uniform01(rng) < p;
    TraceRow row = advance(state, frame, rule, selected, options.policy);
    if (selected) {
      SampledUnit su;
      su.position = t;
      su.id = row.id;
      su.y = frame.values[t];
      su.size = frame.sizes[t];
      su.draw_prob = row.prob_in_force;
      if (t + 1 < n) {
        su.next_initial = initial_by_position[t + 1];
        su.next_before = row.next_before;
        su.next_after = row.next_after;
      }
      su.triggered = rule.fires(t, su.y);
      out.sample.push_back(su);
    }
    if (options.record_trace) out.trace.push_back(std::move(row));
  }
  return out;
}

DesignOutcome run_list_sequential(const Population& pop, std::span<const double> initial_by_unit,
                                  const UpdatingRule& rule, std::uint64_t seed, const EngineOptions& options) {
  if (initial_by_unit.size() != pop.size()) throw DesignError("need one initial probability per unit");
  std::vector<double> by_position;
  by_position.reserve(pop.size());
  for (std::size_t u : pop.order) by_position.push_back(initial_by_unit[u]);
  return run_sequential(unit_frame(pop), by_position, rule, seed, options);
}

}  // namespace posa

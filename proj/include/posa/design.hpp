#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "posa/population.hpp"

namespace posa {

// Positions below are 0-based visit positions t = 0..N-1. The step index
// used in the usual list-sequential notation is t + 1, so "N - i" there is
// N - t - 1 here: the number of units still to be visited after t.

/// Units in visit order. For individual-level designs sizes are all 1; for
/// area-level designs each entry is an area and `values` holds case totals.
struct SequentialFrame {
  std::vector<std::size_t> ids;
  std::vector<double> values;
  std::vector<double> sizes;
  double population_size = 0.0;

  std::size_t size() const { return ids.size(); }
};

SequentialFrame unit_frame(const Population& pop);

/// Areas in serpentine grid order with their case totals and sizes.
SequentialFrame area_frame(const Population& pop);

enum class RangePolicy {
  kError,  // an update leaving [0,1] aborts the run
  kClamp,  // draw probabilities are clamped into [0,1]
};

class ProbabilityOutOfRange : public std::runtime_error {
 public:
  ProbabilityOutOfRange(std::size_t step, std::size_t position, double value, const std::string& rule);
  std::size_t step() const { return step_; }
  std::size_t position() const { return position_; }
  double value() const { return value_; }

 private:
  std::size_t step_;
  std::size_t position_;
  double value_;
};

class DesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Current state of a list-sequential run: realised indicators for visited
/// positions and selection probabilities for the rest.
///
/// The probability vector is kept lazily as initial - offset, with at most
/// one pending override for the next position. Every rule implemented here
/// (no update, next-unit forcing, constant correction) fits that shape, so a
/// step costs O(1) instead of O(N).
class InclusionState {
 public:
  explicit InclusionState(std::vector<double> initial);

  std::size_t step() const { return smi_.size(); }
  std::size_t size() const { return data_->initial.size(); }
  bool finished() const { return step() == size(); }

  /// Probability currently assigned to position j (j >= step()), unclamped.
  double prob(std::size_t j) const;
  double initial(std::size_t j) const { return data_->initial[j]; }

  std::span<const std::uint8_t> smi() const { return smi_; }
  std::span<const double> draw_probs() const { return draw_probs_; }

  /// Smallest and largest unclamped probability over positions > t.
  std::pair<double, double> range_after(std::size_t t) const;

  // Rule-facing mutators.
  void override_next(double value);
  void clear_override();
  void shift(double delta);

  void record(bool selected, double draw_prob);

 private:
  struct Shared {
    std::vector<double> initial;
    std::vector<double> suffix_min;
    std::vector<double> suffix_max;
  };
  std::shared_ptr<const Shared> data_;
  double offset_ = 0.0;
  std::optional<double> next_override_;
  std::vector<std::uint8_t> smi_;
  std::vector<double> draw_probs_;
};

/// Decides whether a selected unit with value y at position t triggers the
/// adaptive forcing of its successor: y / size > cutoff.
class AdaptiveTrigger {
 public:
  /// Individual level: a selected positive unit triggers.
  AdaptiveTrigger() = default;
  AdaptiveTrigger(std::vector<double> sizes, std::vector<double> cutoffs);

  bool fires(std::size_t t, double y) const;

 private:
  std::vector<double> sizes_;
  std::vector<double> cutoffs_;
};

/// Information handed to a rule after position t has been visited. The
/// observed value is present only for selected units.
struct StepEvent {
  std::size_t position = 0;
  std::size_t frame_size = 0;
  bool selected = false;
  std::optional<double> observed;
  double draw_prob = 0.0;

  std::size_t remaining() const { return frame_size - position - 1; }
};

class UpdatingRule {
 public:
  virtual ~UpdatingRule() = default;
  virtual std::string id() const = 0;
  /// Updates probabilities of positions > event.position. Never called
  /// after the last position.
  virtual void apply(InclusionState& state, const StepEvent& event) const = 0;
  /// Whether a selected unit with this value forces its successor.
  virtual bool fires(std::size_t position, double y) const = 0;
  virtual void check_initial(std::span<const double> initial) const;
};

using RulePtr = std::shared_ptr<const UpdatingRule>;

enum class DesignKind { kPoisson, kPosa, kCposa };

std::string to_string(DesignKind kind);
DesignKind design_kind_from_string(const std::string& name);

RulePtr poisson_rule();
RulePtr posa_rule();
RulePtr cposa_rule(double n_min);

/// Area-level adaptive rule: a selected area whose case total over size
/// exceeds its cutoff forces the next area. `base` picks the PoSA or CPoSA
/// update for everything else. Inputs are in frame (visit) order.
RulePtr area_threshold_rule(const SequentialFrame& areas, std::vector<double> cutoffs,
                            DesignKind base, double n_min = 0.0);

/// Negative control: a selected positive sets its successor's probability
/// to 0 instead of 1. Breaks unbiasedness whenever positives are adjacent.
RulePtr corrupted_posa_rule();

RulePtr make_rule(DesignKind kind, double n_min = 0.0);

struct TraceRow {
  std::size_t position = 0;
  std::size_t id = 0;
  double prob_in_force = 0.0;
  bool selected = false;
  std::optional<double> observed;
  double next_before = 0.0;  // successor's probability before this step's update
  double next_after = 0.0;   // successor's probability after it
};

struct SampledUnit {
  std::size_t position = 0;
  std::size_t id = 0;
  double y = 0.0;
  double size = 1.0;
  double draw_prob = 0.0;
  double next_initial = 0.0;
  double next_before = 0.0;
  double next_after = 0.0;
  bool triggered = false;
};

struct DesignOutcome {
  std::string rule_id;
  std::uint64_t seed = 0;
  std::size_t frame_size = 0;
  double population_size = 0.0;
  std::vector<SampledUnit> sample;
  std::vector<TraceRow> trace;

  std::size_t realized_n() const { return sample.size(); }
  double sampled_size() const;
  double sampled_total() const;
};

struct EngineOptions {
  RangePolicy policy = RangePolicy::kError;
  bool record_trace = false;
};

/// Probability in force for the next visit, after the policy is applied.
double current_draw_prob(const InclusionState& state, RangePolicy policy);

/// Visits the next position with the given decision and applies the rule.
/// Shared by the sampling engine and the exhaustive enumerator.
TraceRow advance(InclusionState& state, const SequentialFrame& frame, const UpdatingRule& rule,
                 bool selected, RangePolicy policy);

DesignOutcome run_sequential(const SequentialFrame& frame, std::span<const double> initial_by_position,
                             const UpdatingRule& rule, std::uint64_t seed,
                             const EngineOptions& options = {});

/// Individual-level run over pop.order; initial probabilities indexed by unit id.
DesignOutcome run_list_sequential(const Population& pop, std::span<const double> initial_by_unit,
                                  const UpdatingRule& rule, std::uint64_t seed,
                                  const EngineOptions& options = {});

}  // namespace posa

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "posa/design.hpp"
#include "posa/oracle.hpp"

namespace posa {

class InvalidWeight : public std::runtime_error {
 public:
  InvalidWeight(std::size_t position, double value);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// A unit with y != 0 that some reachable path visits with probability 0.
/// The HT estimator is then biased and its variance formula undefined.
class PositivityViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EstimateReport {
  std::string design_id;
  double point = 0.0;
  double variance_estimate = 0.0;
  std::optional<double> exact_variance;
  std::size_t realized_n = 0;
  double population_size = 0.0;
};

/// Which variance formula family a rule belongs to.
DesignKind estimation_kind(const std::string& rule_id);

/// (1/N) sum y_i / pi_i over sampled units, pi_i being the draw probability in force.
double ht_mean_estimate(std::span<const double> y_sampled, std::span<const double> draw_probs, double N);
double ht_mean_estimate(const DesignOutcome& outcome);

/// Bracket of the CPoSA pair terms. kAsPrinted uses (1 - pi_{i+1}^{(i-1)})
/// in place of (1 - pi_i^{(i-1)}); kept only to show the difference.
enum class CposaBracket { kConsistent, kAsPrinted };

/// Conditional probability that i+1 is drawn given S_i = 1 and the history,
/// as used in the numerator of the pair terms.
double pair_bracket(DesignKind kind, bool fires, double draw_prob, double next_initial, double next_before,
                    std::size_t remaining, CposaBracket variant = CposaBracket::kConsistent);

/// Exact PoSA variance from the population side. Probabilities of each unit
/// are random (pi0 or 1), so the left sum is averaged over their law; the pair
/// term uses the forced-branch value of pi_{i+1}^{(i)}.
double posa_exact_variance(const SequentialFrame& frame, std::span<const double> initial_by_position,
                           const UpdatingRule& rule);
double posa_exact_variance(const Population& pop, std::span<const double> initial_by_unit);

/// Poisson: sum y^2 (1-pi)/pi / N^2.
double poisson_exact_variance(const SequentialFrame& frame, std::span<const double> initial_by_position);

double posa_variance_estimate(const DesignOutcome& outcome);
double cposa_variance_estimate(const DesignOutcome& outcome, CposaBracket variant = CposaBracket::kConsistent);
double poisson_variance_estimate(const DesignOutcome& outcome);

/// Exact variance evaluated on the enumerated per-path probabilities, for any
/// design. Needs full traces, i.e. an oracle distribution.
double exact_variance_on_paths(const PathDistribution& dist, const UpdatingRule& rule,
                               CposaBracket variant = CposaBracket::kConsistent);
double cposa_exact_variance(const SequentialFrame& frame, std::span<const double> initial_by_position,
                            double n_min, RangePolicy policy = RangePolicy::kError);

EstimateReport estimate(const DesignOutcome& outcome);

/// Unconditional E(S_i), V(S_i), E(S_i S_{i+1}), Cov(S_i, S_{i+1}) for Poisson
/// and PoSA. For CPoSA these depend on the path; use pair_moments_given_history.
struct SmiFormulaMoments {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> joint_next;  // last entry unused
  std::vector<double> cov_next;
};

SmiFormulaMoments smi_moments(const UpdatingRule& rule, const SequentialFrame& frame,
                              std::span<const double> initial_by_position);

struct PairMoments {
  double e_s = 0.0;
  double var_s = 0.0;
  double e_joint = 0.0;
  double expected_next = 0.0;  // E(pi_{t+1}^{(t)} | history)
  double cov = 0.0;
};

/// Moment formulas conditional on the history up to position t, given the
/// probability in force at t and the successor's probability before step t.
PairMoments pair_moments_given_history(DesignKind kind, std::size_t position, std::size_t frame_size,
                                       bool fires, double draw_prob, double next_initial, double next_before,
                                       CposaBracket variant = CposaBracket::kConsistent);

/// One row per formula term, for auditing.
struct ExplainTerm {
  std::string term;  // "ht", "left" or "pair"
  std::size_t position = 0;
  std::size_t id = 0;
  double y = 0.0;
  double draw_prob = 0.0;
  double value = 0.0;
};

std::vector<ExplainTerm> explain_terms(const DesignOutcome& outcome);

}  // namespace posa

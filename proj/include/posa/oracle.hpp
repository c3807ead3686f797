#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "posa/design.hpp"

namespace posa {

inline constexpr std::size_t kMaxEnumerationSize = 16;

/// One possible realisation of a design, with its exact probability.
struct EnumeratedPath {
  std::vector<std::uint8_t> smi;
  double probability = 0.0;
  DesignOutcome outcome;  // carries the full trace
};

/// Every selection path of a design on a tiny population.
struct PathDistribution {
  std::string design_id;
  std::uint64_t fingerprint = 0;
  SequentialFrame frame;
  std::vector<double> initial;
  std::vector<EnumeratedPath> paths;

  std::size_t size() const { return frame.size(); }
  double total_probability() const;
};

class EnumerationError : public std::runtime_error {
 public:
  EnumerationError(const std::string& what, std::vector<std::uint8_t> prefix, double prefix_probability);
  const std::vector<std::uint8_t>& prefix() const { return prefix_; }
  double prefix_probability() const { return prefix_probability_; }

 private:
  std::vector<std::uint8_t> prefix_;
  double prefix_probability_;
};

std::uint64_t fingerprint(const SequentialFrame& frame, const std::vector<double>& initial);

/// Depth-first walk over both branches of every draw, applying `rule`
/// through the same step function the sampling engine uses. Zero-probability
/// branches are pruned.
PathDistribution enumerate_design(const SequentialFrame& frame, const std::vector<double>& initial_by_position,
                                  const UpdatingRule& rule, RangePolicy policy = RangePolicy::kError);

PathDistribution enumerate_design(const Population& pop, const std::vector<double>& initial_by_unit,
                                  const UpdatingRule& rule, RangePolicy policy = RangePolicy::kError);

/// Exact first and second moments of the sample membership indicators.
struct SmiMoments {
  std::vector<double> mean;                   // E(S_i)
  std::vector<std::vector<double>> joint;     // E(S_i S_j)
  std::vector<std::vector<double>> cov;       // Cov(S_i, S_j); diagonal is Var(S_i)
};

SmiMoments oracle_moments(const PathDistribution& dist);

/// Moments of (S_t, S_j) conditional on one reachable decision history of
/// length t.
struct HistoryMoments {
  std::size_t position = 0;
  std::vector<std::uint8_t> history;
  double history_probability = 0.0;
  double prob_in_force = 0.0;    // probability of position t given the history
  double next_before = 0.0;      // probability of t + 1 given the history
  double next_initial = 0.0;
  bool fires_if_selected = false;
  double e_s = 0.0;
  double e_s_next = 0.0;         // E(S_t S_{t+1} | history)
  double e_next = 0.0;           // E(S_{t+1} | history)
  double cov_next = 0.0;
  double max_abs_cov_distant = 0.0;  // max over j > t+1 of |Cov(S_t, S_j | history)|
};

std::vector<HistoryMoments> oracle_history_moments(const PathDistribution& dist, const UpdatingRule& rule);

struct EstimatorLaw {
  double mean = 0.0;
  double variance = 0.0;
  std::vector<std::pair<double, double>> atoms;  // (value, probability), sorted by value
};

using PathEstimator = std::function<double(const DesignOutcome&)>;

/// Applies `estimator` to each path and aggregates. Throws EnumerationError
/// naming the path if the estimator throws on a positive-probability path.
EstimatorLaw oracle_estimator_law(const PathDistribution& dist, const PathEstimator& estimator);

/// Smallest realised sample size over positive-probability paths.
std::size_t min_realized_n(const PathDistribution& dist);

}  // namespace posa

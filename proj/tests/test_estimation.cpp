#include <gtest/gtest.h>

#include <cmath>

#include "posa/estimation.hpp"
#include "posa/oracle.hpp"
#include "reference.hpp"

using namespace posa;

namespace {

SequentialFrame line(const std::vector<double>& y) {
  SequentialFrame f;
  for (std::size_t i = 0; i < y.size(); ++i) {
    f.ids.push_back(i);
    f.values.push_back(y[i]);
    f.sizes.push_back(1.0);
  }
  f.population_size = static_cast<double>(y.size());
  return f;
}

// Variance of the HT estimator straight from the brute-force law.
double ref_variance(ref::Rule r, const std::vector<double>& y, const std::vector<double>& pi) {
  double m1 = 0, m2 = 0;
  for (const auto& p : ref::enumerate(r, y, pi)) {
    const double e = ref::ht(p, y);
    m1 += p.prob * e;
    m2 += p.prob * e * e;
  }
  return m2 - m1 * m1;
}

double expected_variance_estimate(const PathDistribution& d, double (*v)(const DesignOutcome&)) {
  double e = 0;
  for (const auto& p : d.paths) e += p.probability * v(p.outcome);
  return e;
}

double posa_v(const DesignOutcome& o) { return posa_variance_estimate(o); }
double cposa_v(const DesignOutcome& o) { return cposa_variance_estimate(o); }
double poisson_v(const DesignOutcome& o) { return poisson_variance_estimate(o); }

}  // namespace

TEST(HtEstimate, CensusGivesPopulationMean) {
  const std::vector<double> y{1, 0, 1, 1};
  const std::vector<double> pi(4, 1.0);
  const auto o = run_sequential(line(y), pi, *posa_rule(), 5);
  EXPECT_DOUBLE_EQ(ht_mean_estimate(o), 0.75);
}

TEST(HtEstimate, SingleUnitHandComputed) {
  const std::vector<double> ys{1.0}, ps{0.5};
  EXPECT_DOUBLE_EQ(ht_mean_estimate(ys, ps, 4.0), 0.5);
}

TEST(HtEstimate, ZeroProbabilityIsAnError) {
  const std::vector<double> ys{1.0}, ps{0.0};
  EXPECT_THROW(ht_mean_estimate(ys, ps, 4.0), InvalidWeight);
}

TEST(HtEstimate, PosaThreeUnitsUnbiased) {
  const auto d = enumerate_design(line({1, 0, 1}), std::vector<double>(3, 0.5), *posa_rule());
  const auto law = oracle_estimator_law(d, [](const DesignOutcome& o) { return ht_mean_estimate(o); });
  EXPECT_NEAR(law.mean, 2.0 / 3.0, 1e-15);
}

TEST(PosaVariance, ZeroCasesOrCensusIsZero) {
  EXPECT_EQ(posa_exact_variance(line({0, 0, 0, 0}), std::vector<double>(4, 0.3), *posa_rule()), 0.0);
  EXPECT_NEAR(posa_exact_variance(line({1, 0, 1, 1}), std::vector<double>(4, 1.0), *posa_rule()), 0.0, 1e-15);
}

TEST(PosaVariance, ThreeUnitsMatchesBruteForce) {
  const std::vector<double> y{1, 0, 1};
  const std::vector<double> pi(3, 0.5);
  EXPECT_NEAR(posa_exact_variance(line(y), pi, *posa_rule()), ref_variance(ref::Rule::kPosa, y, pi), 1e-14);
}

TEST(PosaVariance, UnequalProbabilitiesMatchBruteForce) {
  const std::vector<double> y{1, 1, 0, 1, 1, 0, 1, 1};
  const std::vector<double> pi{0.2, 0.7, 0.4, 0.9, 0.3, 0.5, 0.6, 0.25};
  EXPECT_NEAR(posa_exact_variance(line(y), pi, *posa_rule()), ref_variance(ref::Rule::kPosa, y, pi), 1e-13);
  EXPECT_NEAR(poisson_exact_variance(line(y), pi), ref_variance(ref::Rule::kPoisson, y, pi), 1e-13);
}

TEST(PosaVarianceEstimate, NoCasesOrCensusIsZero) {
  const auto none = run_sequential(line({0, 0, 0, 0}), std::vector<double>(4, 0.5), *posa_rule(), 3);
  EXPECT_EQ(posa_variance_estimate(none), 0.0);
  const auto census = run_sequential(line({1, 1, 0, 1}), std::vector<double>(4, 1.0), *posa_rule(), 3);
  EXPECT_NEAR(posa_variance_estimate(census), 0.0, 1e-15);
}

TEST(PosaVarianceEstimate, UnbiasedOnFourUnits) {
  const std::vector<double> y{1, 1, 0, 1};
  const std::vector<double> pi(4, 0.4);
  const auto d = enumerate_design(line(y), pi, *posa_rule());
  EXPECT_NEAR(expected_variance_estimate(d, posa_v), ref_variance(ref::Rule::kPosa, y, pi), 1e-10);
}

TEST(PoissonVarianceEstimate, Unbiased) {
  const std::vector<double> y{1, 0, 1, 1, 0, 1};
  const std::vector<double> pi{0.2, 0.5, 0.8, 0.3, 0.6, 0.45};
  const auto d = enumerate_design(line(y), pi, *poisson_rule());
  EXPECT_NEAR(expected_variance_estimate(d, poisson_v), ref_variance(ref::Rule::kPoisson, y, pi), 1e-12);
}

TEST(CposaVariance, ZeroCasesAndCensus) {
  EXPECT_EQ(cposa_exact_variance(line({0, 0, 0, 0, 0}), std::vector<double>(5, 0.4), 2), 0.0);
  EXPECT_NEAR(cposa_exact_variance(line({1, 0, 1, 1, 0}), std::vector<double>(5, 1.0), 5), 0.0, 1e-15);
  const auto census = run_sequential(line({1, 0, 1}), std::vector<double>(3, 1.0), *cposa_rule(3), 1);
  EXPECT_NEAR(cposa_variance_estimate(census), 0.0, 1e-15);
}

// No positive unit can be reached with probability 0 here, so the
// path-based formula, the brute-force variance and the mean of the variance
// estimator agree, and the estimator is unbiased.
TEST(CposaVariance, GapFreeFixtureMatchesBruteForce) {
  const std::vector<double> y{1, 1, 0, 0, 0};
  const std::vector<double> pi(5, 0.4);
  const auto d = enumerate_design(line(y), pi, *cposa_rule(2), RangePolicy::kClamp);
  const double want = ref_variance(ref::Rule::kCposa, y, pi);
  EXPECT_NEAR(cposa_exact_variance(line(y), pi, 2, RangePolicy::kClamp), want, 1e-10);
  EXPECT_NEAR(expected_variance_estimate(d, cposa_v), want, 1e-10);
  const auto law = oracle_estimator_law(d, [](const DesignOutcome& o) { return ht_mean_estimate(o); });
  EXPECT_NEAR(law.mean, 0.4, 1e-12);
}

// y = (0,1,0,0,1), n_min = 2: once two units are drawn the rest drop to
// probability 0, so the last positive is sometimes unreachable. The
// estimator then has mean (1/N) sum y_i P(pi_i > 0) instead of the
// population mean, and the variance formula is undefined.
TEST(CposaVariance, FiveUnitsPositivityGap) {
  const std::vector<double> y{0, 1, 0, 0, 1};
  const std::vector<double> pi(5, 0.4);
  const auto d = enumerate_design(line(y), pi, *cposa_rule(2), RangePolicy::kClamp);
  double reach = 0;
  for (const auto& p : ref::enumerate(ref::Rule::kCposa, y, pi)) {
    reach += p.prob * ((p.draw[1] > 0) + (p.draw[4] > 0));
  }
  const auto law = oracle_estimator_law(d, [](const DesignOutcome& o) { return ht_mean_estimate(o); });
  EXPECT_NEAR(law.mean, reach / 5.0, 1e-12);
  EXPECT_LT(law.mean, 0.4 - 1e-3);
  EXPECT_THROW(cposa_exact_variance(line(y), pi, 2, RangePolicy::kClamp), PositivityViolation);
}

TEST(CposaVariance, PositivityGapIsReported) {
  // Path (1,1,1,.) drives the last unit, a positive, to probability 0.
  const std::vector<double> y{1, 0, 0, 1};
  const std::vector<double> pi(4, 0.5);
  const auto d = enumerate_design(line(y), pi, *cposa_rule(2), RangePolicy::kClamp);
  EXPECT_THROW(exact_variance_on_paths(d, *cposa_rule(2)), PositivityViolation);
}

TEST(CposaBracketVariants, PrintedFormDiffersWhenPredecessorDiffers) {
  const double consistent = pair_bracket(DesignKind::kCposa, false, 0.3, 0.4, 0.5, 3, CposaBracket::kConsistent);
  const double printed = pair_bracket(DesignKind::kCposa, false, 0.3, 0.4, 0.5, 3, CposaBracket::kAsPrinted);
  EXPECT_NEAR(consistent, 0.5 - 0.7 / 3.0, 1e-15);
  EXPECT_NEAR(printed, 0.5 - 0.5 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(pair_bracket(DesignKind::kCposa, true, 0.3, 0.4, 0.5, 3), 1.0);
  EXPECT_DOUBLE_EQ(pair_bracket(DesignKind::kPosa, true, 0.3, 0.4, 0.4, 3), 1.0);
  EXPECT_DOUBLE_EQ(pair_bracket(DesignKind::kPosa, false, 0.3, 0.4, 0.4, 3), 0.4);
}

TEST(SmiMoments, PoissonHasNoCovariance) {
  const auto m = smi_moments(*poisson_rule(), line({1, 1, 0, 1}), std::vector<double>{0.2, 0.4, 0.6, 0.8});
  for (std::size_t i = 0; i + 1 < 4; ++i) EXPECT_EQ(m.cov_next[i], 0.0);
  EXPECT_DOUBLE_EQ(m.var[1], 0.24);
}

TEST(SmiMoments, PosaNegativeUnitHasNoCovarianceWithSuccessor) {
  const auto m = smi_moments(*posa_rule(), line({1, 0, 1, 0}), std::vector<double>(4, 0.5));
  EXPECT_NEAR(m.cov_next[1], 0.0, 1e-15);
}

TEST(SmiMoments, PosaThreeUnitsMatchBruteForce) {
  const std::vector<double> y{1, 0, 1};
  const std::vector<double> pi(3, 0.5);
  const auto m = smi_moments(*posa_rule(), line(y), pi);
  const auto paths = ref::enumerate(ref::Rule::kPosa, y, pi);
  for (std::size_t i = 0; i < 3; ++i) {
    double e = 0, ej = 0, en = 0;
    for (const auto& p : paths) {
      e += p.prob * p.s[i];
      if (i + 1 < 3) {
        ej += p.prob * p.s[i] * p.s[i + 1];
        en += p.prob * p.s[i + 1];
      }
    }
    EXPECT_NEAR(m.mean[i], e, 1e-12);
    EXPECT_NEAR(m.var[i], e * (1 - e), 1e-12);
    if (i + 1 < 3) {
      EXPECT_NEAR(m.joint_next[i], ej, 1e-12);
      EXPECT_NEAR(m.cov_next[i], ej - e * en, 1e-12);
    }
  }
}

TEST(SmiMoments, CposaNeedsTheConditionalForm) {
  EXPECT_THROW(smi_moments(*cposa_rule(2), line({1, 0, 1, 0}), std::vector<double>(4, 0.5)), DesignError);
}

TEST(Explain, TermsSumToEstimates) {
  std::vector<double> y(12, 0.0);
  y[2] = y[3] = y[7] = y[11] = 1;
  const auto o = run_sequential(line(y), std::vector<double>(12, 0.5), *posa_rule(), 17);
  double ht = 0, v = 0;
  for (const auto& t : explain_terms(o)) (t.term == "ht" ? ht : v) += t.value;
  EXPECT_NEAR(ht, ht_mean_estimate(o), 1e-15);
  EXPECT_NEAR(v, posa_variance_estimate(o), 1e-15);
}

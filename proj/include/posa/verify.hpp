#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "posa/design.hpp"

namespace posa {

/// A tiny population on which every design is enumerated exactly.
struct Fixture {
  std::string name;
  SequentialFrame frame;
  std::vector<double> initial;  // used by Poisson and PoSA
  std::vector<double> cposa_initial;  // rescaled so the sum is n_min
  double n_min = 1.0;
  double mean() const;
};

Fixture make_fixture(std::string name, std::vector<double> y, std::vector<double> initial);

/// N = 3..max_n, pi0 in {0.2, 0.5, 0.8}, four y patterns.
std::vector<Fixture> default_battery(std::size_t max_n = 10);

struct CheckResult {
  std::string check;
  std::string design;
  double tolerance = 0.0;
  double max_deviation = 0.0;
  std::size_t fixtures = 0;
  std::size_t failures = 0;
  std::string worst_fixture;
  std::string note;
  bool pass() const { return failures == 0; }
};

struct VerifyOptions {
  std::size_t max_n = 10;
  std::vector<DesignKind> designs = {DesignKind::kPoisson, DesignKind::kPosa, DesignKind::kCposa};
  RangePolicy cposa_policy = RangePolicy::kClamp;
  bool corrupt = false;  // swap PoSA for the negative-control rule
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  std::vector<std::string> findings;
  bool all_pass() const;
  const CheckResult* find(const std::string& check, const std::string& design) const;
};

VerifyReport run_verify(const VerifyOptions& options, const std::vector<Fixture>& battery);
VerifyReport run_verify(const VerifyOptions& options);

std::string report_json(const VerifyReport& report);
std::string report_text(const VerifyReport& report);

}  // namespace posa

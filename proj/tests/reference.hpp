#pragma once

// Brute-force reference for the list-sequential designs. Walks all 2^N
// membership vectors and rebuilds the full probability vector at every step
// straight from the rule definitions, without touching the library engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace ref {

enum class Rule { kPoisson, kPosa, kCposa };

struct Path {
  std::vector<int> s;
  double prob = 0.0;
  std::vector<double> draw;  // probability in force at each visited position
};

/// Individual level: a selected unit with y > 0 forces the next unit.
/// Probabilities are clamped into [0, 1] before each draw; `out_of_range`
/// is raised if any raw value left that interval.
inline std::vector<Path> enumerate(Rule rule, const std::vector<double>& y, const std::vector<double>& pi0,
                                   bool* out_of_range = nullptr) {
  const std::size_t n = y.size();
  std::vector<Path> out;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<double> p = pi0;
    Path path;
    path.prob = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double q = p[i];
      if (path.prob > 0.0 && (q < -1e-9 || q > 1 + 1e-9) && out_of_range) *out_of_range = true;
      q = std::clamp(q, 0.0, 1.0);
      if (std::abs(q) < 1e-12) q = 0.0;
      if (q > 1 - 1e-12) q = 1.0;
      const int s = (mask >> i) & 1u;
      path.prob *= s ? q : 1.0 - q;
      path.s.push_back(s);
      path.draw.push_back(q);
      if (i + 1 == n) break;
      const bool force = s == 1 && y[i] > 0;
      if (rule == Rule::kCposa) {
        const double w = (s - q) / static_cast<double>(n - i - 1);
        for (std::size_t j = i + 1; j < n; ++j) p[j] -= w;
        if (force) {
          p[i + 1] = 1.0;
        }
      } else if (rule == Rule::kPosa) {
        p[i + 1] = force ? 1.0 : pi0[i + 1];
      }
    }
    if (path.prob > 0.0) out.push_back(path);
  }
  return out;
}

inline double ht(const Path& p, const std::vector<double>& y) {
  double t = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (p.s[i]) t += y[i] / p.draw[i];
  }
  return t / static_cast<double>(y.size());
}

}  // namespace ref

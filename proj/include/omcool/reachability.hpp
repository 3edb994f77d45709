#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "omcool/model.hpp"

namespace omcool {

/// Constant-control transfer: odd pair m > n, coupling G = mn/(m^2+n^2) and
/// transfer time T = (pi/2) sqrt(m^2+n^2), both in mechanical-frequency units.
struct StaircaseEntry {
  int m = 0;
  int n = 0;
  double G = 0.0;
  double T = 0.0;
};

/// Normal-mode frequencies sqrt(1 +/- 2G) of the coupled system under
/// constant control G in (0, 1/2]. Subsystem a has eigenvalues
/// +/- i(w+ +/- w-), subsystem b has a double zero and +/- 2i w+-.
inline std::pair<double, double> eigenfrequencies(double G) {
  if (!(G > 0.0) || G > 0.5)
    throw std::invalid_argument("eigenfrequencies: G must lie in (0, 1/2]");
  return {std::sqrt(1.0 + 2.0 * G), std::sqrt(1.0 - 2.0 * G)};
}

/// Constant control and transfer time for an odd pair m > n >= 1.
inline StaircaseEntry pair_to_control(int m, int n) {
  if (n < 1 || m <= n) throw std::invalid_argument("pair_to_control: need m > n >= 1");
  if (m % 2 == 0 || n % 2 == 0)
    throw std::invalid_argument("pair_to_control: m and n must be odd");
  const double mm = static_cast<double>(m);
  const double nn = static_cast<double>(n);
  StaircaseEntry e;
  e.m = m;
  e.n = n;
  e.G = mm * nn / (mm * mm + nn * nn);
  e.T = 0.5 * std::numbers::pi * std::sqrt(mm * mm + nn * nn);
  return e;
}

/// All constant-control pairs with m <= m_max whose coupling fits under the
/// bound, sorted by transfer time (ties by m).
inline std::vector<StaircaseEntry> feasible_pairs(CouplingBound bound, int m_max) {
  std::vector<StaircaseEntry> out;
  for (int m = 3; m <= m_max; m += 2) {
    for (int n = 1; n < m; n += 2) {
      StaircaseEntry e = pair_to_control(m, n);
      if (e.G <= bound.g0) out.push_back(e);
    }
  }
  std::sort(out.begin(), out.end(), [](const StaircaseEntry& a, const StaircaseEntry& b) {
    if (a.T != b.T) return a.T < b.T;
    return a.m < b.m;
  });
  return out;
}

/// Minimal constant-control transfer for the bound G0: the unique odd m with
/// m/(m^2+1) <= G0 < (m-2)/((m-2)^2+1), paired with n = 1. Bounds at or above
/// 1/2 map to the m = 3 level, which stays feasible and minimal there.
inline StaircaseEntry staircase_time(CouplingBound bound) {
  int m = 3;
  while (static_cast<double>(m) / (static_cast<double>(m) * m + 1.0) > bound.g0) m += 2;
  return pair_to_control(m, 1);
}

}  // namespace omcool

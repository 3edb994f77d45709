#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "omcool/integrate.hpp"

namespace testsupport {

/// Deterministic uniform draws for property-style tests.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 1u) {}

  double uniform(double lo, double hi) {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    x ^= x >> 31;
    const double u = static_cast<double>(x >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

 private:
  std::uint64_t state_;
};

/// Reference nodal states for a constant control: chained high-resolution
/// RK4 propagation from the start to each node time t_k = T (tau_k + 1) / 2.
/// This is the independent oracle the transcription is checked against.
inline Eigen::MatrixXd sample_reference_states(double G, double T,
                                               const Eigen::VectorXd& tau_nodes) {
  const int n = static_cast<int>(tau_nodes.size());
  Eigen::MatrixXd states(n, 10);
  const omcool::ControlSignal g = omcool::ControlSignal::constant(G);
  omcool::FullState x = omcool::initial_state();
  states.row(0) = x.v.transpose();
  for (int k = 1; k < n; ++k) {
    const double t0 = T * 0.5 * (tau_nodes[k - 1] + 1.0);
    const double t1 = T * 0.5 * (tau_nodes[k] + 1.0);
    const long steps = std::max(200L, static_cast<long>(std::ceil((t1 - t0) / 2e-5)));
    const omcool::Trajectory seg = omcool::propagate(g, t1 - t0, steps, x);
    x = seg.states.back();
    states.row(k) = x.v.transpose();
  }
  return states;
}

}  // namespace testsupport

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace omcool {

/// Barycentric weights 1/prod_{k!=j}(x_j - x_k) for Lagrange interpolation
/// on distinct nodes, computed in log space and normalized to unit max
/// magnitude (the barycentric formula is invariant under a common scale).
inline Eigen::VectorXd barycentric_weights(const Eigen::VectorXd& nodes) {
  const Eigen::Index n = nodes.size();
  if (n < 1) throw std::invalid_argument("barycentric_weights: empty node set");
  Eigen::VectorXd w(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double log_mag = 0.0;
    double sign = 1.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == j) continue;
      const double d = nodes[j] - nodes[k];
      if (d == 0.0) throw std::invalid_argument("barycentric_weights: repeated node");
      log_mag += std::log(std::abs(d));
      if (d < 0.0) sign = -sign;
    }
    w[j] = sign * std::exp(-log_mag);
  }
  w /= w.cwiseAbs().maxCoeff();
  return w;
}

/// Evaluate the interpolating polynomial of (nodes, values) at x.
/// Hitting a node returns the stored value bitwise.
inline double barycentric_eval(const Eigen::VectorXd& nodes, const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& values, double x) {
  const Eigen::Index n = nodes.size();
  if (weights.size() != n || values.size() != n)
    throw std::invalid_argument("barycentric_eval: size mismatch");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (x == nodes[j]) return values[j];
  }
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double q = weights[j] / (x - nodes[j]);
    num += q * values[j];
    den += q;
  }
  return num / den;
}

}  // namespace omcool

#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace fivestar {

struct MvnEstimate {
  double value = 0.0;
  double error = 0.0;  ///< three standard errors across randomized lattice shifts
  long points = 0;
};

/// Pr(X <= upper) for X ~ N(0, correlation), by Genz's separation-of-variables
/// transform integrated with randomly shifted Richtmyer lattice rules.
/// Semidefinite correlation matrices are accepted: dimensions with a vanishing
/// Cholesky pivot become deterministic constraints.
MvnEstimate mvn_cdf(const Eigen::MatrixXd& correlation, const Eigen::VectorXd& upper, std::uint64_t seed,
                    double abs_error = 5e-4, long max_points = 1L << 18);

/// Fast inverse standard normal CDF (Wichura AS241, ~1e-16 relative accuracy).
double inverse_normal(double p);

}  // namespace fivestar

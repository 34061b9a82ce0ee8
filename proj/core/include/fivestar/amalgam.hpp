#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fivestar/aftavg.hpp"

namespace fivestar {

/// One stratum's contribution: size, effect (positive favors arm A) and its variance.
struct StratumEstimate {
  int stratum = 0;
  double n = 0.0;
  double delta = 0.0;
  double variance = 0.0;
};

struct CombinedZ {
  double z_i = 0.0;   ///< sum n d / sqrt(sum n^2 V)
  double z_ii = 0.0;  ///< sum n Z_q / sqrt(sum n^2)
  double rho = 1.0;   ///< estimated correlation of Z_I and Z_II
};

CombinedZ combine_z(std::span<const StratumEstimate> strata);

/// Standard bivariate normal CDF on the diagonal, Phi2(z, z; rho), rho in [0, 1].
double bivariate_normal_equal_cdf(double z, double rho);
/// Density of max(Z1, Z2) for standard normals with correlation rho.
double zmax_density(double z, double rho);
/// Pr(max(Z1, Z2) > z).
double zmax_p(double z, double rho);
/// z with zmax_p(z, rho) = alpha.
double zmax_quantile(double alpha, double rho);

enum class Track { tr, hr };
enum class WeightScheme { by_n, by_n_over_sd };

std::string to_string(Track t);
std::string to_string(WeightScheme w);

struct AmalgamResult {
  Track track = Track::tr;
  double z_i = 0.0;
  double z_ii = 0.0;
  double z_max = 0.0;
  double rho = 1.0;
  double p = 0.5;
  WeightScheme scheme = WeightScheme::by_n;
  double delta = 0.0;     ///< combined effect, positive favors arm A
  double variance = 0.0;  ///< V(delta)
  double critical = 0.0;  ///< zmax quantile used for the interval
  double lower = 0.0;     ///< interval for delta
  double upper = 0.0;
  /// e^delta for the time ratio; e^-delta (a hazard ratio) for the HR track.
  double estimate = 1.0;
  double estimate_lower = 1.0;
  double estimate_upper = 1.0;
  bool reject = false;
  double alpha = 0.05;
  double test_level = 0.025;
  std::vector<int> strata_used;
  std::vector<int> strata_excluded;
};

AmalgamResult amalgamate(std::span<const StratumEstimate> strata, Track track = Track::tr, double alpha = 0.05,
                         double test_level = 0.025);

/// Time-ratio track over the non-degenerate strata.
AmalgamResult amalgamate_tr(std::span<const StratumEffect> effects, double alpha = 0.05, double test_level = 0.025);
/// Hazard-ratio track using the per-stratum Cox fits, sign flipped so positive favors arm A.
AmalgamResult amalgamate_hr(std::span<const StratumEffect> effects, double alpha = 0.05, double test_level = 0.025);

nlohmann::json to_json(const AmalgamResult& r);

}  // namespace fivestar

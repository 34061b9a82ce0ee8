#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fivestar/survdata.hpp"

namespace fivestar {

enum class Distribution { weibull, lognormal, loglogistic };

std::string to_string(Distribution d);
Distribution distribution_from_string(const std::string& text);
std::vector<Distribution> all_distributions();

/// log T = mu + delta * I(arm A) + sigma * eps. Parameters are optimized as
/// (mu, delta, log sigma).
struct AftFit {
  Distribution distribution = Distribution::weibull;
  double mu = 0.0;
  double delta = 0.0;
  double sigma = 1.0;
  double loglik = 0.0;
  double aic = 0.0;
  double var_delta = 0.0;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  ///< in (mu, delta, log sigma)
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
  std::string message;
};

/// Censored log-likelihood with gradient and Hessian in (mu, delta, log sigma).
/// Includes the -log t Jacobian of event times.
struct AftEvaluation {
  double loglik = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
  Eigen::Matrix3d hessian = Eigen::Matrix3d::Zero();
};

AftEvaluation aft_evaluate(Distribution d, std::span<const double> times, std::span<const int> events,
                           std::span<const Arm> arms, const Eigen::Vector3d& theta);

struct AftOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
};

AftFit aft_fit(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
               Distribution d, const AftOptions& options = {});

struct ModelAverage {
  double delta = 0.0;
  double variance = 0.0;
  std::vector<double> weights;  ///< aligned with the input fits; 0 for excluded fits
  std::size_t used = 0;
};

/// AIC weights, weighted effect and the square-of-weighted-root variance.
ModelAverage model_average(std::span<const AftFit> fits);

/// Log hazard ratio implied by a Weibull AFT fit: beta = -delta / sigma.
struct PhIdentity {
  double beta = 0.0;
  double theta = 1.0;
};
PhIdentity weibull_ph_identity_check(const AftFit& weibull);

struct HrBlock {
  bool available = false;
  double log_hr = 0.0;  ///< arm A versus arm B
  double se = 0.0;
  double hr = 1.0;
  double lower = 1.0;
  double upper = 1.0;
  double pr_hr_lt_1 = 0.5;
  double gt_p = 1.0;
  std::string message;
};

struct StratumOptions {
  double alpha = 0.05;
  double flag_threshold = 0.20;
  std::vector<Distribution> distributions = all_distributions();
  AftOptions aft{};
};

struct StratumEffect {
  int stratum = 0;
  std::size_t n = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::size_t events_a = 0;
  std::size_t events_b = 0;
  bool degenerate = false;
  std::string message;
  std::vector<AftFit> fits;
  std::vector<double> weights;
  double delta = 0.0;
  double variance = 0.0;
  double tr = 1.0;
  double tr_lower = 1.0;
  double tr_upper = 1.0;
  double pr_tr_gt_1 = 0.5;
  bool flagged = false;
  HrBlock hr;
};

StratumEffect stratum_summary(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                              int stratum, const StratumOptions& options = {});

/// TR interval and Pr(TR > 1) from a model-averaged effect.
void fill_time_ratio(StratumEffect& effect, double alpha, double flag_threshold);

nlohmann::json to_json(const AftFit& fit);
nlohmann::json to_json(const StratumEffect& effect);

}  // namespace fivestar

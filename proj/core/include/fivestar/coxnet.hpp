#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fivestar/survdata.hpp"

namespace fivestar {

// ---------------------------------------------------------------------------
// Unpenalized Cox regression (Breslow ties)
// ---------------------------------------------------------------------------

struct CoxOptions {
  int max_iterations = 50;
  double score_tolerance = 1e-8;
  double loglik_tolerance = 1e-10;  ///< relative change
  /// |beta * sd(x)| above this marks a monotone likelihood (non-convergence).
  double divergence_bound = 15.0;
};

struct CoxFit {
  Eigen::VectorXd coef;        ///< log hazard ratios
  Eigen::MatrixXd covariance;  ///< inverse observed information at coef
  double loglik = 0.0;
  double loglik_null = 0.0;
  Eigen::VectorXd score_at_zero;
  Eigen::MatrixXd information_at_zero;
  double score_chisq = 0.0;  ///< U' I^{-1} U at beta = 0
  int iterations = 0;
  bool converged = false;
  std::vector<int> strata;

  double se(Eigen::Index j) const { return std::sqrt(covariance(j, j)); }
  /// Wald z of coefficient j.
  double wald_z(Eigen::Index j) const { return coef(j) / se(j); }
  /// Signed score z for a single covariate fit (U / sqrt(I) at zero).
  double score_z() const;
};

/// Newton-Raphson on the Breslow partial likelihood. `x` is n x k. When
/// `strata` is nonempty risk sets are formed within strata.
/// Throws NumericalError on a rank-deficient design.
CoxFit cox_fit(std::span<const double> times, std::span<const int> events, const Eigen::MatrixXd& x,
               std::span<const int> strata = {}, const CoxOptions& options = {});

/// Cox model with the arm indicator (1 = arm A) as the only covariate.
CoxFit cox_fit_arm(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                   std::span<const int> strata = {}, const CoxOptions& options = {});
CoxFit cox_fit_arm(const TrialDataset& data, std::span<const int> strata = {}, const CoxOptions& options = {});

/// Breslow log partial likelihood of linear predictor `eta`.
double cox_loglik(std::span<const double> times, std::span<const int> events, std::span<const double> eta);

/// Grambsch-Therneau score test of proportional hazards on scaled Schoenfeld
/// residuals against g(t) = 1 - KM(t-).
struct GtResult {
  std::vector<double> chisq;
  std::vector<double> p;
  double global_chisq = 0.0;
  double global_p = 1.0;
  int df = 0;
};

GtResult gt_test(const CoxFit& fit, std::span<const double> times, std::span<const int> events,
                 const Eigen::MatrixXd& x);

// ---------------------------------------------------------------------------
// Elastic-net Cox regression
// ---------------------------------------------------------------------------

/// Numeric design built from a subset of covariates: continuous, binary and
/// ordinal covariates enter as-is (ordinal by level index), nominal ones as
/// indicators for every level but the first.
struct Design {
  Eigen::MatrixXd x;
  std::vector<std::string> column_names;
  std::vector<std::size_t> source;  ///< covariate index in the dataset per column
};

Design build_design(const BlindedDataset& data, std::span<const std::size_t> covariates);
Design build_design(const BlindedDataset& data);

struct EnetOptions {
  std::size_t lambda_count = 100;
  double lambda_min_ratio = 1e-3;
  double tolerance = 1e-7;
  int max_outer = 200;
  int max_sweeps = 10000;
  /// Stop the path once the deviance ratio saturates: after `min_lambdas`
  /// values, when its gain drops below fdev times itself or it exceeds devmax.
  bool early_stop = true;
  double fdev = 1e-5;
  double devmax = 0.999;
  std::size_t min_lambdas = 5;
  /// Record the penalized objective after every outer iteration.
  bool trace = false;
};

/// Regularization path. Coefficients are on the original covariate scale.
/// With early stopping the path may be shorter than the requested grid.
struct EnetPath {
  double psi = 1.0;
  std::vector<double> lambdas;
  Eigen::MatrixXd coef;          ///< columns x lambdas
  std::vector<double> deviance;  ///< -2 log partial likelihood per lambda
  std::vector<bool> converged;
  /// Penalized objective (2/N loglik - penalty, standardized scale) per outer
  /// iteration, only filled when EnetOptions::trace is set.
  std::vector<std::vector<double>> objective_trace;
};

/// Smallest lambda at which every coefficient is zero (for psi > 0; psi is
/// floored at 1e-3 when forming the grid).
double enet_lambda_max(std::span<const double> times, std::span<const int> events, const Eigen::MatrixXd& x,
                       double psi);

/// Log-spaced grid from lambda_max down to ratio * lambda_max.
std::vector<double> enet_lambda_grid(double lambda_max, std::size_t count, double ratio);

/// Maximizes (2/N) log L(beta) - lambda [psi |beta|_1 + (1-psi)/2 |beta|^2] on
/// internally standardized covariates by cyclic coordinate descent.
EnetPath enet_path(std::span<const double> times, std::span<const int> events, const Eigen::MatrixXd& x, double psi,
                   std::span<const double> lambdas = {}, const EnetOptions& options = {});
EnetPath enet_path(const BlindedDataset& data, double psi, std::span<const double> lambdas = {},
                   const EnetOptions& options = {});

enum class LambdaRule { lambda_min, lambda_1se };

struct CvOptions {
  std::vector<double> psi_grid = default_psi_grid();
  std::size_t folds = 10;
  LambdaRule rule = LambdaRule::lambda_min;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  EnetOptions enet{};

  static std::vector<double> default_psi_grid();
};

struct CvCell {
  double psi = 0.0;
  double lambda = 0.0;
  double mean_deviance = 0.0;
  double se = 0.0;
};

/// Cross-validated elastic-net fit and the covariates it keeps.
struct ElasticNetFit {
  double psi = 0.0;
  double lambda = 0.0;
  std::size_t lambda_index = 0;
  std::vector<std::string> column_names;
  Eigen::VectorXd coef;  ///< original scale at (psi, lambda)
  std::vector<std::string> selected;            ///< covariate names
  std::vector<std::size_t> selected_indices;    ///< covariate indices in the dataset
  std::vector<CvCell> surface;                  ///< every (psi, lambda) cell
  EnetPath path;                                ///< full-data path at the chosen psi
};

ElasticNetFit cv_select(const BlindedDataset& data, const CvOptions& options = {});
ElasticNetFit cv_select(const BlindedDataset& data, std::span<const std::size_t> covariates,
                        const CvOptions& options = {});

/// Fold label (0..folds-1) per subject; every fold holds at least one event.
std::vector<int> make_folds(std::span<const int> events, std::size_t folds, std::uint64_t seed);

nlohmann::json to_json(const ElasticNetFit& fit);

}  // namespace fivestar

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fivestar/survdata.hpp"

namespace fivestar {

/// Right-continuous step function over distinct event times.
///
/// `initial` is the value before the first knot (1 for a survival curve,
/// 0 for a cumulative hazard). Counts are the risk-set size and number of
/// events at each knot.
struct StepFunction {
  double initial = 1.0;
  std::vector<double> knots;
  std::vector<double> values;
  std::vector<double> variances;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;

  std::size_t size() const { return knots.size(); }
  /// Value at t (right-continuous).
  double at(double t) const;
  /// Left limit at t.
  double before(double t) const;
  /// Integral of the step function over [0, tau].
  double integral(double tau) const;
};

StepFunction kaplan_meier(std::span<const double> times, std::span<const int> events);
StepFunction nelson_aalen(std::span<const double> times, std::span<const int> events);

/// Writes `time,value,variance` rows, starting with the value at time 0.
void write_step_csv(std::ostream& out, const StepFunction& f);

/// Logrank scores event_i - Lambda(t_i) with the pooled Nelson-Aalen estimate.
std::vector<double> logrank_scores(std::span<const double> times, std::span<const int> events);
std::vector<double> logrank_scores(const BlindedDataset& data);

/// Per distinct event time: risk-set sizes, events, and the pooled KM left limit.
struct RiskTableRow {
  double time = 0.0;
  double n = 0.0;
  double n_a = 0.0;
  double d = 0.0;
  double d_a = 0.0;
  double surv_left = 1.0;
};

std::vector<RiskTableRow> two_arm_risk_table(std::span<const double> times, std::span<const int> events,
                                             std::span<const Arm> arms);

/// Fleming-Harrington G(rho, gamma) statistic. Negative z favors arm A.
struct WeightedLogrankResult {
  double rho = 0.0;
  double gamma = 0.0;
  double numerator = 0.0;
  double variance = 0.0;
  double z = 0.0;
};

WeightedLogrankResult weighted_logrank(std::span<const double> times, std::span<const int> events,
                                       std::span<const Arm> arms, double rho, double gamma);
WeightedLogrankResult weighted_logrank(const TrialDataset& data, double rho, double gamma);

struct LogrankTest {
  double z = 0.0;
  double p = 0.5;  ///< one-tailed, small when arm A does better
};

LogrankTest logrank_test(const TrialDataset& data);

struct MaxComboOptions {
  /// Replace the multivariate-normal p-value with a label-permutation p-value.
  bool permutation = false;
  int permutation_reps = 2000;
  std::uint64_t seed = 20240917;
  double abs_error = 5e-4;
};

struct MaxComboResult {
  /// Z for (rho, gamma) = (0,0), (1,0), (1,1), (0,1).
  std::array<double, 4> z{};
  Eigen::Matrix4d correlation = Eigen::Matrix4d::Identity();
  double statistic = 0.0;  ///< min of z
  double p = 0.5;          ///< one-tailed
  double p_error = 0.0;    ///< Monte Carlo error estimate of p
};

MaxComboResult maxcombo(const TrialDataset& data, const MaxComboOptions& options = {});
MaxComboResult maxcombo(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                        const MaxComboOptions& options = {});

/// Pr(min_k Z_k <= statistic) for Z ~ N(0, correlation).
double maxcombo_p(double statistic, const Eigen::Matrix4d& correlation, std::uint64_t seed = 20240917,
                  double abs_error = 5e-4, double* error_estimate = nullptr);

/// Label-permutation reference p-value for the MaxCombo statistic.
double maxcombo_permutation_p(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                              int reps, std::uint64_t seed);

struct RmstResult {
  double tau = 0.0;
  double rmst_a = 0.0;
  double rmst_b = 0.0;
  double difference = 0.0;  ///< rmst_a - rmst_b
  double variance = 0.0;
  double z = 0.0;  ///< (rmst_b - rmst_a) / se: negative favors A
  double p = 0.5;  ///< one-tailed, Phi(z)
};

/// Largest admissible horizon: min over arms of the largest observed time.
double rmst_max_tau(std::span<const double> times, std::span<const Arm> arms);
/// Restricted mean under a KM curve with its Greenwood-type variance.
std::pair<double, double> restricted_mean(const StepFunction& km, double tau);

RmstResult rmst_compare(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                        std::optional<double> tau = std::nullopt);
RmstResult rmst_compare(const TrialDataset& data, std::optional<double> tau = std::nullopt);

struct StratifiedLogrankResult {
  double numerator = 0.0;
  double variance = 0.0;
  double z = 0.0;
  double p = 0.5;
  std::size_t strata_used = 0;
  std::vector<std::string> warnings;
};

StratifiedLogrankResult stratified_logrank(std::span<const double> times, std::span<const int> events,
                                           std::span<const Arm> arms, std::span<const int> strata);
StratifiedLogrankResult stratified_logrank(const TrialDataset& data, std::span<const int> strata);

/// Epanechnikov-smoothed hazard from Nelson-Aalen increments, evaluated on `grid`.
std::vector<double> smoothed_hazard(const StepFunction& cumulative_hazard, std::span<const double> grid,
                                    double bandwidth);

}  // namespace fivestar

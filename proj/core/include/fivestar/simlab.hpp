#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fivestar/pipeline.hpp"
#include "fivestar/stats.hpp"
#include "fivestar/survdata.hpp"

namespace fivestar {

enum class Scenario { null, alt1, alt2, alt3 };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& text);

/// Four true risk strata defined by X1, X2 and X26 <= cut; Weibull survival
/// with proportional hazards within each stratum.
struct ScenarioSpec {
  Scenario scenario = Scenario::null;
  std::array<double, 4> theta{1.0, 1.0, 1.0, 1.0};
  std::array<double, 4> kappa{2.5, 3.0, 3.5, 4.0};
  std::array<double, 4> median_b{0.5, 0.7, 0.9, 1.1};
  std::size_t n_per_arm = 300;
  std::size_t target_events = 330;
  double accrual = 0.75;
  std::size_t covariates = 50;
  std::size_t binary_covariates = 25;
  double trio_correlation = 0.2;
  double noise_sd = 0.15;
  double cut = 0.4;

  static ScenarioSpec make(Scenario s);

  double eta_b(std::size_t stratum) const;
  double eta_a(std::size_t stratum) const;
  /// exp(sum f_i Delta_i) with Delta_i = -ln(theta_i) / kappa_i and f_i = 1/4.
  double true_time_ratio() const;
  /// exp(sum f_i ln theta_i).
  double true_hazard_ratio() const;
  /// True stratum (0-based) of a covariate vector.
  std::size_t stratum_of(std::span<const double> x) const;
  std::vector<CovariateSpec> covariate_specs() const;
};

/// Latent Gaussian model behind the covariates of one trial.
struct CovariateModel {
  Eigen::MatrixXd target;              ///< requested observed-scale correlations
  Eigen::MatrixXd latent_correlation;  ///< after mapping and PSD projection
  Eigen::MatrixXd factor;              ///< latent = factor * N(0, I)
  std::size_t binary = 25;

  Eigen::VectorXd draw(Rng& rng) const;
};

CovariateModel sample_covariate_model(const ScenarioSpec& spec, Rng& rng);

/// n x p covariate matrix from a freshly sampled model.
Eigen::MatrixXd gen_covariates(std::size_t n, std::uint64_t seed, const ScenarioSpec& spec = {});

struct GeneratedTrial {
  TrialDataset data;
  std::vector<int> true_stratum;  ///< 1..4 per subject
  double calendar_cutoff = 0.0;
};

GeneratedTrial gen_trial(const ScenarioSpec& spec, std::uint64_t seed);

enum class Method { five_star_tr, five_star_hr, logrank, stratified, maxcombo, rmst };
constexpr std::array<Method, 6> kAllMethods{Method::five_star_tr, Method::five_star_hr, Method::logrank,
                                            Method::stratified,   Method::maxcombo,     Method::rmst};
std::string to_string(Method m);

struct MethodOutcome {
  bool ok = false;
  bool reject = false;
  double p = 1.0;
  std::optional<double> estimate;
  std::optional<double> lower;
  std::optional<double> upper;
};

struct ReplicateRecord {
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::array<MethodOutcome, 6> outcomes{};
  std::vector<std::string> selected;
  std::vector<std::string> strata_covariates;
  std::size_t final_strata = 0;
};

struct SimOptions {
  std::size_t reps = 2000;
  std::uint64_t seed = 7;
  std::size_t workers = 1;
  double level = 0.025;
  PValueMode ctree_mode = PValueMode::asymptotic;
  /// Called after each finished replicate with the number done so far.
  std::function<void(std::size_t)> progress;
};

/// Analysis settings used for every replicate.
AnalysisConfig simulation_config(const ScenarioSpec& spec, const SimOptions& options);

ReplicateRecord run_replicate(const ScenarioSpec& spec, const AnalysisConfig& config, std::size_t rep,
                              std::uint64_t seed, double level);

struct SimResult {
  std::string scenario;
  std::string method;
  std::size_t reps = 0;
  std::size_t failures = 0;
  double rejection_rate = 0.0;
  double mc_se = 0.0;
  std::optional<double> mean_percent_bias;
  std::optional<double> coverage;
  double runtime_seconds = 0.0;
};

/// Elastic-net and stratification recovery of the prognostic trio.
struct RecoverySummary {
  std::size_t reps = 0;
  double trio_selected = 0.0;       ///< X1, X2 and X26 all advance
  double each_selected[3]{};        ///< per trio member
  double strata_use_trio = 0.0;     ///< final strata use at least the trio
  double strata_only_trio = 0.0;    ///< final strata use exactly the trio
  double mean_selected = 0.0;
  double mean_strata_covariates = 0.0;
};

struct ScenarioRun {
  ScenarioSpec spec;
  std::vector<ReplicateRecord> replicates;
  std::vector<SimResult> results;
  double runtime_seconds = 0.0;
};

ScenarioRun run_scenario(const ScenarioSpec& spec, const SimOptions& options);

/// Metrics over the first `reps` replicates (all when zero).
std::vector<SimResult> summarize_replicates(const ScenarioSpec& spec, const std::vector<ReplicateRecord>& records,
                                            std::size_t reps = 0);
RecoverySummary recovery(const std::vector<ReplicateRecord>& records, std::size_t reps = 0);

/// Operating-characteristics table: rates in percent rounded to 0.01 in CSV, raw proportions in JSON.
void write_table2_csv(std::ostream& out, const std::vector<SimResult>& results);
nlohmann::json table2_json(const std::vector<SimResult>& results, const std::vector<RecoverySummary>& recoveries = {},
                           const std::vector<std::string>& scenarios = {});
nlohmann::json to_json(const ReplicateRecord& r);
nlohmann::json to_json(const RecoverySummary& r);

}  // namespace fivestar

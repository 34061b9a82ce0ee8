#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fivestar/aftavg.hpp"
#include "fivestar/amalgam.hpp"
#include "fivestar/coxnet.hpp"
#include "fivestar/nonparam.hpp"
#include "fivestar/strata.hpp"
#include "fivestar/survdata.hpp"

namespace fivestar {

struct EnetConfig {
  bool enabled = true;  ///< when off every candidate covariate advances
  std::vector<double> psi_grid = CvOptions::default_psi_grid();
  std::size_t folds = 10;
  LambdaRule rule = LambdaRule::lambda_min;
  std::uint64_t seed = 1;
};

struct CtreeConfig {
  double alpha_3a = 0.10;
  double alpha_3b = 0.20;
  std::size_t min_node = 40;
  std::size_t perm_reps = 9999;
  PValueMode mode = PValueMode::permutation;
  std::uint64_t seed = 1;
};

struct AftConfig {
  std::vector<Distribution> distributions = all_distributions();
  double alpha = 0.05;
  double flag_threshold = 0.20;
};

struct AmalgamConfig {
  double alpha = 0.05;
  double test_level = 0.025;
};

/// Factor for the stratified comparator. Continuous covariates are split at
/// `cut` (value > cut is the second level); categorical ones use their levels.
struct StratificationFactor {
  std::string covariate;
  std::optional<double> cut;
};

struct ComparatorConfig {
  bool logrank = true;
  bool cox = true;
  bool stratified = false;
  std::vector<StratificationFactor> factors;
  bool maxcombo = true;
  MaxComboOptions maxcombo_options{};
  bool rmst = true;
  std::optional<double> tau;
};

struct AnalysisConfig {
  DataSchema schema;
  EnetConfig enet;
  CtreeConfig ctree;
  AftConfig aft;
  AmalgamConfig amalgam;
  ComparatorConfig comparators;
  std::size_t workers = 1;
  /// Build KM and hazard plot tables.
  bool plot_tables = true;

  void validate() const;
  /// Derives every stochastic component's seed from one master seed.
  void reseed(std::uint64_t seed);
};

AnalysisConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const AnalysisConfig& config);

/// Steps 2 and 3: everything computed without arm labels.
struct BlindedStage {
  std::vector<std::string> candidates;
  std::optional<ElasticNetFit> enet;
  std::vector<std::string> selected;
  std::vector<std::size_t> selected_indices;
  std::optional<RiskTree> tree;
  StratumAssignment assignment;
};

BlindedStage run_blinded_steps(const BlindedDataset& blinded, const AnalysisConfig& config);

struct CoxSummary {
  double log_hr = 0.0;
  double se = 0.0;
  double hr = 1.0;
  double lower = 1.0;
  double upper = 1.0;
  double z = 0.0;
  double p = 0.5;  ///< one-tailed Wald, small when arm A does better
  std::optional<double> gt_p;
};

struct ComparatorBlock {
  std::optional<LogrankTest> logrank;
  std::optional<CoxSummary> cox;
  std::optional<StratifiedLogrankResult> stratified_logrank;
  std::optional<CoxSummary> stratified_cox;
  std::optional<MaxComboResult> maxcombo;
  std::optional<RmstResult> rmst;
  std::map<std::string, std::string> errors;
};

ComparatorBlock run_comparators(const TrialDataset& data, const AnalysisConfig& config);

/// Stratum label per subject from the comparator's declared factors (full cross).
std::vector<int> factor_strata(const TrialDataset& data, const std::vector<StratificationFactor>& factors);

struct CurveTable {
  std::string scope;
  std::string arm;
  StepFunction curve;
};

struct HazardTable {
  std::string scope;
  std::string arm;
  double bandwidth = 0.0;
  std::vector<double> grid;
  std::vector<double> hazard;
};

struct AnalysisReport {
  std::size_t n = 0;
  Diagnostics diagnostics;
  BlindedStage blinded;
  std::vector<StratumEffect> effects;
  std::optional<AmalgamResult> tr;
  std::optional<AmalgamResult> hr;
  std::vector<std::string> notes;
  ComparatorBlock comparators;
  std::vector<CurveTable> km_curves;
  std::vector<HazardTable> hazards;
};

/// Steps 1-5 plus comparators.
AnalysisReport run_5star(const TrialDataset& data, const AnalysisConfig& config);

nlohmann::json to_json(const CoxSummary& cox);
nlohmann::json to_json(const ComparatorBlock& block);
nlohmann::json to_json(const AnalysisReport& report);

/// Writes report.json, strata.csv, forest.csv, km_curves.csv, hazard.csv and cv_surface.csv.
void emit_report(const AnalysisReport& report, const std::filesystem::path& out_dir);

void write_forest_csv(std::ostream& out, const AnalysisReport& report);
void write_strata_csv(std::ostream& out, const AnalysisReport& report);
void write_km_csv(std::ostream& out, const std::vector<CurveTable>& curves);
void write_hazard_csv(std::ostream& out, const std::vector<HazardTable>& hazards);
void write_cv_surface_csv(std::ostream& out, const std::vector<CvCell>& surface);

}  // namespace fivestar

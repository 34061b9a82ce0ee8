#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fivestar/survdata.hpp"

namespace fivestar {

/// Binary split. Continuous and ordinal covariates send `value <= threshold`
/// left; binary and nominal covariates send the levels in `left_levels` left.
struct SplitRule {
  std::string covariate;
  std::size_t covariate_index = 0;
  CovariateKind kind = CovariateKind::continuous;
  double threshold = 0.0;
  std::vector<int> left_levels;
  std::vector<std::string> level_names;  ///< labels of every level, for reporting

  bool goes_left(double value) const;
};

struct TreeNode {
  int id = 0;
  int depth = 0;
  std::size_t size = 0;
  std::size_t events = 0;
  /// Sidak-adjusted minimum p-value at this node (1 when no test was run).
  double p_adjusted = 1.0;
  /// Unadjusted p of the winning covariate.
  double p_raw = 1.0;
  std::optional<SplitRule> split;
  int left = -1;
  int right = -1;
  int leaf = -1;  ///< leaf index for terminal nodes

  bool terminal() const { return !split.has_value(); }
};

/// Fitted partition. Node 0 is the root; leaves are numbered depth first,
/// left before right.
struct RiskTree {
  std::vector<TreeNode> nodes;
  std::vector<int> leaf_of;  ///< leaf per subject of the growing data
  std::size_t leaf_count = 1;

  /// Leaf reached by a covariate vector indexed like the growing data.
  int leaf_for(std::span<const double> covariates) const;
  /// Leaf per subject of `data`, matching split covariates by name.
  std::vector<int> apply(const BlindedDataset& data) const;
  std::vector<int> apply(const TrialDataset& data) const;
  /// Names of the covariates used in any split, in first-use order.
  std::vector<std::string> split_covariates() const;
  /// Node ids of the terminal nodes, by leaf index.
  std::vector<int> leaf_nodes() const;

  nlohmann::json to_json() const;
};

enum class PValueMode { permutation, asymptotic };

struct CtreeOptions {
  double alpha = 0.10;
  std::size_t min_node = 40;
  std::size_t perm_reps = 9999;
  PValueMode mode = PValueMode::permutation;
  std::uint64_t seed = 1;
};

/// Conditional-inference tree on within-node logrank scores.
RiskTree ctree_grow(const BlindedDataset& data, std::span<const std::size_t> covariates,
                    const CtreeOptions& options = {});

/// One covariate's association test at a node.
struct AssociationTest {
  double statistic = 0.0;  ///< |standardized linear statistic| or quadratic form
  double p = 1.0;
  int df = 1;
};

/// Permutation association test between a covariate column and scores.
/// `levels` > 0 requests the nominal quadratic form over that many levels.
AssociationTest association_test(std::span<const double> x, std::span<const double> scores, int levels,
                                 const CtreeOptions& options, std::uint64_t seed);

double sidak(double p, std::size_t m);

struct StratumAssignment {
  std::size_t k = 1;                   ///< preliminary strata
  std::size_t c = 1;                   ///< final strata
  std::vector<int> rank_of_leaf;       ///< 1 = highest risk
  std::vector<int> rank;               ///< per subject
  std::vector<int> stratum;            ///< final stratum per subject, 1..c
  std::vector<double> areas;           ///< restricted KM area per rank
  double minimax_time = 0.0;
  /// First and last preliminary rank of every final stratum.
  std::vector<std::pair<int, int>> ranges;
  std::optional<RiskTree> pooling_tree;

  std::vector<std::size_t> stratum_sizes() const;
  nlohmann::json to_json() const;
};

/// Ranks leaves by pooled restricted KM area on [0, minimax]; smallest area = rank 1.
StratumAssignment order_strata(const BlindedDataset& data, const RiskTree& tree);

/// Pools consecutive preliminary ranks with a second tree on the rank variable.
StratumAssignment pool_strata(const BlindedDataset& data, const StratumAssignment& preliminary,
                              const CtreeOptions& options);

/// Covariates whose splits separate subjects that end in different final strata.
std::vector<std::string> effective_split_covariates(const RiskTree& tree, const StratumAssignment& assignment);

}  // namespace fivestar

#include "fivestar/strata.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "fivestar/error.hpp"
#include "fivestar/nonparam.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

bool SplitRule::goes_left(double value) const {
  if (kind == CovariateKind::continuous || kind == CovariateKind::ordinal) return value <= threshold;
  const int level = static_cast<int>(std::lround(value));
  return std::find(left_levels.begin(), left_levels.end(), level) != left_levels.end();
}

double sidak(double p, std::size_t m) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("sidak: p must lie in [0, 1]");
  if (m == 0) throw ValidationError("sidak: m must be positive");
  if (p == 1.0) return 1.0;
  return -std::expm1(static_cast<double>(m) * std::log1p(-p));
}

namespace {

// Covariate as seen by the tree engine. Categorical values are level indices.
struct Feature {
  std::string name;
  std::size_t index = 0;
  CovariateKind kind = CovariateKind::continuous;
  std::vector<std::string> levels;
  std::span<const double> values;
};

constexpr std::size_t kExhaustiveLevels = 10;

double centered_ss(std::span<const double> a, double& mean_out) {
  const double m = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  double ss = 0.0;
  for (double v : a) ss += (v - m) * (v - m);
  mean_out = m;
  return ss;
}

bool is_linear(CovariateKind kind) { return kind != CovariateKind::nominal; }

struct SplitCandidate {
  SplitRule rule;
  double statistic = -1.0;
};

// Two-sample standardized score statistic for a left group.
double two_sample(double left_sum, double left_n, double n, double mean, double var) {
  const double v = left_n * (n - left_n) / (n - 1.0) * var;
  if (v <= 0.0) return 0.0;
  return std::abs(left_sum - left_n * mean) / std::sqrt(v);
}

std::optional<SplitCandidate> best_split(const Feature& f, std::span<const double> x, std::span<const double> a,
                                         std::size_t min_node) {
  const std::size_t n = x.size();
  double mean = 0.0;
  const double var = centered_ss(a, mean) / static_cast<double>(n);
  if (var <= 0.0 || n < 2 * min_node) return std::nullopt;
  const double nd = static_cast<double>(n);

  std::optional<SplitCandidate> best;
  auto consider = [&](double stat, SplitRule rule) {
    if (!best || stat > best->statistic) best = SplitCandidate{std::move(rule), stat};
  };
  SplitRule base;
  base.covariate = f.name;
  base.covariate_index = f.index;
  base.kind = f.kind;
  base.level_names = f.levels;

  if (f.kind == CovariateKind::continuous || f.kind == CovariateKind::ordinal) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    double sum = 0.0;
    for (std::size_t q = 0; q + 1 < n; ++q) {
      sum += a[order[q]];
      const double here = x[order[q]], next = x[order[q + 1]];
      if (here == next) continue;
      const std::size_t left = q + 1;
      if (left < min_node || n - left < min_node) continue;
      SplitRule rule = base;
      rule.threshold = f.kind == CovariateKind::continuous ? 0.5 * (here + next) : here;
      consider(two_sample(sum, static_cast<double>(left), nd, mean, var), std::move(rule));
    }
    return best;
  }

  // binary and nominal: level subsets
  std::map<int, std::pair<double, std::size_t>> by_level;  // level -> (score sum, count)
  for (std::size_t i = 0; i < n; ++i) {
    auto& cell = by_level[static_cast<int>(std::lround(x[i]))];
    cell.first += a[i];
    cell.second += 1;
  }
  std::vector<int> levels;
  for (const auto& [level, cell] : by_level) levels.push_back(level);
  const std::size_t k = levels.size();
  if (k < 2) return std::nullopt;

  auto evaluate_subset = [&](const std::vector<int>& left_levels) {
    double sum = 0.0;
    std::size_t count = 0;
    for (int l : left_levels) {
      sum += by_level[l].first;
      count += by_level[l].second;
    }
    if (count < min_node || n - count < min_node) return;
    SplitRule rule = base;
    rule.left_levels = left_levels;
    consider(two_sample(sum, static_cast<double>(count), nd, mean, var), std::move(rule));
  };

  if (k <= kExhaustiveLevels) {
    // the first observed level stays left so each partition is visited once
    const std::uint64_t subsets = std::uint64_t{1} << (k - 1);
    for (std::uint64_t mask = 0; mask + 1 < subsets; ++mask) {
      std::vector<int> left{levels[0]};
      for (std::size_t b = 1; b < k; ++b)
        if (mask & (std::uint64_t{1} << (b - 1))) left.push_back(levels[b]);
      evaluate_subset(left);
    }
  } else {
    std::vector<int> ordered = levels;
    std::stable_sort(ordered.begin(), ordered.end(), [&](int l, int r) {
      return by_level[l].first / static_cast<double>(by_level[l].second) <
             by_level[r].first / static_cast<double>(by_level[r].second);
    });
    std::vector<int> left;
    for (std::size_t q = 0; q + 1 < k; ++q) {
      left.push_back(ordered[q]);
      std::vector<int> sorted_left = left;
      std::sort(sorted_left.begin(), sorted_left.end());
      evaluate_subset(sorted_left);
    }
  }
  return best;
}

struct GrowContext {
  std::span<const double> times;
  std::span<const int> events;
  const std::vector<Feature>& features;
  const CtreeOptions& options;
  RiskTree tree;
};

int grow_node(GrowContext& ctx, const std::vector<std::size_t>& rows, int depth) {
  const int id = static_cast<int>(ctx.tree.nodes.size());
  ctx.tree.nodes.emplace_back();
  TreeNode node;
  node.id = id;
  node.depth = depth;
  node.size = rows.size();
  std::vector<double> t(rows.size());
  std::vector<int> e(rows.size());
  for (std::size_t q = 0; q < rows.size(); ++q) {
    t[q] = ctx.times[rows[q]];
    e[q] = ctx.events[rows[q]];
    node.events += e[q] ? 1 : 0;
  }
  const std::size_t min_node = ctx.options.min_node;

  std::optional<SplitCandidate> chosen;
  std::size_t chosen_feature = 0;
  if (node.events > 0 && rows.size() >= 2 * min_node) {
    const auto scores = logrank_scores(t, e);
    const std::size_t m = ctx.features.size();
    std::vector<double> p(m, 1.0);
    std::vector<std::vector<double>> columns(m, std::vector<double>(rows.size()));
    const std::uint64_t node_seed = mix_seed(ctx.options.seed, static_cast<std::uint64_t>(id));
    for (std::size_t f = 0; f < m; ++f) {
      const auto& feature = ctx.features[f];
      for (std::size_t q = 0; q < rows.size(); ++q) columns[f][q] = feature.values[rows[q]];
      const int levels = is_linear(feature.kind) ? 0 : static_cast<int>(feature.levels.size());
      p[f] = association_test(columns[f], scores, levels, ctx.options, node_seed).p;
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
    node.p_raw = p[order[0]];
    node.p_adjusted = sidak(node.p_raw, m);
    for (std::size_t f : order) {
      if (sidak(p[f], m) >= ctx.options.alpha) break;
      chosen = best_split(ctx.features[f], columns[f], scores, min_node);
      if (chosen) {
        chosen_feature = f;
        node.p_raw = p[f];
        node.p_adjusted = sidak(p[f], m);
        break;
      }
    }
  }

  if (chosen) {
    std::vector<std::size_t> left, right;
    const auto& feature = ctx.features[chosen_feature];
    for (std::size_t r : rows) (chosen->rule.goes_left(feature.values[r]) ? left : right).push_back(r);
    node.split = chosen->rule;
    ctx.tree.nodes[static_cast<std::size_t>(id)] = node;
    const int l = grow_node(ctx, left, depth + 1);
    const int r = grow_node(ctx, right, depth + 1);
    ctx.tree.nodes[static_cast<std::size_t>(id)].left = l;
    ctx.tree.nodes[static_cast<std::size_t>(id)].right = r;
  } else {
    ctx.tree.nodes[static_cast<std::size_t>(id)] = node;
    for (std::size_t r : rows) ctx.tree.leaf_of[r] = id;  // node id for now, relabelled below
  }
  return id;
}

RiskTree grow(std::span<const double> times, std::span<const int> events, const std::vector<Feature>& features,
              const CtreeOptions& options) {
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ValidationError("ctree: alpha must lie in (0, 1)");
  if (options.min_node < 1) throw ValidationError("ctree: min_node must be positive");
  if (options.mode == PValueMode::permutation && options.perm_reps < 1)
    throw ValidationError("ctree: perm_reps must be positive");
  GrowContext ctx{times, events, features, options, {}};
  ctx.tree.leaf_of.assign(times.size(), -1);
  std::vector<std::size_t> rows(times.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  grow_node(ctx, rows, 0);

  // depth-first leaf numbering (nodes were created in preorder)
  std::vector<int> leaf_of_node(ctx.tree.nodes.size(), -1);
  int next = 0;
  for (auto& node : ctx.tree.nodes)
    if (node.terminal()) {
      node.leaf = next;
      leaf_of_node[static_cast<std::size_t>(node.id)] = next++;
    }
  for (auto& l : ctx.tree.leaf_of) l = leaf_of_node[static_cast<std::size_t>(l)];
  ctx.tree.leaf_count = static_cast<std::size_t>(next);
  return std::move(ctx.tree);
}

}  // namespace

AssociationTest association_test(std::span<const double> x, std::span<const double> scores, int levels,
                                 const CtreeOptions& options, std::uint64_t seed) {
  const std::size_t n = x.size();
  if (scores.size() != n) throw ValidationError("association_test: length mismatch");
  AssociationTest out;
  if (n < 2) return out;
  double a_mean = 0.0;
  const double a_ss = centered_ss(scores, a_mean);
  if (a_ss <= 0.0) return out;
  const double nd = static_cast<double>(n);
  const double sigma2 = a_ss / nd;

  std::function<double(std::span<const std::size_t>)> statistic;
  std::vector<double> gc;
  std::vector<int> level_index;
  std::vector<double> level_count;
  if (levels <= 0) {
    double g_mean = 0.0;
    const double g_ss = centered_ss(x, g_mean);
    if (g_ss <= 0.0) return out;
    gc.resize(n);
    for (std::size_t i = 0; i < n; ++i) gc[i] = x[i] - g_mean;
    const double sd = std::sqrt(sigma2 * nd / (nd - 1.0) * g_ss);
    statistic = [&, sd](std::span<const std::size_t> perm) {
      double t = 0.0;
      for (std::size_t i = 0; i < n; ++i) t += gc[i] * scores[perm[i]];
      return std::abs(t) / sd;
    };
    out.df = 1;
  } else {
    // relabel observed levels
    std::map<int, int> observed;
    for (double v : x) observed.emplace(static_cast<int>(std::lround(v)), 0);
    if (observed.size() < 2) return out;
    int next = 0;
    for (auto& [level, slot] : observed) slot = next++;
    level_index.resize(n);
    level_count.assign(observed.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      level_index[i] = observed[static_cast<int>(std::lround(x[i]))];
      level_count[static_cast<std::size_t>(level_index[i])] += 1.0;
    }
    const double factor = (nd - 1.0) / (nd * sigma2);
    statistic = [&, factor](std::span<const std::size_t> perm) {
      std::vector<double> sums(level_count.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) sums[static_cast<std::size_t>(level_index[i])] += scores[perm[i]];
      double q = 0.0;
      for (std::size_t k = 0; k < sums.size(); ++k) {
        const double u = sums[k] - level_count[k] * a_mean;
        q += u * u / level_count[k];
      }
      return factor * q;
    };
    out.df = static_cast<int>(observed.size()) - 1;
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  out.statistic = statistic(perm);
  if (options.mode == PValueMode::asymptotic) {
    out.p = levels <= 0 ? 2.0 * normal_sf(out.statistic) : chisq_sf(out.statistic, out.df);
    return out;
  }
  Rng rng(seed);
  const double bar = out.statistic * (1.0 - 1e-12);
  std::size_t exceed = 0;
  for (std::size_t b = 0; b < options.perm_reps; ++b) {
    shuffle(perm, rng);
    if (statistic(perm) >= bar) ++exceed;
  }
  out.p = static_cast<double>(exceed + 1) / static_cast<double>(options.perm_reps + 1);
  return out;
}

RiskTree ctree_grow(const BlindedDataset& data, std::span<const std::size_t> covariates,
                    const CtreeOptions& options) {
  if (covariates.empty()) throw ValidationError("ctree_grow: no covariates");
  std::vector<Feature> features;
  for (std::size_t c : covariates) {
    const auto& spec = data.specs().at(c);
    std::vector<std::string> levels = spec.levels;
    if (spec.kind == CovariateKind::binary) levels = {"0", "1"};
    features.push_back(Feature{spec.name, c, spec.kind, levels, data.column(c)});
  }
  return grow(data.times(), data.events(), features, options);
}

int RiskTree::leaf_for(std::span<const double> covariates) const {
  const TreeNode* node = &nodes.at(0);
  while (!node->terminal()) {
    const auto& rule = *node->split;
    node = &nodes[static_cast<std::size_t>(rule.goes_left(covariates[rule.covariate_index]) ? node->left
                                                                                             : node->right)];
  }
  return node->leaf;
}

namespace {

template <class ValueOf>
std::vector<int> apply_tree(const RiskTree& tree, std::size_t n, ValueOf value_of) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TreeNode* node = &tree.nodes.at(0);
    while (!node->terminal()) {
      const auto& rule = *node->split;
      node = &tree.nodes[static_cast<std::size_t>(rule.goes_left(value_of(i, rule.covariate)) ? node->left
                                                                                              : node->right)];
    }
    out[i] = node->leaf;
  }
  return out;
}

}  // namespace

std::vector<int> RiskTree::apply(const BlindedDataset& data) const {
  return apply_tree(*this, data.size(),
                    [&](std::size_t i, const std::string& name) { return data.value(i, data.covariate_index(name)); });
}

std::vector<int> RiskTree::apply(const TrialDataset& data) const {
  return apply_tree(*this, data.size(), [&](std::size_t i, const std::string& name) {
    return data.records()[i].covariates[data.covariate_index(name)];
  });
}

std::vector<std::string> RiskTree::split_covariates() const {
  std::vector<std::string> names;
  for (const auto& node : nodes)
    if (node.split && std::find(names.begin(), names.end(), node.split->covariate) == names.end())
      names.push_back(node.split->covariate);
  return names;
}

std::vector<int> RiskTree::leaf_nodes() const {
  std::vector<int> ids(leaf_count, -1);
  for (const auto& node : nodes)
    if (node.terminal()) ids[static_cast<std::size_t>(node.leaf)] = node.id;
  return ids;
}

namespace {

nlohmann::json node_json(const RiskTree& tree, int id) {
  const auto& node = tree.nodes[static_cast<std::size_t>(id)];
  nlohmann::json j;
  j["node"] = node.id;
  j["n"] = node.size;
  j["events"] = node.events;
  j["p_adjusted"] = node.p_adjusted;
  if (node.terminal()) {
    j["leaf"] = node.leaf;
    return j;
  }
  const auto& rule = *node.split;
  nlohmann::json split;
  split["covariate"] = rule.covariate;
  split["kind"] = to_string(rule.kind);
  if (rule.kind == CovariateKind::continuous) {
    split["threshold"] = rule.threshold;
  } else if (rule.kind == CovariateKind::ordinal) {
    split["threshold"] = rule.threshold;
    const auto level = static_cast<std::size_t>(std::lround(rule.threshold));
    if (level < rule.level_names.size()) split["threshold_level"] = rule.level_names[level];
  } else {
    nlohmann::json left = nlohmann::json::array();
    for (int l : rule.left_levels)
      left.push_back(static_cast<std::size_t>(l) < rule.level_names.size() ? rule.level_names[static_cast<std::size_t>(l)]
                                                                           : std::to_string(l));
    split["left_levels"] = left;
  }
  j["split"] = split;
  j["left"] = node_json(tree, node.left);
  j["right"] = node_json(tree, node.right);
  return j;
}

}  // namespace

nlohmann::json RiskTree::to_json() const {
  nlohmann::json j;
  j["leaves"] = leaf_count;
  j["root"] = node_json(*this, 0);
  return j;
}

std::vector<std::size_t> StratumAssignment::stratum_sizes() const {
  std::vector<std::size_t> sizes(c, 0);
  for (int s : stratum) sizes[static_cast<std::size_t>(s - 1)] += 1;
  return sizes;
}

nlohmann::json StratumAssignment::to_json() const {
  nlohmann::json j;
  j["preliminary_strata"] = k;
  j["final_strata"] = c;
  j["minimax_time"] = minimax_time;
  j["rank_of_leaf"] = rank_of_leaf;
  j["restricted_areas"] = areas;
  nlohmann::json r = nlohmann::json::array();
  for (const auto& [first, last] : ranges) r.push_back({first, last});
  j["rank_ranges"] = r;
  j["sizes"] = stratum_sizes();
  if (pooling_tree) j["pooling_tree"] = pooling_tree->to_json();
  return j;
}

StratumAssignment order_strata(const BlindedDataset& data, const RiskTree& tree) {
  const std::size_t k = tree.leaf_count;
  if (k == 0 || tree.leaf_of.size() != data.size()) throw ValidationError("order_strata: tree does not match data");
  std::vector<std::vector<double>> t(k);
  std::vector<std::vector<int>> e(k);
  const auto times = data.times();
  const auto events = data.events();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto leaf = static_cast<std::size_t>(tree.leaf_of[i]);
    t[leaf].push_back(times[i]);
    e[leaf].push_back(events[i]);
  }
  StratumAssignment out;
  out.k = k;
  out.minimax_time = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < k; ++l) {
    if (t[l].empty()) throw ValidationError("order_strata: empty leaf");
    out.minimax_time = std::min(out.minimax_time, *std::max_element(t[l].begin(), t[l].end()));
  }
  std::vector<double> area(k);
  for (std::size_t l = 0; l < k; ++l) area[l] = restricted_mean(kaplan_meier(t[l], e[l]), out.minimax_time).first;
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return area[a] < area[b]; });
  out.rank_of_leaf.assign(k, 0);
  for (std::size_t r = 0; r < k; ++r) {
    out.rank_of_leaf[order[r]] = static_cast<int>(r + 1);
    out.areas.push_back(area[order[r]]);
    out.ranges.emplace_back(static_cast<int>(r + 1), static_cast<int>(r + 1));
  }
  out.rank.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    out.rank[i] = out.rank_of_leaf[static_cast<std::size_t>(tree.leaf_of[i])];
  out.stratum = out.rank;
  out.c = k;
  return out;
}

StratumAssignment pool_strata(const BlindedDataset& data, const StratumAssignment& preliminary,
                              const CtreeOptions& options) {
  if (preliminary.rank.size() != data.size()) throw ValidationError("pool_strata: assignment does not match data");
  StratumAssignment out = preliminary;
  out.pooling_tree.reset();
  if (preliminary.k <= 1) {
    out.c = 1;
    out.stratum.assign(data.size(), 1);
    out.ranges = {{1, 1}};
    return out;
  }
  std::vector<double> level(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) level[i] = static_cast<double>(preliminary.rank[i] - 1);
  std::vector<std::string> names;
  for (std::size_t r = 1; r <= preliminary.k; ++r) names.push_back(std::to_string(r));
  std::vector<Feature> features{Feature{"rank", 0, CovariateKind::ordinal, names, level}};
  RiskTree tree = grow(data.times(), data.events(), features, options);

  // each leaf covers a run of consecutive ranks; label leaves by their lowest rank
  std::vector<int> lowest(tree.leaf_count, std::numeric_limits<int>::max());
  std::vector<int> highest(tree.leaf_count, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto leaf = static_cast<std::size_t>(tree.leaf_of[i]);
    lowest[leaf] = std::min(lowest[leaf], preliminary.rank[i]);
    highest[leaf] = std::max(highest[leaf], preliminary.rank[i]);
  }
  std::vector<std::size_t> order(tree.leaf_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lowest[a] < lowest[b]; });
  std::vector<int> label(tree.leaf_count);
  out.ranges.clear();
  for (std::size_t s = 0; s < order.size(); ++s) {
    label[order[s]] = static_cast<int>(s + 1);
    out.ranges.emplace_back(lowest[order[s]], highest[order[s]]);
  }
  for (std::size_t s = 0; s + 1 < out.ranges.size(); ++s)
    if (out.ranges[s].second + 1 != out.ranges[s + 1].first)
      throw NumericalError("pool_strata: pooled strata are not consecutive ranks");
  out.c = tree.leaf_count;
  for (std::size_t i = 0; i < data.size(); ++i) out.stratum[i] = label[static_cast<std::size_t>(tree.leaf_of[i])];
  out.pooling_tree = std::move(tree);
  return out;
}

std::vector<std::string> effective_split_covariates(const RiskTree& tree, const StratumAssignment& assignment) {
  std::vector<int> final_of_rank(assignment.k + 1, 0);
  for (std::size_t s = 0; s < assignment.ranges.size(); ++s)
    for (int r = assignment.ranges[s].first; r <= assignment.ranges[s].second; ++r)
      final_of_rank[static_cast<std::size_t>(r)] = static_cast<int>(s + 1);

  std::vector<std::set<int>> below(tree.nodes.size());
  for (std::size_t q = tree.nodes.size(); q-- > 0;) {
    const auto& node = tree.nodes[q];
    if (node.terminal()) {
      const int rank = assignment.rank_of_leaf.at(static_cast<std::size_t>(node.leaf));
      below[q].insert(final_of_rank[static_cast<std::size_t>(rank)]);
    } else {
      below[q] = below[static_cast<std::size_t>(node.left)];
      below[q].insert(below[static_cast<std::size_t>(node.right)].begin(),
                      below[static_cast<std::size_t>(node.right)].end());
    }
  }
  std::vector<std::string> names;
  for (const auto& node : tree.nodes)
    if (!node.terminal() && below[static_cast<std::size_t>(node.id)].size() > 1 &&
        std::find(names.begin(), names.end(), node.split->covariate) == names.end())
      names.push_back(node.split->covariate);
  return names;
}

}  // namespace fivestar

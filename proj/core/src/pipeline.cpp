#include "fivestar/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fivestar/error.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

namespace {

void check_open_unit(double v, const char* what) {
  if (!(v > 0.0 && v < 1.0)) throw ValidationError(std::string(what) + " must lie in (0, 1)");
}

LambdaRule rule_from_string(const std::string& s) {
  if (s == "lambda_min" || s == "lambda-min") return LambdaRule::lambda_min;
  if (s == "lambda_1se" || s == "lambda-1se") return LambdaRule::lambda_1se;
  throw ValidationError("unknown lambda rule '" + s + "'");
}

std::string to_string(LambdaRule r) { return r == LambdaRule::lambda_min ? "lambda_min" : "lambda_1se"; }

PValueMode mode_from_string(const std::string& s) {
  if (s == "permutation") return PValueMode::permutation;
  if (s == "asymptotic") return PValueMode::asymptotic;
  throw ValidationError("unknown p-value mode '" + s + "'");
}

std::string to_string(PValueMode m) { return m == PValueMode::permutation ? "permutation" : "asymptotic"; }

template <class F>
auto tagged(const std::string& step, F&& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    throw ValidationError(step + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(step + ": " + e.what());
  }
}

RiskTree single_leaf(std::size_t n) {
  RiskTree tree;
  TreeNode root;
  root.size = n;
  root.leaf = 0;
  tree.nodes.push_back(root);
  tree.leaf_of.assign(n, 0);
  tree.leaf_count = 1;
  return tree;
}

CoxSummary summarize_cox(const CoxFit& fit, std::span<const double> times, std::span<const int> events,
                         std::span<const Arm> arms, bool with_gt) {
  if (!fit.converged) throw NumericalError("Cox fit did not converge");
  CoxSummary s;
  s.log_hr = fit.coef[0];
  s.se = fit.se(0);
  const double q = normal_quantile(0.975);
  s.hr = std::exp(s.log_hr);
  s.lower = std::exp(s.log_hr - q * s.se);
  s.upper = std::exp(s.log_hr + q * s.se);
  s.z = s.log_hr / s.se;
  s.p = normal_cdf(s.z);
  if (with_gt) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(times.size()), 1);
    for (std::size_t i = 0; i < times.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = arms[i] == Arm::A ? 1.0 : 0.0;
    s.gt_p = gt_test(fit, times, events, x).global_p;
  }
  return s;
}

}  // namespace

void AnalysisConfig::validate() const {
  check_open_unit(ctree.alpha_3a, "ctree.alpha_3a");
  check_open_unit(ctree.alpha_3b, "ctree.alpha_3b");
  check_open_unit(aft.alpha, "aft.alpha");
  check_open_unit(amalgam.alpha, "amalgam.alpha");
  check_open_unit(amalgam.test_level, "amalgam.test_level");
  if (ctree.min_node < 2) throw ValidationError("ctree.min_node must be at least 2");
  if (enet.folds < 2) throw ValidationError("enet.folds must be at least 2");
  if (enet.psi_grid.empty()) throw ValidationError("enet.psi_grid must not be empty");
  for (double psi : enet.psi_grid)
    if (!(psi >= 0.0 && psi <= 1.0)) throw ValidationError("enet.psi_grid values must lie in [0, 1]");
  if (aft.distributions.empty()) throw ValidationError("aft.distributions must not be empty");
  if (comparators.stratified && comparators.factors.empty())
    throw ValidationError("stratified comparator needs at least one factor");
}

void AnalysisConfig::reseed(std::uint64_t seed) {
  enet.seed = mix_seed(seed, 2);
  ctree.seed = mix_seed(seed, 3);
  comparators.maxcombo_options.seed = mix_seed(seed, 4);
}

AnalysisConfig parse_config(const nlohmann::json& j) {
  AnalysisConfig c;
  c.schema = parse_schema(j);
  if (j.contains("enet")) {
    const auto& e = j.at("enet");
    c.enet.enabled = e.value("enabled", c.enet.enabled);
    if (e.contains("psi_grid")) c.enet.psi_grid = e.at("psi_grid").get<std::vector<double>>();
    c.enet.folds = e.value("folds", c.enet.folds);
    if (e.contains("rule")) c.enet.rule = rule_from_string(e.at("rule").get<std::string>());
    c.enet.seed = e.value("seed", c.enet.seed);
  }
  if (j.contains("ctree")) {
    const auto& t = j.at("ctree");
    c.ctree.alpha_3a = t.value("alpha_3a", c.ctree.alpha_3a);
    c.ctree.alpha_3b = t.value("alpha_3b", c.ctree.alpha_3b);
    c.ctree.min_node = t.value("min_node", c.ctree.min_node);
    c.ctree.perm_reps = t.value("perm_reps", c.ctree.perm_reps);
    if (t.contains("mode")) c.ctree.mode = mode_from_string(t.at("mode").get<std::string>());
    c.ctree.seed = t.value("seed", c.ctree.seed);
  }
  if (j.contains("aft")) {
    const auto& a = j.at("aft");
    if (a.contains("distributions")) {
      c.aft.distributions.clear();
      for (const auto& d : a.at("distributions")) c.aft.distributions.push_back(distribution_from_string(d));
    }
    c.aft.alpha = a.value("alpha", c.aft.alpha);
    c.aft.flag_threshold = a.value("flag_threshold", c.aft.flag_threshold);
  }
  if (j.contains("amalgam")) {
    const auto& a = j.at("amalgam");
    c.amalgam.alpha = a.value("alpha", c.amalgam.alpha);
    c.amalgam.test_level = a.value("test_level", c.amalgam.test_level);
  }
  if (j.contains("comparators")) {
    const auto& k = j.at("comparators");
    c.comparators.logrank = k.value("logrank", c.comparators.logrank);
    c.comparators.cox = k.value("cox", c.comparators.cox);
    c.comparators.maxcombo = k.value("maxcombo", c.comparators.maxcombo);
    c.comparators.rmst = k.value("rmst", c.comparators.rmst);
    if (k.contains("tau") && !k.at("tau").is_null()) c.comparators.tau = k.at("tau").get<double>();
    if (k.contains("maxcombo_permutation"))
      c.comparators.maxcombo_options.permutation = k.at("maxcombo_permutation").get<bool>();
    if (k.contains("stratified_factors")) {
      for (const auto& f : k.at("stratified_factors")) {
        StratificationFactor factor;
        factor.covariate = f.at("covariate").get<std::string>();
        if (f.contains("cut") && !f.at("cut").is_null()) factor.cut = f.at("cut").get<double>();
        c.comparators.factors.push_back(std::move(factor));
      }
      c.comparators.stratified = !c.comparators.factors.empty();
    }
    c.comparators.stratified = k.value("stratified", c.comparators.stratified);
  }
  c.workers = j.value("workers", c.workers);
  c.plot_tables = j.value("plot_tables", c.plot_tables);
  c.validate();
  return c;
}

nlohmann::json to_json(const AnalysisConfig& c) {
  nlohmann::json j = schema_to_json(c.schema);
  j["enet"] = {{"enabled", c.enet.enabled},
               {"psi_grid", c.enet.psi_grid},
               {"folds", c.enet.folds},
               {"rule", to_string(c.enet.rule)},
               {"seed", c.enet.seed}};
  j["ctree"] = {{"alpha_3a", c.ctree.alpha_3a}, {"alpha_3b", c.ctree.alpha_3b}, {"min_node", c.ctree.min_node},
                {"perm_reps", c.ctree.perm_reps}, {"mode", to_string(c.ctree.mode)},  {"seed", c.ctree.seed}};
  nlohmann::json dists = nlohmann::json::array();
  for (auto d : c.aft.distributions) dists.push_back(to_string(d));
  j["aft"] = {{"distributions", dists}, {"alpha", c.aft.alpha}, {"flag_threshold", c.aft.flag_threshold}};
  j["amalgam"] = {{"alpha", c.amalgam.alpha}, {"test_level", c.amalgam.test_level}};
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& f : c.comparators.factors) {
    nlohmann::json item = {{"covariate", f.covariate}};
    if (f.cut) item["cut"] = *f.cut;
    factors.push_back(item);
  }
  j["comparators"] = {{"logrank", c.comparators.logrank},
                      {"cox", c.comparators.cox},
                      {"stratified", c.comparators.stratified},
                      {"stratified_factors", factors},
                      {"maxcombo", c.comparators.maxcombo},
                      {"maxcombo_permutation", c.comparators.maxcombo_options.permutation},
                      {"rmst", c.comparators.rmst},
                      {"tau", c.comparators.tau ? nlohmann::json(*c.comparators.tau) : nlohmann::json(nullptr)}};
  j["workers"] = c.workers;
  j["plot_tables"] = c.plot_tables;
  return j;
}

BlindedStage run_blinded_steps(const BlindedDataset& blinded, const AnalysisConfig& config) {
  BlindedStage stage;
  for (const auto& spec : blinded.specs()) stage.candidates.push_back(spec.name);

  tagged("step 2 (covariate filter)", [&] {
    if (config.enet.enabled) {
      CvOptions cv;
      cv.psi_grid = config.enet.psi_grid;
      cv.folds = config.enet.folds;
      cv.rule = config.enet.rule;
      cv.seed = config.enet.seed;
      cv.workers = config.workers;
      stage.enet = cv_select(blinded, cv);
      stage.selected_indices = stage.enet->selected_indices;
    } else {
      stage.selected_indices.resize(blinded.covariate_count());
      std::iota(stage.selected_indices.begin(), stage.selected_indices.end(), std::size_t{0});
    }
    for (auto i : stage.selected_indices) stage.selected.push_back(blinded.specs()[i].name);
    return 0;
  });

  tagged("step 3 (risk stratification)", [&] {
    CtreeOptions grow;
    grow.alpha = config.ctree.alpha_3a;
    grow.min_node = config.ctree.min_node;
    grow.perm_reps = config.ctree.perm_reps;
    grow.mode = config.ctree.mode;
    grow.seed = config.ctree.seed;
    stage.tree = stage.selected_indices.empty() ? single_leaf(blinded.size())
                                                : ctree_grow(blinded, stage.selected_indices, grow);
    const auto preliminary = order_strata(blinded, *stage.tree);
    CtreeOptions pool = grow;
    pool.alpha = config.ctree.alpha_3b;
    pool.seed = mix_seed(config.ctree.seed, 1);
    stage.assignment = pool_strata(blinded, preliminary, pool);
    return 0;
  });
  return stage;
}

std::vector<int> factor_strata(const TrialDataset& data, const std::vector<StratificationFactor>& factors) {
  std::vector<int> labels(data.size(), 0);
  int radix = 1;
  for (const auto& f : factors) {
    const auto c = data.covariate_index(f.covariate);
    const auto& spec = data.specs()[c];
    int levels = 2;
    if (spec.kind == CovariateKind::continuous) {
      if (!f.cut) throw ValidationError("stratification factor '" + f.covariate + "' needs a cut");
    } else if (spec.categorical()) {
      levels = static_cast<int>(spec.levels.size());
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double v = data.records()[i].covariates[c];
      int level = 0;
      if (spec.kind == CovariateKind::continuous) level = v > *f.cut ? 1 : 0;
      else if (f.cut) level = v > *f.cut ? 1 : 0;
      else level = static_cast<int>(std::lround(v));
      labels[i] += radix * level;
    }
    radix *= levels;
  }
  return labels;
}

ComparatorBlock run_comparators(const TrialDataset& data, const AnalysisConfig& config) {
  ComparatorBlock block;
  const auto times = data.times();
  const auto events = data.events();
  const auto arms = data.arms();
  auto guard = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const Error& e) {
      block.errors[name] = e.what();
    }
  };
  const auto& k = config.comparators;
  if (k.logrank) guard("logrank", [&] { block.logrank = logrank_test(data); });
  if (k.cox)
    guard("cox", [&] { block.cox = summarize_cox(cox_fit_arm(times, events, arms), times, events, arms, true); });
  if (k.stratified) {
    guard("stratified_logrank", [&] {
      const auto labels = factor_strata(data, k.factors);
      block.stratified_logrank = stratified_logrank(times, events, arms, labels);
      block.stratified_cox = summarize_cox(cox_fit_arm(times, events, arms, labels), times, events, arms, false);
    });
  }
  if (k.maxcombo) guard("maxcombo", [&] { block.maxcombo = maxcombo(times, events, arms, k.maxcombo_options); });
  if (k.rmst) guard("rmst", [&] { block.rmst = rmst_compare(times, events, arms, k.tau); });
  return block;
}

namespace {

void add_tables(AnalysisReport& report, const TrialDataset& data) {
  const auto times = data.times();
  const auto events = data.events();
  const auto arms = data.arms();
  const auto& stratum = report.blinded.assignment.stratum;

  std::vector<double> event_times;
  double horizon = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (events[i]) {
      event_times.push_back(times[i]);
      horizon = std::max(horizon, times[i]);
    }
  const double bandwidth =
      event_times.size() >= 2 ? 1.5 * (quantile(event_times, 0.75) - quantile(event_times, 0.25)) : 0.0;
  std::vector<double> grid;
  for (int g = 0; g <= 100; ++g) grid.push_back(horizon * g / 100.0);

  auto add = [&](const std::string& scope, const std::string& arm, auto keep) {
    std::vector<double> t;
    std::vector<int> e;
    for (std::size_t i = 0; i < times.size(); ++i)
      if (keep(i)) {
        t.push_back(times[i]);
        e.push_back(events[i]);
      }
    if (t.empty()) return;
    report.km_curves.push_back({scope, arm, kaplan_meier(t, e)});
    if (bandwidth > 0.0)
      report.hazards.push_back({scope, arm, bandwidth, grid, smoothed_hazard(nelson_aalen(t, e), grid, bandwidth)});
  };
  add("overall", "pooled", [](std::size_t) { return true; });
  add("overall", "A", [&](std::size_t i) { return arms[i] == Arm::A; });
  add("overall", "B", [&](std::size_t i) { return arms[i] == Arm::B; });
  for (int q = 1; q <= static_cast<int>(report.blinded.assignment.c); ++q) {
    const std::string scope = "stratum " + std::to_string(q);
    add(scope, "A", [&](std::size_t i) { return stratum[i] == q && arms[i] == Arm::A; });
    add(scope, "B", [&](std::size_t i) { return stratum[i] == q && arms[i] == Arm::B; });
  }
}

}  // namespace

AnalysisReport run_5star(const TrialDataset& data, const AnalysisConfig& config) {
  config.validate();
  AnalysisReport report;
  report.n = data.size();
  report.diagnostics = validate(data);

  const BlindedDataset blinded = blind(data);
  report.blinded = run_blinded_steps(blinded, config);

  // Step 4: treatment labels rejoin the blinded strata here
  const auto arms = rejoin_arms(blinded, data);
  const auto times = blinded.times();
  const auto events = blinded.events();
  const auto& assignment = report.blinded.assignment;
  StratumOptions options;
  options.alpha = config.aft.alpha;
  options.flag_threshold = config.aft.flag_threshold;
  options.distributions = config.aft.distributions;
  tagged("step 4 (stratum effects)", [&] {
    for (int q = 1; q <= static_cast<int>(assignment.c); ++q) {
      std::vector<double> t;
      std::vector<int> e;
      std::vector<Arm> a;
      for (std::size_t i = 0; i < times.size(); ++i)
        if (assignment.stratum[i] == q) {
          t.push_back(times[i]);
          e.push_back(events[i]);
          a.push_back(arms[i]);
        }
      auto effect = stratum_summary(t, e, a, q, options);
      if (effect.degenerate)
        report.notes.push_back("stratum " + std::to_string(q) + " excluded from amalgamation: " + effect.message);
      else if (effect.flagged)
        report.notes.push_back("stratum " + std::to_string(q) + " flagged: Pr(TR > 1) below " +
                               std::to_string(config.aft.flag_threshold));
      report.effects.push_back(std::move(effect));
    }
    return 0;
  });

  tagged("step 5 (amalgamation)", [&] {
    report.tr = amalgamate_tr(report.effects, config.amalgam.alpha, config.amalgam.test_level);
    return 0;
  });
  try {
    report.hr = amalgamate_hr(report.effects, config.amalgam.alpha, config.amalgam.test_level);
  } catch (const Error& e) {
    report.notes.push_back(std::string("hazard-ratio track unavailable: ") + e.what());
  }
  if (assignment.c == 1) report.notes.push_back("single final stratum: unstratified AFT analysis");

  report.comparators = run_comparators(data, config);
  if (config.plot_tables) add_tables(report, data);
  return report;
}

}  // namespace fivestar

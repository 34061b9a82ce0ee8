#include "fivestar/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <thread>

#include "fivestar/error.hpp"

namespace fivestar {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::null: return "null";
    case Scenario::alt1: return "alt1";
    case Scenario::alt2: return "alt2";
    case Scenario::alt3: return "alt3";
  }
  return "null";
}

Scenario scenario_from_string(const std::string& text) {
  std::string key;
  for (char ch : text)
    if (ch != '-' && ch != '_' && ch != ' ') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (key == "null") return Scenario::null;
  if (key == "alt1") return Scenario::alt1;
  if (key == "alt2") return Scenario::alt2;
  if (key == "alt3") return Scenario::alt3;
  throw ValidationError("unknown scenario '" + text + "' (expected null, alt1, alt2 or alt3)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::five_star_tr: return "5star_tr";
    case Method::five_star_hr: return "5star_hr";
    case Method::logrank: return "logrank";
    case Method::stratified: return "stratified_logrank";
    case Method::maxcombo: return "maxcombo";
    case Method::rmst: return "rmst";
  }
  return "";
}

ScenarioSpec ScenarioSpec::make(Scenario s) {
  ScenarioSpec spec;
  spec.scenario = s;
  switch (s) {
    case Scenario::null: spec.theta = {1.0, 1.0, 1.0, 1.0}; break;
    case Scenario::alt1: spec.theta = {0.7, 0.7, 0.7, 0.7}; break;
    case Scenario::alt2: spec.theta = {0.42, 0.7, 0.86, 0.95}; break;
    case Scenario::alt3: spec.theta = {0.95, 0.86, 0.7, 0.42}; break;
  }
  return spec;
}

// Weibull scale giving median m: S(m) = 1/2 with S(t) = exp(-(t/eta)^kappa)
double ScenarioSpec::eta_b(std::size_t q) const { return median_b.at(q) / std::pow(std::numbers::ln2, 1.0 / kappa.at(q)); }

double ScenarioSpec::eta_a(std::size_t q) const { return eta_b(q) * std::pow(theta.at(q), -1.0 / kappa.at(q)); }

double ScenarioSpec::true_time_ratio() const {
  double s = 0.0;
  for (std::size_t q = 0; q < 4; ++q) s += -std::log(theta[q]) / kappa[q];
  return std::exp(s / 4.0);
}

double ScenarioSpec::true_hazard_ratio() const {
  double s = 0.0;
  for (double t : theta) s += std::log(t);
  return std::exp(s / 4.0);
}

std::size_t ScenarioSpec::stratum_of(std::span<const double> x) const {
  const bool x1 = x[0] > 0.5;
  const bool x2 = x[1] > 0.5;
  const bool high = x[binary_covariates] > cut;
  if (!x1 && !high) return 0;
  if (x1 && high) return 3;
  return x2 ? 2 : 1;
}

std::vector<CovariateSpec> ScenarioSpec::covariate_specs() const {
  std::vector<CovariateSpec> specs;
  for (std::size_t j = 0; j < covariates; ++j)
    specs.push_back({"X" + std::to_string(j + 1), j < binary_covariates ? CovariateKind::binary : CovariateKind::continuous, {}});
  return specs;
}

Eigen::VectorXd CovariateModel::draw(Rng& rng) const {
  Eigen::VectorXd n(factor.cols());
  for (Eigen::Index k = 0; k < n.size(); ++k) n[k] = standard_normal(rng);
  Eigen::VectorXd z = factor * n;
  for (std::size_t j = 0; j < binary; ++j) z[j] = z[j] > 0.0 ? 1.0 : 0.0;
  return z;
}

namespace {

// Latent correlation reproducing an observed correlation r when binary
// covariates are latent Gaussians thresholded at zero.
double latent_from_observed(double r, bool bin_i, bool bin_j) {
  constexpr double biserial = 0.7978845608028654;  // phi(0) / sqrt(0.25)
  double rho = r;
  if (bin_i && bin_j)
    rho = std::sin(std::numbers::pi * r / 2.0);
  else if (bin_i || bin_j)
    rho = r / biserial;
  return std::clamp(rho, -0.99, 0.99);
}

}  // namespace

CovariateModel sample_covariate_model(const ScenarioSpec& spec, Rng& rng) {
  const auto p = static_cast<Eigen::Index>(spec.covariates);
  const std::array<Eigen::Index, 3> trio{0, 1, static_cast<Eigen::Index>(spec.binary_covariates)};
  auto in_trio = [&](Eigen::Index j) { return std::find(trio.begin(), trio.end(), j) != trio.end(); };

  CovariateModel model;
  model.binary = spec.binary_covariates;
  model.target = Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd latent = Eigen::MatrixXd::Identity(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j) {
      const double r = in_trio(i) && in_trio(j) ? spec.trio_correlation : spec.noise_sd * standard_normal(rng);
      model.target(i, j) = model.target(j, i) = r;
      const bool bi = static_cast<std::size_t>(i) < spec.binary_covariates;
      const bool bj = static_cast<std::size_t>(j) < spec.binary_covariates;
      latent(i, j) = latent(j, i) = latent_from_observed(r, bi, bj);
    }

  // Nearest correlation matrix that keeps the trio entries: alternating
  // projections with Dykstra's correction between {eigenvalues >= floor} and
  // {unit diagonal, trio entries fixed}. Plain clipping of a 50-dimensional
  // matrix with N(0, 0.15) entries would shrink the trio correlations badly.
  constexpr double eig_floor = 1e-4;
  auto clip = [&](const Eigen::MatrixXd& m, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& eig) {
    eig.compute(m);
    const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(eig_floor);
    return Eigen::MatrixXd(eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose());
  };
  auto restore = [&](Eigen::MatrixXd m) {
    for (Eigen::Index i = 0; i < p; ++i) m(i, i) = 1.0;
    for (auto i : trio)
      for (auto j : trio)
        if (i != j) m(i, j) = latent(i, j);
    return m;
  };
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  Eigen::MatrixXd y = latent;
  Eigen::MatrixXd correction = Eigen::MatrixXd::Zero(p, p);
  eig.compute(y);
  if (eig.eigenvalues().minCoeff() < eig_floor) {
    for (int iter = 0; iter < 2000; ++iter) {
      const Eigen::MatrixXd r = y - correction;
      const Eigen::MatrixXd x = clip(r, eig);
      correction = x - r;
      const Eigen::MatrixXd next = restore(x);
      const double change = (next - y).norm();
      y = next;
      if (change < 1e-9 * p) break;
    }
  }

  // final clip and rescale so the factor is exact
  const Eigen::MatrixXd fixed = clip(y, eig);
  const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(eig_floor);
  const Eigen::VectorXd d = fixed.diagonal().cwiseSqrt().cwiseInverse();
  model.latent_correlation = d.asDiagonal() * fixed * d.asDiagonal();
  model.factor = d.asDiagonal() * eig.eigenvectors() * values.cwiseSqrt().asDiagonal();
  return model;
}

Eigen::MatrixXd gen_covariates(std::size_t n, std::uint64_t seed, const ScenarioSpec& spec) {
  Rng rng(seed);
  const auto model = sample_covariate_model(spec, rng);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.covariates));
  for (std::size_t i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i)) = model.draw(rng).transpose();
  return x;
}

GeneratedTrial gen_trial(const ScenarioSpec& spec, std::uint64_t seed) {
  if (spec.target_events == 0 || spec.target_events > 2 * spec.n_per_arm)
    throw ValidationError("target event count must lie in [1, total sample size]");
  Rng rng(seed);
  const auto model = sample_covariate_model(spec, rng);

  struct Draw {
    Arm arm;
    int stratum;
    double entry, survival;
    Eigen::VectorXd x;
  };
  std::vector<Draw> draws;
  draws.reserve(2 * spec.n_per_arm);
  for (Arm arm : {Arm::A, Arm::B}) {
    std::array<std::size_t, 4> counts{};
    std::size_t left = spec.n_per_arm;
    double mass = 1.0;
    for (std::size_t q = 0; q < 3; ++q) {
      std::binomial_distribution<std::size_t> bin(left, std::min(1.0, 0.25 / mass));
      counts[q] = bin(rng);
      left -= counts[q];
      mass -= 0.25;
    }
    counts[3] = left;
    for (std::size_t q = 0; q < 4; ++q)
      for (std::size_t k = 0; k < counts[q]; ++k) {
        Eigen::VectorXd x;
        std::size_t guard = 0;
        do {
          x = model.draw(rng);
          if (++guard > 100000) throw NumericalError("covariate rejection sampler did not reach the stratum");
        } while (spec.stratum_of({x.data(), static_cast<std::size_t>(x.size())}) != q);
        const double eta = arm == Arm::A ? spec.eta_a(q) : spec.eta_b(q);
        const double u = 1.0 - uniform01(rng);
        const double survival = eta * std::pow(-std::log(u), 1.0 / spec.kappa[q]);
        const double entry = spec.accrual * uniform01(rng);
        draws.push_back({arm, static_cast<int>(q) + 1, entry, survival, std::move(x)});
      }
  }

  std::vector<double> calendar;
  calendar.reserve(draws.size());
  for (const auto& d : draws) calendar.push_back(d.entry + d.survival);
  std::nth_element(calendar.begin(), calendar.begin() + static_cast<std::ptrdiff_t>(spec.target_events - 1),
                   calendar.end());
  const double cutoff = calendar[spec.target_events - 1];

  std::vector<int> strata;
  std::vector<SubjectRecord> records;
  records.reserve(draws.size());
  std::size_t serial = 0;
  for (auto& d : draws) {
    ++serial;
    if (d.entry >= cutoff) continue;  // not yet enrolled at the data cut
    SubjectRecord r;
    char id[16];
    std::snprintf(id, sizeof id, "S%04zu", serial);
    r.id = id;
    r.arm = d.arm;
    const double followup = cutoff - d.entry;
    r.event = d.entry + d.survival <= cutoff;
    r.time = r.event ? d.survival : followup;
    r.covariates.assign(d.x.data(), d.x.data() + d.x.size());
    records.push_back(std::move(r));
    strata.push_back(d.stratum);
  }
  return {TrialDataset(spec.covariate_specs(), std::move(records)), std::move(strata), cutoff};
}

AnalysisConfig simulation_config(const ScenarioSpec& spec, const SimOptions& options) {
  AnalysisConfig c;
  c.schema.covariates = spec.covariate_specs();
  c.ctree.mode = options.ctree_mode;
  c.plot_tables = false;
  c.workers = 1;
  c.comparators.stratified = true;
  const std::string high = "X" + std::to_string(spec.binary_covariates + 1);
  c.comparators.factors = {{"X2", std::nullopt}, {high, 0.0}, {"X3", std::nullopt}};
  return c;
}

namespace {

MethodOutcome from_amalgam(const AmalgamResult& r, double level) {
  return {true, r.p < level, r.p, r.estimate, r.estimate_lower, r.estimate_upper};
}

MethodOutcome from_test(double p, const std::optional<CoxSummary>& cox, double level) {
  MethodOutcome o{true, p < level, p, std::nullopt, std::nullopt, std::nullopt};
  if (cox) {
    o.estimate = cox->hr;
    o.lower = cox->lower;
    o.upper = cox->upper;
  }
  return o;
}

}  // namespace

ReplicateRecord run_replicate(const ScenarioSpec& spec, const AnalysisConfig& base, std::size_t rep,
                              std::uint64_t seed, double level) {
  ReplicateRecord rec;
  rec.rep = rep;
  rec.seed = seed;
  try {
    const auto trial = gen_trial(spec, mix_seed(seed, 0));
    AnalysisConfig config = base;
    config.reseed(mix_seed(seed, 1));
    const auto report = run_5star(trial.data, config);

    auto& o = rec.outcomes;
    if (report.tr) o[0] = from_amalgam(*report.tr, level);
    if (report.hr) o[1] = from_amalgam(*report.hr, level);
    const auto& c = report.comparators;
    if (c.logrank) o[2] = from_test(c.logrank->p, c.cox, level);
    if (c.stratified_logrank) o[3] = from_test(c.stratified_logrank->p, c.stratified_cox, level);
    if (c.maxcombo) o[4] = from_test(c.maxcombo->p, std::nullopt, level);
    if (c.rmst) o[5] = from_test(c.rmst->p, std::nullopt, level);

    rec.selected = report.blinded.selected;
    rec.final_strata = report.blinded.assignment.c;
    if (report.blinded.tree)
      rec.strata_covariates = effective_split_covariates(*report.blinded.tree, report.blinded.assignment);
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

ScenarioRun run_scenario(const ScenarioSpec& spec, const SimOptions& options) {
  if (options.reps == 0) throw ValidationError("reps must be positive");
  const auto config = simulation_config(spec, options);
  config.validate();
  ScenarioRun run;
  run.spec = spec;
  run.replicates.resize(options.reps);

  const auto start = std::chrono::steady_clock::now();
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t rep = next.fetch_add(1);
      if (rep >= options.reps) return;
      run.replicates[rep] = run_replicate(spec, config, rep, mix_seed(options.seed, rep), options.level);
      const std::size_t finished = ++done;
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(finished);
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, options.reps);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  run.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.results = summarize_replicates(spec, run.replicates);
  for (auto& r : run.results) r.runtime_seconds = run.runtime_seconds;
  return run;
}

std::vector<SimResult> summarize_replicates(const ScenarioSpec& spec, const std::vector<ReplicateRecord>& records,
                                            std::size_t reps) {
  const std::size_t n = reps == 0 ? records.size() : std::min(reps, records.size());
  std::vector<SimResult> out;
  for (std::size_t m = 0; m < kAllMethods.size(); ++m) {
    const Method method = kAllMethods[m];
    SimResult r;
    r.scenario = to_string(spec.scenario);
    r.method = to_string(method);
    double truth = 1.0;
    if (method == Method::five_star_tr) truth = spec.true_time_ratio();
    if (method == Method::five_star_hr || method == Method::logrank || method == Method::stratified)
      truth = spec.true_hazard_ratio();
    std::size_t rejected = 0, estimated = 0, covered = 0;
    double bias = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& o = records[i].outcomes[m];
      if (!records[i].ok || !o.ok) {
        ++r.failures;
        continue;
      }
      ++r.reps;
      if (o.reject) ++rejected;
      if (o.estimate && o.lower && o.upper) {
        ++estimated;
        bias += 100.0 * (*o.estimate - truth) / truth;
        if (*o.lower <= truth && truth <= *o.upper) ++covered;
      }
    }
    if (r.reps > 0) {
      r.rejection_rate = static_cast<double>(rejected) / static_cast<double>(r.reps);
      r.mc_se = std::sqrt(r.rejection_rate * (1.0 - r.rejection_rate) / static_cast<double>(r.reps));
    }
    if (estimated > 0) {
      r.mean_percent_bias = bias / static_cast<double>(estimated);
      r.coverage = static_cast<double>(covered) / static_cast<double>(estimated);
    }
    out.push_back(std::move(r));
  }
  return out;
}

RecoverySummary recovery(const std::vector<ReplicateRecord>& records, std::size_t reps) {
  const std::size_t n = reps == 0 ? records.size() : std::min(reps, records.size());
  static const std::array<std::string, 3> trio{"X1", "X2", "X26"};
  RecoverySummary s;
  std::size_t all = 0, use = 0, only = 0;
  std::array<std::size_t, 3> each{};
  double selected = 0.0, strata = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    if (!r.ok) continue;
    ++s.reps;
    auto has = [](const std::vector<std::string>& v, const std::string& x) {
      return std::find(v.begin(), v.end(), x) != v.end();
    };
    bool every = true, every_strata = true;
    for (std::size_t k = 0; k < 3; ++k) {
      const bool sel = has(r.selected, trio[k]);
      each[k] += sel ? 1 : 0;
      every = every && sel;
      every_strata = every_strata && has(r.strata_covariates, trio[k]);
    }
    all += every ? 1 : 0;
    use += every_strata ? 1 : 0;
    only += every_strata && r.strata_covariates.size() == 3 ? 1 : 0;
    selected += static_cast<double>(r.selected.size());
    strata += static_cast<double>(r.strata_covariates.size());
  }
  if (s.reps == 0) return s;
  const double d = static_cast<double>(s.reps);
  s.trio_selected = all / d;
  for (std::size_t k = 0; k < 3; ++k) s.each_selected[k] = each[k] / d;
  s.strata_use_trio = use / d;
  s.strata_only_trio = only / d;
  s.mean_selected = selected / d;
  s.mean_strata_covariates = strata / d;
  return s;
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void write_table2_csv(std::ostream& out, const std::vector<SimResult>& results) {
  out << "scenario,method,reps,failures,rejection_pct,mc_se_pct,mean_pct_bias,coverage_pct\n";
  for (const auto& r : results) {
    out << r.scenario << ',' << r.method << ',' << r.reps << ',' << r.failures << ','
        << fixed2(100.0 * r.rejection_rate) << ',' << fixed2(100.0 * r.mc_se) << ','
        << (r.mean_percent_bias ? fixed2(*r.mean_percent_bias) : "NA") << ','
        << (r.coverage ? fixed2(100.0 * *r.coverage) : "NA") << '\n';
  }
}

nlohmann::json to_json(const RecoverySummary& r) {
  return {{"reps", r.reps},
          {"trio_selected", r.trio_selected},
          {"x1_selected", r.each_selected[0]},
          {"x2_selected", r.each_selected[1]},
          {"x26_selected", r.each_selected[2]},
          {"strata_use_trio", r.strata_use_trio},
          {"strata_only_trio", r.strata_only_trio},
          {"mean_selected", r.mean_selected},
          {"mean_strata_covariates", r.mean_strata_covariates}};
}

nlohmann::json table2_json(const std::vector<SimResult>& results, const std::vector<RecoverySummary>& recoveries,
                           const std::vector<std::string>& scenarios) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json j = {{"scenario", r.scenario},     {"method", r.method},
                        {"reps", r.reps},             {"failures", r.failures},
                        {"rejection_rate", r.rejection_rate}, {"mc_se", r.mc_se}};
    j["mean_percent_bias"] = r.mean_percent_bias ? nlohmann::json(*r.mean_percent_bias) : nlohmann::json(nullptr);
    j["coverage"] = r.coverage ? nlohmann::json(*r.coverage) : nlohmann::json(nullptr);
    rows.push_back(std::move(j));
  }
  nlohmann::json out = {{"results", rows}};
  if (!recoveries.empty()) {
    nlohmann::json rec = nlohmann::json::object();
    for (std::size_t i = 0; i < recoveries.size(); ++i)
      rec[i < scenarios.size() ? scenarios[i] : std::to_string(i)] = to_json(recoveries[i]);
    out["recovery"] = rec;
  }
  return out;
}

nlohmann::json to_json(const ReplicateRecord& r) {
  nlohmann::json j = {{"rep", r.rep}, {"seed", r.seed}, {"ok", r.ok}};
  if (!r.ok) j["error"] = r.error;
  nlohmann::json methods = nlohmann::json::object();
  for (std::size_t m = 0; m < kAllMethods.size(); ++m) {
    const auto& o = r.outcomes[m];
    if (!o.ok) continue;
    nlohmann::json k = {{"p", o.p}, {"reject", o.reject}};
    if (o.estimate) k["estimate"] = *o.estimate;
    if (o.lower && o.upper) k["ci"] = {*o.lower, *o.upper};
    methods[to_string(kAllMethods[m])] = std::move(k);
  }
  j["methods"] = std::move(methods);
  j["selected"] = r.selected;
  j["strata_covariates"] = r.strata_covariates;
  j["final_strata"] = r.final_strata;
  return j;
}

}  // namespace fivestar

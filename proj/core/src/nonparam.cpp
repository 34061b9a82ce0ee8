#include "fivestar/nonparam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <map>
#include <iomanip>

#include "fivestar/error.hpp"
#include "fivestar/mvn.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ValidationError(std::string(what) + ": input lengths differ");
}

std::vector<std::size_t> order_by_time(std::span<const double> times) {
  std::vector<std::size_t> idx(times.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  return idx;
}

// Distinct observed times with event and removal counts, ascending.
struct TimeGroup {
  double time;
  std::size_t events;
  std::size_t removed;
};

std::vector<TimeGroup> group_times(std::span<const double> times, std::span<const int> events) {
  auto idx = order_by_time(times);
  std::vector<TimeGroup> groups;
  for (std::size_t k = 0; k < idx.size();) {
    double t = times[idx[k]];
    TimeGroup g{t, 0, 0};
    while (k < idx.size() && times[idx[k]] == t) {
      g.events += events[idx[k]] ? 1 : 0;
      ++g.removed;
      ++k;
    }
    groups.push_back(g);
  }
  return groups;
}

}  // namespace

double StepFunction::at(double t) const {
  auto it = std::upper_bound(knots.begin(), knots.end(), t);
  if (it == knots.begin()) return initial;
  return values[static_cast<std::size_t>(it - knots.begin()) - 1];
}

double StepFunction::before(double t) const {
  auto it = std::lower_bound(knots.begin(), knots.end(), t);
  if (it == knots.begin()) return initial;
  return values[static_cast<std::size_t>(it - knots.begin()) - 1];
}

double StepFunction::integral(double tau) const {
  double area = 0.0;
  double prev_t = 0.0;
  double prev_v = initial;
  for (std::size_t i = 0; i < knots.size() && knots[i] <= tau; ++i) {
    area += prev_v * (knots[i] - prev_t);
    prev_t = knots[i];
    prev_v = values[i];
  }
  area += prev_v * (tau - prev_t);
  return area;
}

StepFunction kaplan_meier(std::span<const double> times, std::span<const int> events) {
  check_lengths(times.size(), events.size(), "kaplan_meier");
  if (times.empty()) throw ValidationError("kaplan_meier: empty input");
  StepFunction km;
  km.initial = 1.0;
  double s = 1.0;
  double greenwood = 0.0;
  std::size_t n = times.size();
  for (const auto& g : group_times(times, events)) {
    if (g.events > 0) {
      const double d = static_cast<double>(g.events);
      const double r = static_cast<double>(n);
      s *= 1.0 - d / r;
      if (n > g.events) greenwood += d / (r * (r - d));
      km.knots.push_back(g.time);
      km.values.push_back(s);
      km.variances.push_back(s > 0.0 ? s * s * greenwood : 0.0);
      km.at_risk.push_back(n);
      km.events.push_back(g.events);
    }
    n -= g.removed;
  }
  return km;
}

StepFunction nelson_aalen(std::span<const double> times, std::span<const int> events) {
  check_lengths(times.size(), events.size(), "nelson_aalen");
  if (times.empty()) throw ValidationError("nelson_aalen: empty input");
  StepFunction na;
  na.initial = 0.0;
  double h = 0.0;
  double v = 0.0;
  std::size_t n = times.size();
  for (const auto& g : group_times(times, events)) {
    if (g.events > 0) {
      const double d = static_cast<double>(g.events);
      const double r = static_cast<double>(n);
      h += d / r;
      v += d / (r * r);
      na.knots.push_back(g.time);
      na.values.push_back(h);
      na.variances.push_back(v);
      na.at_risk.push_back(n);
      na.events.push_back(g.events);
    }
    n -= g.removed;
  }
  return na;
}

void write_step_csv(std::ostream& out, const StepFunction& f) {
  out << "time,value,variance\n";
  out << std::setprecision(12);
  out << 0 << ',' << f.initial << ',' << 0 << '\n';
  for (std::size_t i = 0; i < f.size(); ++i) out << f.knots[i] << ',' << f.values[i] << ',' << f.variances[i] << '\n';
}

std::vector<double> logrank_scores(std::span<const double> times, std::span<const int> events) {
  auto na = nelson_aalen(times, events);
  if (na.knots.empty()) throw ValidationError("logrank_scores: no events");
  std::vector<double> scores(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) scores[i] = (events[i] ? 1.0 : 0.0) - na.at(times[i]);
  return scores;
}

std::vector<double> logrank_scores(const BlindedDataset& data) { return logrank_scores(data.times(), data.events()); }

std::vector<RiskTableRow> two_arm_risk_table(std::span<const double> times, std::span<const int> events,
                                             std::span<const Arm> arms) {
  check_lengths(times.size(), events.size(), "risk table");
  check_lengths(times.size(), arms.size(), "risk table");
  auto idx = order_by_time(times);
  double n = static_cast<double>(times.size());
  double n_a = static_cast<double>(std::count(arms.begin(), arms.end(), Arm::A));
  double s = 1.0;
  std::vector<RiskTableRow> rows;
  for (std::size_t k = 0; k < idx.size();) {
    const double t = times[idx[k]];
    RiskTableRow row;
    row.time = t;
    row.n = n;
    row.n_a = n_a;
    row.surv_left = s;
    double removed = 0.0, removed_a = 0.0;
    while (k < idx.size() && times[idx[k]] == t) {
      const auto i = idx[k];
      const bool is_a = arms[i] == Arm::A;
      if (events[i]) {
        row.d += 1.0;
        if (is_a) row.d_a += 1.0;
      }
      removed += 1.0;
      if (is_a) removed_a += 1.0;
      ++k;
    }
    if (row.d > 0.0) {
      rows.push_back(row);
      s *= 1.0 - row.d / row.n;
    }
    n -= removed;
    n_a -= removed_a;
  }
  return rows;
}

namespace {

struct ArmCheck {
  std::size_t n_a = 0, n_b = 0;
};

ArmCheck count_arms(std::span<const Arm> arms) {
  ArmCheck c;
  for (auto a : arms) (a == Arm::A ? c.n_a : c.n_b) += 1;
  return c;
}

double fh_weight(double surv_left, double rho, double gamma) {
  double w = 1.0;
  if (rho != 0.0) w *= std::pow(surv_left, rho);
  if (gamma != 0.0) w *= std::pow(1.0 - surv_left, gamma);
  return w;
}

double hypergeometric_variance(const RiskTableRow& r) {
  if (r.n <= 1.0) return 0.0;
  return r.n_a * (r.n - r.n_a) * r.d * (r.n - r.d) / (r.n * r.n * (r.n - 1.0));
}

}  // namespace

WeightedLogrankResult weighted_logrank(std::span<const double> times, std::span<const int> events,
                                       std::span<const Arm> arms, double rho, double gamma) {
  if (rho < 0.0 || gamma < 0.0) throw ValidationError("weighted_logrank: rho and gamma must be nonnegative");
  auto c = count_arms(arms);
  if (c.n_a == 0 || c.n_b == 0) throw ValidationError("weighted_logrank: both arms must be present");
  auto table = two_arm_risk_table(times, events, arms);
  if (table.empty()) throw ValidationError("weighted_logrank: no events");
  WeightedLogrankResult out;
  out.rho = rho;
  out.gamma = gamma;
  for (const auto& r : table) {
    const double w = fh_weight(r.surv_left, rho, gamma);
    out.numerator += w * (r.d_a - r.n_a * r.d / r.n);
    out.variance += w * w * hypergeometric_variance(r);
  }
  out.z = out.variance > 0.0 ? out.numerator / std::sqrt(out.variance) : 0.0;
  return out;
}

WeightedLogrankResult weighted_logrank(const TrialDataset& data, double rho, double gamma) {
  auto t = data.times();
  auto e = data.events();
  auto a = data.arms();
  return weighted_logrank(t, e, a, rho, gamma);
}

LogrankTest logrank_test(const TrialDataset& data) {
  auto r = weighted_logrank(data, 0.0, 0.0);
  return {r.z, normal_cdf(r.z)};
}

namespace {

constexpr std::array<std::pair<double, double>, 4> kComboWeights = {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};

struct ComboStats {
  std::array<double, 4> z{};
  Eigen::Matrix4d corr = Eigen::Matrix4d::Identity();
};

ComboStats combo_stats(const std::vector<RiskTableRow>& table) {
  Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
  std::array<double, 4> num{};
  for (const auto& r : table) {
    std::array<double, 4> w{};
    for (std::size_t k = 0; k < 4; ++k) w[k] = fh_weight(r.surv_left, kComboWeights[k].first, kComboWeights[k].second);
    const double v = hypergeometric_variance(r);
    const double oe = r.d_a - r.n_a * r.d / r.n;
    for (std::size_t i = 0; i < 4; ++i) {
      num[i] += w[i] * oe;
      for (std::size_t j = 0; j <= i; ++j) cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += w[i] * w[j] * v;
    }
  }
  ComboStats s;
  for (Eigen::Index i = 0; i < 4; ++i) {
    if (!(cov(i, i) > 0.0)) throw NumericalError("maxcombo: degenerate variance for a weighted logrank component");
    s.z[static_cast<std::size_t>(i)] = num[static_cast<std::size_t>(i)] / std::sqrt(cov(i, i));
  }
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      double c = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
      s.corr(i, j) = s.corr(j, i) = std::clamp(c, -1.0, 1.0);
    }
  }
  return s;
}

}  // namespace

double maxcombo_p(double statistic, const Eigen::Matrix4d& correlation, std::uint64_t seed, double abs_error,
                  double* error_estimate) {
  // Pr(min Z <= m) = 1 - Pr(all Z > m) = 1 - Pr(all -Z < -m)
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(4, -statistic);
  auto est = mvn_cdf(correlation, upper, seed, abs_error);
  if (error_estimate) *error_estimate = est.error;
  return std::clamp(1.0 - est.value, 0.0, 1.0);
}

MaxComboResult maxcombo(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                        const MaxComboOptions& options) {
  auto c = count_arms(arms);
  if (c.n_a == 0 || c.n_b == 0) throw ValidationError("maxcombo: both arms must be present");
  auto table = two_arm_risk_table(times, events, arms);
  double total_events = 0.0;
  for (const auto& r : table) total_events += r.d;
  if (total_events < 2.0) throw ValidationError("maxcombo: at least two events required");
  auto s = combo_stats(table);
  MaxComboResult out;
  out.z = s.z;
  out.correlation = s.corr;
  out.statistic = *std::min_element(s.z.begin(), s.z.end());
  if (options.permutation) {
    out.p = maxcombo_permutation_p(times, events, arms, options.permutation_reps, options.seed);
    out.p_error = 3.0 * std::sqrt(out.p * (1.0 - out.p) / options.permutation_reps);
  } else {
    out.p = maxcombo_p(out.statistic, out.correlation, options.seed, options.abs_error, &out.p_error);
  }
  return out;
}

MaxComboResult maxcombo(const TrialDataset& data, const MaxComboOptions& options) {
  auto t = data.times();
  auto e = data.events();
  auto a = data.arms();
  return maxcombo(t, e, a, options);
}

double maxcombo_permutation_p(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                              int reps, std::uint64_t seed) {
  if (reps < 1) throw ValidationError("maxcombo_permutation_p: reps must be positive");
  auto observed = combo_stats(two_arm_risk_table(times, events, arms));
  const double stat = *std::min_element(observed.z.begin(), observed.z.end());
  std::vector<Arm> perm(arms.begin(), arms.end());
  Rng rng(seed);
  int hits = 0;
  for (int b = 0; b < reps; ++b) {
    shuffle(perm, rng);
    auto s = combo_stats(two_arm_risk_table(times, events, perm));
    if (*std::min_element(s.z.begin(), s.z.end()) <= stat) ++hits;
  }
  return (hits + 1.0) / (reps + 1.0);
}

double rmst_max_tau(std::span<const double> times, std::span<const Arm> arms) {
  double max_a = -1.0, max_b = -1.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (arms[i] == Arm::A) max_a = std::max(max_a, times[i]);
    else max_b = std::max(max_b, times[i]);
  }
  if (max_a < 0.0 || max_b < 0.0) throw ValidationError("rmst: both arms must be present");
  return std::min(max_a, max_b);
}

std::pair<double, double> restricted_mean(const StepFunction& km, double tau) {
  const double area = km.integral(tau);
  double var = 0.0;
  for (std::size_t j = 0; j < km.size() && km.knots[j] <= tau; ++j) {
    const double n = static_cast<double>(km.at_risk[j]);
    const double d = static_cast<double>(km.events[j]);
    if (n <= d) continue;
    const double tail = area - km.integral(km.knots[j]);
    var += tail * tail * d / (n * (n - d));
  }
  return {area, var};
}

RmstResult rmst_compare(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                        std::optional<double> tau) {
  check_lengths(times.size(), events.size(), "rmst_compare");
  check_lengths(times.size(), arms.size(), "rmst_compare");
  const double max_tau = rmst_max_tau(times, arms);
  const double horizon = tau.value_or(max_tau);
  if (!(horizon > 0.0)) throw ValidationError("rmst_compare: tau must be positive");
  if (horizon > max_tau) throw ValidationError("rmst_compare: tau exceeds the smaller arm's largest observed time");
  std::vector<double> ta, tb;
  std::vector<int> ea, eb;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (arms[i] == Arm::A) {
      ta.push_back(times[i]);
      ea.push_back(events[i]);
    } else {
      tb.push_back(times[i]);
      eb.push_back(events[i]);
    }
  }
  auto [ra, va] = restricted_mean(kaplan_meier(ta, ea), horizon);
  auto [rb, vb] = restricted_mean(kaplan_meier(tb, eb), horizon);
  RmstResult out;
  out.tau = horizon;
  out.rmst_a = ra;
  out.rmst_b = rb;
  out.difference = ra - rb;
  out.variance = va + vb;
  out.z = out.variance > 0.0 ? -out.difference / std::sqrt(out.variance) : 0.0;
  out.p = normal_cdf(out.z);
  return out;
}

RmstResult rmst_compare(const TrialDataset& data, std::optional<double> tau) {
  auto t = data.times();
  auto e = data.events();
  auto a = data.arms();
  return rmst_compare(t, e, a, tau);
}

StratifiedLogrankResult stratified_logrank(std::span<const double> times, std::span<const int> events,
                                           std::span<const Arm> arms, std::span<const int> strata) {
  check_lengths(times.size(), strata.size(), "stratified_logrank");
  check_lengths(times.size(), arms.size(), "stratified_logrank");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < strata.size(); ++i) members[strata[i]].push_back(i);
  StratifiedLogrankResult out;
  for (const auto& [label, rows] : members) {
    std::vector<double> t;
    std::vector<int> e;
    std::vector<Arm> a;
    for (auto i : rows) {
      t.push_back(times[i]);
      e.push_back(events[i]);
      a.push_back(arms[i]);
    }
    auto c = count_arms(a);
    if (c.n_a == 0 || c.n_b == 0) {
      out.warnings.push_back("stratum " + std::to_string(label) + " dropped: one arm absent");
      continue;
    }
    auto table = two_arm_risk_table(t, e, a);
    double v = 0.0, num = 0.0;
    for (const auto& r : table) {
      num += r.d_a - r.n_a * r.d / r.n;
      v += hypergeometric_variance(r);
    }
    if (!(v > 0.0)) {
      out.warnings.push_back("stratum " + std::to_string(label) + " dropped: zero variance");
      continue;
    }
    out.numerator += num;
    out.variance += v;
    ++out.strata_used;
  }
  if (out.strata_used == 0) throw ValidationError("stratified_logrank: every stratum is degenerate");
  out.z = out.numerator / std::sqrt(out.variance);
  out.p = normal_cdf(out.z);
  return out;
}

StratifiedLogrankResult stratified_logrank(const TrialDataset& data, std::span<const int> strata) {
  auto t = data.times();
  auto e = data.events();
  auto a = data.arms();
  return stratified_logrank(t, e, a, strata);
}

std::vector<double> smoothed_hazard(const StepFunction& cumulative_hazard, std::span<const double> grid,
                                    double bandwidth) {
  if (!(bandwidth > 0.0)) throw ValidationError("smoothed_hazard: bandwidth must be positive");
  std::vector<double> out(grid.size(), 0.0);
  double prev = cumulative_hazard.initial;
  for (std::size_t j = 0; j < cumulative_hazard.size(); ++j) {
    const double jump = cumulative_hazard.values[j] - prev;
    prev = cumulative_hazard.values[j];
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double u = (grid[g] - cumulative_hazard.knots[j]) / bandwidth;
      if (std::abs(u) <= 1.0) out[g] += 0.75 * (1.0 - u * u) * jump / bandwidth;
    }
  }
  return out;
}

}  // namespace fivestar

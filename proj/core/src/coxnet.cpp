#include "fivestar/coxnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fivestar/error.hpp"
#include "fivestar/nonparam.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

namespace {

struct CoxEval {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

// Subjects ordered by stratum, then by time descending, so each risk set is a prefix within its stratum.
std::vector<std::size_t> risk_order(std::span<const double> times, std::span<const int> strata) {
  std::vector<std::size_t> idx(times.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (!strata.empty() && strata[a] != strata[b]) return strata[a] < strata[b];
    return times[a] > times[b];
  });
  return idx;
}

CoxEval evaluate(std::span<const double> times, std::span<const int> events, const Eigen::MatrixXd& x,
                 std::span<const int> strata, const std::vector<std::size_t>& order, const Eigen::VectorXd& beta) {
  const Eigen::Index k = x.cols();
  CoxEval out;
  out.score = Eigen::VectorXd::Zero(k);
  out.information = Eigen::MatrixXd::Zero(k, k);
  const Eigen::VectorXd eta = x * beta;

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(k, k);
  std::size_t pos = 0;
  const std::size_t n = order.size();
  while (pos < n) {
    const std::size_t first = order[pos];
    const int stratum = strata.empty() ? 0 : strata[first];
    if (pos == 0 || (!strata.empty() && strata[order[pos - 1]] != stratum)) {
      s0 = 0.0;
      s1.setZero();
      s2.setZero();
    }
    const double t = times[first];
    std::size_t end = pos;
    while (end < n && times[order[end]] == t && (strata.empty() || strata[order[end]] == stratum)) ++end;
    double d = 0.0;
    Eigen::VectorXd xsum = Eigen::VectorXd::Zero(k);
    double eta_sum = 0.0;
    for (std::size_t q = pos; q < end; ++q) {
      const auto i = order[q];
      const double r = std::exp(eta(static_cast<Eigen::Index>(i)));
      auto xi = x.row(static_cast<Eigen::Index>(i)).transpose();
      s0 += r;
      s1.noalias() += r * xi;
      s2.noalias() += r * xi * xi.transpose();
      if (events[i]) {
        d += 1.0;
        xsum += xi;
        eta_sum += eta(static_cast<Eigen::Index>(i));
      }
    }
    if (d > 0.0) {
      const Eigen::VectorXd mean = s1 / s0;
      out.loglik += eta_sum - d * std::log(s0);
      out.score += xsum - d * mean;
      out.information.noalias() += d * (s2 / s0 - mean * mean.transpose());
    }
    pos = end;
  }
  return out;
}

}  // namespace

double CoxFit::score_z() const {
  if (score_at_zero.size() != 1) throw ValidationError("score_z is defined for single-covariate fits");
  const double info = information_at_zero(0, 0);
  return info > 0.0 ? score_at_zero(0) / std::sqrt(info) : 0.0;
}

CoxFit cox_fit(std::span<const double> times, std::span<const int> events, const Eigen::MatrixXd& x,
               std::span<const int> strata, const CoxOptions& options) {
  const auto n = static_cast<Eigen::Index>(times.size());
  if (events.size() != times.size() || x.rows() != n) throw ValidationError("cox_fit: input lengths differ");
  if (!strata.empty() && strata.size() != times.size()) throw ValidationError("cox_fit: strata length differs");
  if (std::none_of(events.begin(), events.end(), [](int e) { return e != 0; }))
    throw ValidationError("cox_fit: no events");
  const Eigen::Index k = x.cols();
  if (k == 0) throw ValidationError("cox_fit: no covariates");

  // centering leaves the partial likelihood unchanged and keeps exp() tame
  const Eigen::RowVectorXd center = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - center;
  Eigen::VectorXd sd(k);
  for (Eigen::Index j = 0; j < k; ++j) sd(j) = std::sqrt(xc.col(j).squaredNorm() / static_cast<double>(n));

  const auto order = risk_order(times, strata);
  CoxFit fit;
  fit.strata.assign(strata.begin(), strata.end());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  CoxEval cur = evaluate(times, events, xc, strata, order, beta);
  fit.loglik_null = cur.loglik;
  fit.score_at_zero = cur.score;
  fit.information_at_zero = cur.information;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cur.information);
  const double max_ev = eig.eigenvalues().maxCoeff();
  if (!(max_ev > 0.0) || eig.eigenvalues().minCoeff() <= 1e-10 * max_ev)
    throw NumericalError("cox_fit: design is rank deficient within risk sets");
  fit.score_chisq = cur.score.dot(cur.information.ldlt().solve(cur.score));

  for (int it = 1; it <= options.max_iterations; ++it) {
    fit.iterations = it;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.information);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    Eigen::VectorXd step = ldlt.solve(cur.score);
    CoxEval next;
    Eigen::VectorXd candidate;
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      candidate = beta + step;
      next = evaluate(times, events, xc, strata, order, candidate);
      if (std::isfinite(next.loglik) && next.loglik >= cur.loglik - 1e-12 * std::abs(cur.loglik)) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
    const double rel = std::abs(next.loglik - cur.loglik) / std::max(1.0, std::abs(next.loglik));
    beta = candidate;
    cur = std::move(next);
    if (cur.score.cwiseAbs().maxCoeff() < options.score_tolerance || rel < options.loglik_tolerance) {
      fit.converged = true;
      break;
    }
    if ((beta.cwiseProduct(sd)).cwiseAbs().maxCoeff() > options.divergence_bound) break;
  }
  if ((beta.cwiseProduct(sd)).cwiseAbs().maxCoeff() > options.divergence_bound) fit.converged = false;

  fit.coef = beta;
  fit.loglik = cur.loglik;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.information);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  } else {
    fit.covariance = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::infinity());
    fit.converged = false;
  }
  return fit;
}

CoxFit cox_fit_arm(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                   std::span<const int> strata, const CoxOptions& options) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(arms.size()), 1);
  for (std::size_t i = 0; i < arms.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = arms[i] == Arm::A ? 1.0 : 0.0;
  return cox_fit(times, events, x, strata, options);
}

CoxFit cox_fit_arm(const TrialDataset& data, std::span<const int> strata, const CoxOptions& options) {
  auto t = data.times();
  auto e = data.events();
  auto a = data.arms();
  return cox_fit_arm(t, e, a, strata, options);
}

double cox_loglik(std::span<const double> times, std::span<const int> events, std::span<const double> eta) {
  Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(eta.data(), static_cast<Eigen::Index>(eta.size()));
  const auto order = risk_order(times, {});
  return evaluate(times, events, x, {}, order, Eigen::VectorXd::Ones(1)).loglik;
}

GtResult gt_test(const CoxFit& fit, std::span<const double> times, std::span<const int> events,
                 const Eigen::MatrixXd& x) {
  if (!fit.converged) throw ValidationError("gt_test: fit did not converge");
  if (!fit.strata.empty()) throw ValidationError("gt_test: stratified fits are not supported");
  const Eigen::Index k = x.cols();
  if (fit.coef.size() != k || x.rows() != static_cast<Eigen::Index>(times.size()))
    throw ValidationError("gt_test: design does not match fit");
  if (std::none_of(events.begin(), events.end(), [](int e) { return e != 0; }))
    throw ValidationError("gt_test: no events");

  const auto km = kaplan_meier(times, events);
  const Eigen::RowVectorXd center = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - center;
  const Eigen::VectorXd eta = xc * fit.coef;
  const auto order = risk_order(times, {});

  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k), cross = info, info_gg = info;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(k);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(k, k);
  const std::size_t n = order.size();
  for (std::size_t pos = 0; pos < n;) {
    const double t = times[order[pos]];
    std::size_t end = pos;
    while (end < n && times[order[end]] == t) ++end;
    double d = 0.0;
    Eigen::VectorXd xsum = Eigen::VectorXd::Zero(k);
    for (std::size_t q = pos; q < end; ++q) {
      const auto i = static_cast<Eigen::Index>(order[q]);
      const double r = std::exp(eta(i));
      auto xi = xc.row(i).transpose();
      s0 += r;
      s1.noalias() += r * xi;
      s2.noalias() += r * xi * xi.transpose();
      if (events[order[q]]) {
        d += 1.0;
        xsum += xi;
      }
    }
    if (d > 0.0) {
      const Eigen::VectorXd mean = s1 / s0;
      const Eigen::MatrixXd v = s2 / s0 - mean * mean.transpose();
      const double g = 1.0 - km.before(t);
      u += g * (xsum - d * mean);
      info += d * v;
      cross += d * g * v;
      info_gg += d * g * g * v;
    }
    pos = end;
  }
  const Eigen::MatrixXd eff = info_gg - cross.transpose() * info.ldlt().solve(cross);
  GtResult out;
  out.df = static_cast<int>(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double c = eff(j, j) > 0.0 ? u(j) * u(j) / eff(j, j) : 0.0;
    out.chisq.push_back(c);
    out.p.push_back(chisq_sf(c, 1.0));
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(eff);
  out.global_chisq = ldlt.isPositive() ? u.dot(ldlt.solve(u)) : 0.0;
  out.global_p = chisq_sf(out.global_chisq, static_cast<double>(k));
  return out;
}

}  // namespace fivestar

#include "fivestar/aftavg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fivestar/coxnet.hpp"
#include "fivestar/error.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

std::string to_string(Distribution d) {
  switch (d) {
    case Distribution::weibull: return "weibull";
    case Distribution::lognormal: return "lognormal";
    case Distribution::loglogistic: return "loglogistic";
  }
  return "weibull";
}

Distribution distribution_from_string(const std::string& text) {
  if (text == "weibull") return Distribution::weibull;
  if (text == "lognormal") return Distribution::lognormal;
  if (text == "loglogistic") return Distribution::loglogistic;
  throw ValidationError("unknown distribution '" + text + "'");
}

std::vector<Distribution> all_distributions() {
  return {Distribution::weibull, Distribution::lognormal, Distribution::loglogistic};
}

namespace {

// log density / log survivor of the standardized error and their first two derivatives
struct Terms {
  double v = 0.0, d1 = 0.0, d2 = 0.0;
};

double log_normal_sf(double z) {
  if (z < 30.0) return std::log(normal_sf(z));
  const double z2 = z * z;
  return -0.5 * z2 - std::log(z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Terms log_density(Distribution d, double z) {
  switch (d) {
    case Distribution::weibull: {
      const double e = std::exp(z);
      return {z - e, 1.0 - e, -e};
    }
    case Distribution::lognormal:
      return {-0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi), -z, -1.0};
    case Distribution::loglogistic: {
      const double s = logistic(z);
      return {z - 2.0 * softplus(z), 1.0 - 2.0 * s, -2.0 * s * (1.0 - s)};
    }
  }
  return {};
}

Terms log_survivor(Distribution d, double z) {
  switch (d) {
    case Distribution::weibull: {
      const double e = std::exp(z);
      return {-e, -e, -e};
    }
    case Distribution::lognormal: {
      const double log_q = log_normal_sf(z);
      const double mills = std::exp(-0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - log_q);
      return {log_q, -mills, mills * (z - mills)};
    }
    case Distribution::loglogistic: {
      const double s = logistic(z);
      return {-softplus(z), -s, -s * (1.0 - s)};
    }
  }
  return {};
}

}  // namespace

AftEvaluation aft_evaluate(Distribution d, std::span<const double> times, std::span<const int> events,
                           std::span<const Arm> arms, const Eigen::Vector3d& theta) {
  const double mu = theta[0], delta = theta[1], tau = theta[2];
  const double sigma = std::exp(tau);
  AftEvaluation out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double indicator = arms[i] == Arm::A ? 1.0 : 0.0;
    const double y = std::log(times[i]);
    const double z = (y - mu - delta * indicator) / sigma;
    const bool event = events[i] != 0;
    const Terms t = event ? log_density(d, z) : log_survivor(d, z);
    out.loglik += t.v + (event ? -tau - y : 0.0);
    const double g_mu = -t.d1 / sigma;
    out.gradient[0] += g_mu;
    out.gradient[1] += indicator * g_mu;
    out.gradient[2] += (event ? -1.0 : 0.0) - z * t.d1;
    const double h_mm = t.d2 / (sigma * sigma);
    const double h_mt = (z * t.d2 + t.d1) / sigma;
    out.hessian(0, 0) += h_mm;
    out.hessian(0, 1) += indicator * h_mm;
    out.hessian(1, 1) += indicator * h_mm;
    out.hessian(0, 2) += h_mt;
    out.hessian(1, 2) += indicator * h_mt;
    out.hessian(2, 2) += z * t.d1 + z * z * t.d2;
  }
  out.hessian(1, 0) = out.hessian(0, 1);
  out.hessian(2, 0) = out.hessian(0, 2);
  out.hessian(2, 1) = out.hessian(1, 2);
  return out;
}

AftFit aft_fit(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms, Distribution d,
               const AftOptions& options) {
  if (times.size() != events.size() || times.size() != arms.size())
    throw ValidationError("aft_fit: input lengths differ");
  AftFit fit;
  fit.distribution = d;
  std::size_t n_a = 0, n_b = 0, e_a = 0, e_b = 0;
  std::vector<double> log_event_times;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] > 0.0)) throw ValidationError("aft_fit: times must be positive");
    const bool a = arms[i] == Arm::A;
    (a ? n_a : n_b) += 1;
    if (events[i]) {
      (a ? e_a : e_b) += 1;
      log_event_times.push_back(std::log(times[i]));
    }
  }
  if (n_a == 0 || n_b == 0 || e_a == 0 || e_b == 0) {
    fit.degenerate = true;
    fit.message = n_a == 0 || n_b == 0 ? "arm missing from stratum" : "an arm has no events";
    return fit;
  }

  const double sd = log_event_times.size() > 1 ? sample_sd(log_event_times) : 0.0;
  Eigen::Vector3d theta(mean(log_event_times), 0.0, std::log(std::max(sd, 0.1)));
  AftEvaluation ev = aft_evaluate(d, times, events, arms, theta);
  for (fit.iterations = 0; fit.iterations < options.max_iterations; ++fit.iterations) {
    if (ev.gradient.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    // Newton direction, regularized until the negated Hessian is positive definite
    Eigen::Matrix3d neg = -ev.hessian;
    Eigen::LLT<Eigen::Matrix3d> llt(neg);
    double ridge = 1e-8 * std::max(1.0, neg.diagonal().cwiseAbs().maxCoeff());
    while (llt.info() != Eigen::Success) {
      llt.compute(neg + ridge * Eigen::Matrix3d::Identity());
      ridge *= 10.0;
      if (!std::isfinite(ridge)) break;
    }
    if (llt.info() != Eigen::Success) break;
    const Eigen::Vector3d step = llt.solve(ev.gradient);
    if (step.cwiseAbs().maxCoeff() < 1e-13) {
      fit.converged = true;
      break;
    }
    // near the optimum the loglik change is below rounding; allow for it
    const double slack = 1e-12 * (1.0 + std::abs(ev.loglik));
    double scale = 1.0;
    bool accepted = false;
    for (int half = 0; half < 60; ++half, scale *= 0.5) {
      const Eigen::Vector3d candidate = theta + scale * step;
      AftEvaluation next = aft_evaluate(d, times, events, arms, candidate);
      if (std::isfinite(next.loglik) && next.loglik >= ev.loglik - slack) {
        theta = candidate;
        ev = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      fit.converged = ev.gradient.cwiseAbs().maxCoeff() < 1e3 * options.gradient_tolerance;
      break;
    }
  }
  fit.mu = theta[0];
  fit.delta = theta[1];
  fit.sigma = std::exp(theta[2]);
  fit.loglik = ev.loglik;
  fit.aic = -2.0 * ev.loglik + 2.0 * 3.0;
  Eigen::LLT<Eigen::Matrix3d> info(-ev.hessian);
  if (info.info() != Eigen::Success) {
    fit.converged = false;
    fit.message = "information matrix not positive definite";
    return fit;
  }
  fit.covariance = info.solve(Eigen::Matrix3d::Identity());
  fit.var_delta = fit.covariance(1, 1);
  if (!fit.converged && fit.message.empty()) fit.message = "no convergence";
  return fit;
}

ModelAverage model_average(std::span<const AftFit> fits) {
  ModelAverage out;
  out.weights.assign(fits.size(), 0.0);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : fits)
    if (f.converged && std::isfinite(f.aic)) best = std::min(best, f.aic);
  if (!std::isfinite(best)) throw NumericalError("model_average: no converged fit");
  double total = 0.0;
  for (std::size_t m = 0; m < fits.size(); ++m) {
    if (!fits[m].converged || !std::isfinite(fits[m].aic)) continue;
    out.weights[m] = std::exp(-0.5 * (fits[m].aic - best));
    total += out.weights[m];
    ++out.used;
  }
  for (auto& w : out.weights) w /= total;
  for (std::size_t m = 0; m < fits.size(); ++m) out.delta += out.weights[m] * fits[m].delta;
  double root = 0.0;
  for (std::size_t m = 0; m < fits.size(); ++m) {
    if (out.weights[m] == 0.0) continue;
    const double dev = fits[m].delta - out.delta;
    root += out.weights[m] * std::sqrt(fits[m].var_delta + dev * dev);
  }
  out.variance = root * root;
  return out;
}

PhIdentity weibull_ph_identity_check(const AftFit& weibull) {
  if (weibull.distribution != Distribution::weibull) throw ValidationError("PH identity needs a Weibull fit");
  PhIdentity out;
  out.beta = -weibull.delta / weibull.sigma;
  out.theta = std::exp(out.beta);
  return out;
}

void fill_time_ratio(StratumEffect& effect, double alpha, double flag_threshold) {
  const double se = std::sqrt(effect.variance);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  effect.tr = std::exp(effect.delta);
  effect.tr_lower = std::exp(effect.delta - z * se);
  effect.tr_upper = std::exp(effect.delta + z * se);
  effect.pr_tr_gt_1 = normal_cdf(effect.delta / se);
  effect.flagged = effect.pr_tr_gt_1 < flag_threshold;
}

StratumEffect stratum_summary(std::span<const double> times, std::span<const int> events, std::span<const Arm> arms,
                              int stratum, const StratumOptions& options) {
  StratumEffect out;
  out.stratum = stratum;
  out.n = times.size();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const bool a = arms[i] == Arm::A;
    (a ? out.n_a : out.n_b) += 1;
    if (events[i]) (a ? out.events_a : out.events_b) += 1;
  }
  for (auto d : options.distributions) out.fits.push_back(aft_fit(times, events, arms, d, options.aft));
  if (std::any_of(out.fits.begin(), out.fits.end(), [](const AftFit& f) { return f.degenerate; })) {
    out.degenerate = true;
    out.message = out.fits.front().message;
    return out;
  }
  if (std::none_of(out.fits.begin(), out.fits.end(), [](const AftFit& f) { return f.converged; })) {
    out.degenerate = true;
    out.message = "no AFT model converged";
    return out;
  }
  const auto avg = model_average(out.fits);
  out.weights = avg.weights;
  out.delta = avg.delta;
  out.variance = avg.variance;
  fill_time_ratio(out, options.alpha, options.flag_threshold);

  try {
    const CoxFit cox = cox_fit_arm(times, events, arms);
    if (!cox.converged) throw NumericalError("Cox fit did not converge");
    auto& hr = out.hr;
    hr.log_hr = cox.coef[0];
    hr.se = cox.se(0);
    const double z = normal_quantile(1.0 - options.alpha / 2.0);
    hr.hr = std::exp(hr.log_hr);
    hr.lower = std::exp(hr.log_hr - z * hr.se);
    hr.upper = std::exp(hr.log_hr + z * hr.se);
    hr.pr_hr_lt_1 = normal_cdf(-hr.log_hr / hr.se);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(times.size()), 1);
    for (std::size_t i = 0; i < times.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = arms[i] == Arm::A ? 1.0 : 0.0;
    hr.gt_p = gt_test(cox, times, events, x).global_p;
    hr.available = true;
  } catch (const Error& e) {
    out.hr.available = false;
    out.hr.message = e.what();
  }
  return out;
}

nlohmann::json to_json(const AftFit& fit) {
  nlohmann::json j;
  j["distribution"] = to_string(fit.distribution);
  j["converged"] = fit.converged;
  if (fit.degenerate) {
    j["degenerate"] = true;
    j["message"] = fit.message;
    return j;
  }
  j["mu"] = fit.mu;
  j["delta"] = fit.delta;
  j["sigma"] = fit.sigma;
  j["loglik"] = fit.loglik;
  j["aic"] = fit.aic;
  j["var_delta"] = fit.var_delta;
  j["iterations"] = fit.iterations;
  return j;
}

nlohmann::json to_json(const StratumEffect& e) {
  nlohmann::json j;
  j["stratum"] = e.stratum;
  j["n"] = e.n;
  j["n_a"] = e.n_a;
  j["n_b"] = e.n_b;
  j["events_a"] = e.events_a;
  j["events_b"] = e.events_b;
  j["degenerate"] = e.degenerate;
  if (!e.message.empty()) j["message"] = e.message;
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& f : e.fits) fits.push_back(to_json(f));
  j["fits"] = fits;
  if (e.degenerate) return j;
  j["weights"] = e.weights;
  j["delta"] = e.delta;
  j["variance"] = e.variance;
  j["tr"] = e.tr;
  j["tr_ci"] = {e.tr_lower, e.tr_upper};
  j["pr_tr_gt_1"] = e.pr_tr_gt_1;
  j["flagged"] = e.flagged;
  nlohmann::json hr;
  hr["available"] = e.hr.available;
  if (e.hr.available) {
    hr["log_hr"] = e.hr.log_hr;
    hr["se"] = e.hr.se;
    hr["hr"] = e.hr.hr;
    hr["ci"] = {e.hr.lower, e.hr.upper};
    hr["pr_hr_lt_1"] = e.hr.pr_hr_lt_1;
    hr["gt_p"] = e.hr.gt_p;
  } else {
    hr["message"] = e.hr.message;
  }
  j["hr"] = hr;
  return j;
}

}  // namespace fivestar

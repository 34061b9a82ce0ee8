#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "fivestar/coxnet.hpp"
#include "fivestar/error.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

namespace {

constexpr double kPsiFloor = 1e-3;

// Cox working quantities for coordinate descent on time-sorted, standardized data.
class CoxnetProblem {
 public:
  CoxnetProblem(std::span<const double> times, std::span<const int> events, const Eigen::MatrixXd& x,
                std::span<const std::size_t> rows) {
    const std::size_t n = rows.size();
    std::vector<std::size_t> order(rows.begin(), rows.end());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
    n_ = n;
    p_ = static_cast<std::size_t>(x.cols());
    time_.resize(n);
    event_.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
      time_[q] = times[order[q]];
      event_[q] = events[order[q]] ? 1.0 : 0.0;
    }
    // standardize with population moments over the rows in use
    x_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p_));
    center_.assign(p_, 0.0);
    scale_.assign(p_, 0.0);
    for (std::size_t j = 0; j < p_; ++j) {
      double m = 0.0;
      for (std::size_t q = 0; q < n; ++q) m += x(static_cast<Eigen::Index>(order[q]), static_cast<Eigen::Index>(j));
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::size_t q = 0; q < n; ++q) {
        double d = x(static_cast<Eigen::Index>(order[q]), static_cast<Eigen::Index>(j)) - m;
        v += d * d;
      }
      v /= static_cast<double>(n);
      center_[j] = m;
      scale_[j] = std::sqrt(v);
      const double s = scale_[j] > 0.0 ? scale_[j] : 1.0;
      for (std::size_t q = 0; q < n; ++q)
        x_(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(j)) =
            scale_[j] > 0.0 ? (x(static_cast<Eigen::Index>(order[q]), static_cast<Eigen::Index>(j)) - m) / s : 0.0;
    }
    // distinct event times: risk set start (first sorted index with that time) and event count
    std::size_t q = 0;
    last_group_.assign(n, -1);
    int g = -1;
    while (q < n) {
      std::size_t end = q;
      double d = 0.0;
      while (end < n && time_[end] == time_[q]) {
        d += event_[end];
        ++end;
      }
      if (d > 0.0) {
        group_start_.push_back(q);
        group_events_.push_back(d);
        ++g;
      }
      for (std::size_t r = q; r < end; ++r) last_group_[r] = g;
      q = end;
    }
    if (group_start_.empty()) throw ValidationError("elastic net: no events");
    exp_eta_.resize(n);
    suffix_.resize(n);
    weight_.resize(static_cast<Eigen::Index>(n));
    grad_.resize(static_cast<Eigen::Index>(n));
    cum_a_.resize(group_start_.size());
    cum_b_.resize(group_start_.size());
  }

  std::size_t n() const { return n_; }
  std::size_t p() const { return p_; }
  const Eigen::MatrixXd& x() const { return x_; }
  double scale(std::size_t j) const { return scale_[j]; }

  /// Breslow log partial likelihood of the saturated model, -sum d log d.
  double saturated_loglik() const {
    double s = 0.0;
    for (double d : group_events_) s -= d * std::log(d);
    return s;
  }

  /// Breslow log partial likelihood at eta; also fills the eta-gradient and
  /// the diagonal of the eta-Hessian used as working weights.
  double update(const Eigen::VectorXd& eta) {
    const std::size_t n = n_;
    const double shift = eta.maxCoeff();
    for (std::size_t q = 0; q < n; ++q) exp_eta_[q] = std::exp(eta[static_cast<Eigen::Index>(q)] - shift);
    double acc = 0.0;
    for (std::size_t q = n; q-- > 0;) {
      acc += exp_eta_[q];
      suffix_[q] = acc;
    }
    double loglik = 0.0;
    for (std::size_t q = 0; q < n; ++q) loglik += event_[q] * eta[static_cast<Eigen::Index>(q)];
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < group_start_.size(); ++k) {
      const double r = suffix_[group_start_[k]];
      const double d = group_events_[k];
      loglik -= d * (std::log(r) + shift);
      a += d / r;
      b += d / (r * r);
      cum_a_[k] = a;
      cum_b_[k] = b;
    }
    for (std::size_t q = 0; q < n; ++q) {
      const auto i = static_cast<Eigen::Index>(q);
      const int g = last_group_[q];
      if (g < 0) {
        grad_[i] = event_[q];
        weight_[i] = 0.0;
        continue;
      }
      const double e = exp_eta_[q];
      const double ca = cum_a_[static_cast<std::size_t>(g)];
      grad_[i] = event_[q] - e * ca;
      weight_[i] = e * ca - e * e * cum_b_[static_cast<std::size_t>(g)];
    }
    loglik_ = loglik;
    return loglik;
  }

  /// Log likelihood from the most recent update().
  double loglik_cached() const { return loglik_; }
  const Eigen::VectorXd& gradient() const { return grad_; }
  const Eigen::VectorXd& weights() const { return weight_; }

 private:
  std::size_t n_ = 0, p_ = 0;
  std::vector<double> time_, event_;
  Eigen::MatrixXd x_;
  std::vector<double> center_, scale_;
  std::vector<std::size_t> group_start_;
  std::vector<double> group_events_;
  std::vector<int> last_group_;
  std::vector<double> exp_eta_, suffix_, cum_a_, cum_b_;
  Eigen::VectorXd weight_, grad_;
  double loglik_ = 0.0;
};

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

double penalty(const Eigen::VectorXd& beta, double lambda, double psi) {
  return lambda * (psi * beta.lpNorm<1>() + 0.5 * (1.0 - psi) * beta.squaredNorm());
}

// Maximizes (2/N) loglik - penalty at one lambda, warm-started from `beta`
// (standardized scale). Each outer step solves the penalized quadratic model
// with diagonal working weights over a strong-rule candidate set, verifies the
// remaining coordinates through their KKT conditions, then step-halves on the
// exact objective.
bool solve_lambda(CoxnetProblem& prob, Eigen::VectorXd& beta, double lambda, double lambda_prev, double psi,
                  const EnetOptions& opt, std::vector<double>* trace) {
  const auto n = static_cast<Eigen::Index>(prob.n());
  const auto p = static_cast<Eigen::Index>(prob.p());
  const Eigen::MatrixXd& x = prob.x();
  const double c = 2.0 / static_cast<double>(n);
  const double l1 = lambda * psi, l2 = lambda * (1.0 - psi);

  Eigen::VectorXd eta = x * beta;
  double objective = c * prob.update(eta) - penalty(beta, lambda, psi);
  if (trace) trace->push_back(objective);

  std::vector<char> in_set(static_cast<std::size_t>(p), 0);
  {
    const Eigen::VectorXd grad = x.transpose() * prob.gradient();
    const double strong = psi * std::max(0.0, 2.0 * lambda - lambda_prev);
    for (Eigen::Index j = 0; j < p; ++j)
      if (prob.scale(static_cast<std::size_t>(j)) > 0.0 && (beta[j] != 0.0 || c * std::abs(grad[j]) > strong))
        in_set[static_cast<std::size_t>(j)] = 1;
  }

  Eigen::VectorXd wr(n), h = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd wx(n, p);
  std::vector<char> cached(static_cast<std::size_t>(p));
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    const Eigen::VectorXd& w = prob.weights();
    wr = prob.gradient();  // w * working residual
    std::fill(cached.begin(), cached.end(), 0);
    const Eigen::VectorXd beta_old = beta;
    const Eigen::VectorXd eta_old = eta;

    auto prepare = [&](Eigen::Index j) {
      if (cached[static_cast<std::size_t>(j)]) return;
      wx.col(j) = w.cwiseProduct(x.col(j));
      h[j] = c * wx.col(j).dot(x.col(j));
      cached[static_cast<std::size_t>(j)] = 1;
    };

    int sweeps = 0;
    for (;;) {
      for (; sweeps < opt.max_sweeps; ++sweeps) {
        double change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (!in_set[static_cast<std::size_t>(j)]) continue;
          prepare(j);
          const double old = beta[j];
          const double z = c * x.col(j).dot(wr) + h[j] * old;
          const double updated = soft_threshold(z, l1) / (h[j] + l2);
          const double delta = updated - old;
          if (delta == 0.0) continue;
          beta[j] = updated;
          wr.noalias() -= delta * wx.col(j);
          eta.noalias() += delta * x.col(j);
          change = std::max(change, h[j] * delta * delta);
        }
        if (change < opt.tolerance) break;
      }
      // coordinates outside the candidate set must satisfy |score| <= l1
      const Eigen::VectorXd grad = x.transpose() * wr;
      bool violated = false;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (in_set[static_cast<std::size_t>(j)] || prob.scale(static_cast<std::size_t>(j)) == 0.0) continue;
        if (c * std::abs(grad[j]) > l1) {
          in_set[static_cast<std::size_t>(j)] = 1;
          violated = true;
        }
      }
      if (!violated || sweeps >= opt.max_sweeps) break;
    }

    // step halving on the exact objective keeps the outer iterations monotone
    double new_objective = -std::numeric_limits<double>::infinity();
    for (int half = 0; half < 40; ++half) {
      new_objective = c * prob.update(eta) - penalty(beta, lambda, psi);
      if (new_objective >= objective - 1e-15 * std::abs(objective)) break;
      beta = 0.5 * (beta + beta_old);
      eta = 0.5 * (eta + eta_old);
    }
    if (new_objective < objective) {
      beta = beta_old;
      eta = eta_old;
      prob.update(eta);
      return true;  // no further ascent possible
    }
    double change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double d = beta[j] - beta_old[j];
      change = std::max(change, (cached[static_cast<std::size_t>(j)] ? h[j] : 1.0) * d * d);
    }
    objective = new_objective;
    if (trace) trace->push_back(objective);
    if (change < opt.tolerance) return true;
  }
  return false;
}

EnetPath run_path(CoxnetProblem& prob, double psi, std::span<const double> lambdas, const EnetOptions& opt) {
  const std::size_t p = prob.p();
  EnetPath path;
  path.psi = psi;
  path.lambdas.assign(lambdas.begin(), lambdas.end());
  path.coef = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(lambdas.size()));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  const double saturated = prob.saturated_loglik();
  double null_dev = 0.0, previous_ratio = 0.0;
  std::size_t computed = lambdas.size();
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    std::vector<double> trace;
    const double previous = l == 0 ? lambdas[0] : lambdas[l - 1];
    const bool ok = solve_lambda(prob, beta, lambdas[l], previous, psi, opt, opt.trace ? &trace : nullptr);
    for (std::size_t j = 0; j < p; ++j)
      path.coef(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) =
          prob.scale(j) > 0.0 ? beta[static_cast<Eigen::Index>(j)] / prob.scale(j) : 0.0;
    path.deviance.push_back(-2.0 * prob.loglik_cached());
    path.converged.push_back(ok);
    if (opt.trace) path.objective_trace.push_back(std::move(trace));
    if (!opt.early_stop) continue;
    const double dev = 2.0 * (saturated - prob.loglik_cached());
    if (l == 0) null_dev = dev;
    const double ratio = null_dev > 0.0 ? 1.0 - dev / null_dev : 0.0;
    if (l + 1 >= opt.min_lambdas && (ratio - previous_ratio < opt.fdev * ratio || ratio > opt.devmax)) {
      computed = l + 1;
      break;
    }
    previous_ratio = ratio;
  }
  if (computed < lambdas.size()) {
    path.lambdas.resize(computed);
    path.coef.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(computed));
  }
  return path;
}

void check_psi(double psi) {
  if (!(psi >= 0.0 && psi <= 1.0)) throw ValidationError("elastic net: psi must lie in [0, 1]");
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

double lambda_max_for(CoxnetProblem& prob, double psi) {
  prob.update(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(prob.n())));
  const Eigen::VectorXd grad = prob.x().transpose() * prob.gradient();
  const double best = grad.cwiseAbs().maxCoeff() * 2.0 / static_cast<double>(prob.n());
  return best / std::max(psi, kPsiFloor);
}

}  // namespace

Design build_design(const BlindedDataset& data, std::span<const std::size_t> covariates) {
  Design d;
  std::vector<std::vector<double>> cols;
  for (auto c : covariates) {
    const auto& spec = data.specs().at(c);
    auto values = data.column(c);
    if (spec.kind == CovariateKind::nominal) {
      for (std::size_t level = 1; level < spec.levels.size(); ++level) {
        std::vector<double> col(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) col[i] = values[i] == static_cast<double>(level) ? 1.0 : 0.0;
        cols.push_back(std::move(col));
        d.column_names.push_back(spec.name + "=" + spec.levels[level]);
        d.source.push_back(c);
      }
    } else {
      cols.emplace_back(values.begin(), values.end());
      d.column_names.push_back(spec.name);
      d.source.push_back(c);
    }
  }
  d.x.resize(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < data.size(); ++i)
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
  return d;
}

Design build_design(const BlindedDataset& data) {
  std::vector<std::size_t> all(data.covariate_count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return build_design(data, all);
}

double enet_lambda_max(std::span<const double> times, std::span<const int> events, const Eigen::MatrixXd& x,
                       double psi) {
  check_psi(psi);
  auto rows = all_rows(times.size());
  CoxnetProblem prob(times, events, x, rows);
  return lambda_max_for(prob, psi);
}

std::vector<double> enet_lambda_grid(double lambda_max, std::size_t count, double ratio) {
  if (count == 0) return {};
  if (count == 1) return {lambda_max};
  std::vector<double> grid(count);
  const double step = std::log(ratio) / static_cast<double>(count - 1);
  for (std::size_t l = 0; l < count; ++l) grid[l] = lambda_max * std::exp(step * static_cast<double>(l));
  grid.front() = lambda_max;
  return grid;
}

EnetPath enet_path(std::span<const double> times, std::span<const int> events, const Eigen::MatrixXd& x, double psi,
                   std::span<const double> lambdas, const EnetOptions& options) {
  check_psi(psi);
  if (events.size() != times.size() || x.rows() != static_cast<Eigen::Index>(times.size()))
    throw ValidationError("enet_path: input lengths differ");
  auto rows = all_rows(times.size());
  CoxnetProblem prob(times, events, x, rows);
  std::vector<double> grid(lambdas.begin(), lambdas.end());
  if (grid.empty()) grid = enet_lambda_grid(lambda_max_for(prob, psi), options.lambda_count, options.lambda_min_ratio);
  return run_path(prob, psi, grid, options);
}

EnetPath enet_path(const BlindedDataset& data, double psi, std::span<const double> lambdas,
                   const EnetOptions& options) {
  auto design = build_design(data);
  return enet_path(data.times(), data.events(), design.x, psi, lambdas, options);
}

std::vector<double> CvOptions::default_psi_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 19; ++k) grid.push_back(0.05 * k);
  return grid;
}

std::vector<int> make_folds(std::span<const int> events, std::size_t folds, std::uint64_t seed) {
  const std::size_t n = events.size();
  if (folds < 2 || n < folds) throw ValidationError("cv: need at least `folds` subjects and two folds");
  std::vector<int> base(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = static_cast<int>(i % folds);
  for (std::uint64_t attempt = 0; attempt < 20; ++attempt) {
    Rng rng(mix_seed(seed, attempt));
    std::vector<int> ids = base;
    shuffle(ids, rng);
    std::vector<int> fold_events(folds, 0);
    for (std::size_t i = 0; i < n; ++i) fold_events[static_cast<std::size_t>(ids[i])] += events[i] ? 1 : 0;
    if (std::all_of(fold_events.begin(), fold_events.end(), [](int c) { return c > 0; })) return ids;
  }
  throw ValidationError("cv: could not form folds with at least one event each");
}

namespace {

struct PsiCurve {
  std::vector<double> lambdas;
  std::vector<double> cvm;
  std::vector<double> cvsd;
};

PsiCurve cv_curve(std::span<const double> times, std::span<const int> events, const Eigen::MatrixXd& x, double psi,
                  const std::vector<int>& fold_of, std::size_t folds, const EnetOptions& opt) {
  const std::size_t n = times.size();
  auto rows = all_rows(n);
  CoxnetProblem full(times, events, x, rows);
  PsiCurve curve;
  // the full-data path fixes the grid; fold paths that stop sooner hold their last fit
  const auto grid = enet_lambda_grid(lambda_max_for(full, psi), opt.lambda_count, opt.lambda_min_ratio);
  curve.lambdas = run_path(full, psi, grid, opt).lambdas;
  const std::size_t L = curve.lambdas.size();

  std::vector<std::vector<double>> cvraw(folds, std::vector<double>(L));
  std::vector<double> fold_events(folds, 0.0);
  const auto p = static_cast<Eigen::Index>(full.p());
  Eigen::VectorXd beta_full(p);
  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<std::size_t>(fold_of[i]) == k) fold_events[k] += events[i] ? 1.0 : 0.0;
      else train.push_back(i);
    }
    CoxnetProblem prob(times, events, x, train);
    EnetPath path = run_path(prob, psi, curve.lambdas, opt);
    const std::size_t stop = path.lambdas.size();
    double held = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      if (l >= stop) {
        cvraw[k][l] = held;
        continue;
      }
      if (!path.converged[l]) {
        cvraw[k][l] = held = std::numeric_limits<double>::infinity();
        continue;
      }
      // full-data likelihood of the training fit; centering only shifts eta
      for (Eigen::Index j = 0; j < p; ++j)
        beta_full[j] = path.coef(j, static_cast<Eigen::Index>(l)) * full.scale(static_cast<std::size_t>(j));
      const double ll_full = full.update(full.x() * beta_full);
      cvraw[k][l] = held = -2.0 * ll_full - path.deviance[l];
    }
  }
  double total_events = 0.0;
  for (double e : fold_events) total_events += e;
  curve.cvm.assign(L, 0.0);
  curve.cvsd.assign(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    double m = 0.0;
    bool finite = true;
    for (std::size_t k = 0; k < folds; ++k) {
      if (!std::isfinite(cvraw[k][l])) finite = false;
      m += cvraw[k][l];  // == fold_events * (cvraw / fold_events)
    }
    if (!finite) {
      curve.cvm[l] = curve.cvsd[l] = std::numeric_limits<double>::infinity();
      continue;
    }
    m /= total_events;
    double v = 0.0;
    for (std::size_t k = 0; k < folds; ++k) {
      const double r = cvraw[k][l] / fold_events[k] - m;
      v += fold_events[k] * r * r;
    }
    v /= total_events;
    curve.cvm[l] = m;
    curve.cvsd[l] = std::sqrt(v / static_cast<double>(folds - 1));
  }
  return curve;
}

std::size_t pick_lambda(const PsiCurve& c, LambdaRule rule) {
  std::size_t best = 0;
  for (std::size_t l = 1; l < c.cvm.size(); ++l)
    if (c.cvm[l] < c.cvm[best]) best = l;  // strict: ties keep the larger lambda
  if (rule == LambdaRule::lambda_min) return best;
  const double bound = c.cvm[best] + c.cvsd[best];
  for (std::size_t l = 0; l <= best; ++l)
    if (c.cvm[l] <= bound) return l;
  return best;
}

}  // namespace

ElasticNetFit cv_select(const BlindedDataset& data, const CvOptions& options) {
  std::vector<std::size_t> all(data.covariate_count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return cv_select(data, all, options);
}

ElasticNetFit cv_select(const BlindedDataset& data, std::span<const std::size_t> covariates,
                        const CvOptions& options) {
  if (options.psi_grid.empty()) throw ValidationError("cv_select: empty psi grid");
  for (double psi : options.psi_grid) check_psi(psi);
  const auto design = build_design(data, covariates);
  if (design.x.cols() == 0) throw ValidationError("cv_select: no covariates");
  const auto times = data.times();
  const auto events = data.events();
  const auto fold_of = make_folds(events, options.folds, options.seed);

  const std::size_t cells = options.psi_grid.size();
  std::vector<PsiCurve> curves(cells);
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, cells));
  if (workers == 1) {
    for (std::size_t c = 0; c < cells; ++c)
      curves[c] = cv_curve(times, events, design.x, options.psi_grid[c], fold_of, options.folds, options.enet);
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t c = w; c < cells; c += workers)
          curves[c] = cv_curve(times, events, design.x, options.psi_grid[c], fold_of, options.folds, options.enet);
      }));
    }
    for (auto& j : jobs) j.get();
  }

  ElasticNetFit fit;
  fit.column_names = design.column_names;
  std::size_t best_cell = 0;
  double best_dev = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cells; ++c) {
    const auto& cv = curves[c];
    for (std::size_t l = 0; l < cv.lambdas.size(); ++l)
      fit.surface.push_back({options.psi_grid[c], cv.lambdas[l], cv.cvm[l], cv.cvsd[l]});
    const double m = *std::min_element(cv.cvm.begin(), cv.cvm.end());
    if (m < best_dev) {  // strict: ties keep the smaller psi
      best_dev = m;
      best_cell = c;
    }
  }
  if (!std::isfinite(best_dev)) throw NumericalError("cv_select: every cross-validation cell failed");
  const auto& chosen = curves[best_cell];
  fit.psi = options.psi_grid[best_cell];
  fit.lambda_index = pick_lambda(chosen, options.rule);
  fit.lambda = chosen.lambdas[fit.lambda_index];
  fit.path = enet_path(times, events, design.x, fit.psi, chosen.lambdas, options.enet);
  const auto column = std::min<Eigen::Index>(static_cast<Eigen::Index>(fit.lambda_index), fit.path.coef.cols() - 1);
  fit.coef = fit.path.coef.col(column);
  for (std::size_t j = 0; j < design.source.size(); ++j) {
    if (fit.coef(static_cast<Eigen::Index>(j)) == 0.0) continue;
    const std::size_t src = design.source[j];
    if (std::find(fit.selected_indices.begin(), fit.selected_indices.end(), src) == fit.selected_indices.end())
      fit.selected_indices.push_back(src);
  }
  std::sort(fit.selected_indices.begin(), fit.selected_indices.end());
  for (auto s : fit.selected_indices) fit.selected.push_back(data.specs()[s].name);
  return fit;
}

nlohmann::json to_json(const ElasticNetFit& fit) {
  nlohmann::json j;
  j["psi"] = fit.psi;
  j["lambda"] = fit.lambda;
  j["lambda_index"] = fit.lambda_index;
  j["selected"] = fit.selected;
  nlohmann::json coefs = nlohmann::json::object();
  for (std::size_t c = 0; c < fit.column_names.size(); ++c) {
    const double b = fit.coef(static_cast<Eigen::Index>(c));
    if (b != 0.0) coefs[fit.column_names[c]] = b;
  }
  j["coefficients"] = coefs;
  return j;
}

}  // namespace fivestar

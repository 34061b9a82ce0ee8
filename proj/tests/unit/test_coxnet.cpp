#include <doctest.h>

#include <cmath>
#include <functional>

#include <boost/math/tools/minima.hpp>

#include "fivestar/coxnet.hpp"
#include "fivestar/error.hpp"
#include "fivestar/nonparam.hpp"
#include "helpers.hpp"

namespace fs = fivestar;
using testing::Arm;

namespace {

std::vector<double> linear_predictor(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = x * beta;
  return {eta.data(), eta.data() + eta.size()};
}

double loglik_at(const testing::Sample& s, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  return fs::cox_loglik(s.t, s.e, linear_predictor(x, beta));
}

}  // namespace

TEST_CASE("Cox partial likelihood against a direct sum") {
  std::vector<double> t{1, 2, 3, 4};
  std::vector<int> e{1, 1, 0, 1};
  std::vector<double> eta{0.2, -0.1, 0.5, 0.3};
  // risk sets {all}, {2,3,4}, {4}
  const double direct = (0.2 - std::log(std::exp(0.2) + std::exp(-0.1) + std::exp(0.5) + std::exp(0.3))) +
                        (-0.1 - std::log(std::exp(-0.1) + std::exp(0.5) + std::exp(0.3))) + 0.0;
  CHECK(fs::cox_loglik(t, e, eta) == doctest::Approx(direct).epsilon(1e-14));

  // Breslow: tied events share one denominator
  std::vector<double> tt{1, 1, 2};
  std::vector<int> et{1, 1, 1};
  std::vector<double> zt{0.0, 0.4, -0.2};
  const double den = std::exp(0.0) + std::exp(0.4) + std::exp(-0.2);
  const double breslow = 0.4 - 2 * std::log(den) + 0.0;
  CHECK(fs::cox_loglik(tt, et, zt) == doctest::Approx(breslow).epsilon(1e-14));
}

TEST_CASE("Cox fit") {
  SUBCASE("identical arms give beta = 0") {
    std::vector<double> t{1, 1, 2, 2, 3, 3};
    std::vector<int> e{1, 1, 1, 1, 0, 0};
    std::vector<Arm> a{Arm::A, Arm::B, Arm::A, Arm::B, Arm::A, Arm::B};
    const auto fit = fs::cox_fit_arm(t, e, a);
    CHECK(fit.converged);
    CHECK(fit.coef(0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("score test at zero is the logrank test") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto s = testing::exponential_trial(150, 0.8, seed);
      const auto fit = fs::cox_fit_arm(s.t, s.e, s.a);
      const auto lr = fs::weighted_logrank(s.t, s.e, s.a, 0, 0);
      CHECK(fit.score_z() == doctest::Approx(lr.z).epsilon(1e-10));
    }
  }
  SUBCASE("stationary point with inverse-Hessian covariance") {
    const auto x = testing::normal_matrix(300, 3, 11);
    const Eigen::Vector3d beta(0.5, -0.3, 0.0);
    const auto s = testing::cox_sample(x, beta, 12);
    const auto fit = fs::cox_fit(s.t, s.e, x);
    REQUIRE(fit.converged);
    CHECK(fit.loglik == doctest::Approx(loglik_at(s, x, fit.coef)).epsilon(1e-12));
    const double h = 1e-4;
    Eigen::Matrix3d hess;
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd bp = fit.coef, bm = fit.coef;
      bp(j) += h;
      bm(j) -= h;
      CHECK(std::abs(loglik_at(s, x, bp) - loglik_at(s, x, bm)) / (2 * h) < 1e-5);
      for (int k = 0; k < 3; ++k) {
        Eigen::VectorXd pp = fit.coef, pm = fit.coef, mp = fit.coef, mm = fit.coef;
        pp(j) += h, pp(k) += h;
        pm(j) += h, pm(k) -= h;
        mp(j) -= h, mp(k) += h;
        mm(j) -= h, mm(k) -= h;
        hess(j, k) = (loglik_at(s, x, pp) - loglik_at(s, x, pm) - loglik_at(s, x, mp) + loglik_at(s, x, mm)) /
                     (4 * h * h);
      }
    }
    const Eigen::Matrix3d cov = (-hess).inverse();
    CHECK((cov - fit.covariance).cwiseAbs().maxCoeff() < 1e-4 * cov.cwiseAbs().maxCoeff());
  }
  SUBCASE("recovers the simulating coefficients") {
    const auto x = testing::normal_matrix(2000, 2, 21);
    const Eigen::Vector2d beta(0.7, -0.4);
    const auto s = testing::cox_sample(x, beta, 22);
    const auto fit = fs::cox_fit(s.t, s.e, x);
    for (int j = 0; j < 2; ++j) CHECK(std::abs(fit.coef(j) - beta(j)) < 3 * fit.se(j));
  }
  SUBCASE("stratified fit equals the fit on a duplicated sample") {
    const auto s = testing::exponential_trial(200, 0.6, 31);
    auto t = s.t;
    auto e = s.e;
    auto a = s.a;
    t.insert(t.end(), s.t.begin(), s.t.end());
    e.insert(e.end(), s.e.begin(), s.e.end());
    a.insert(a.end(), s.a.begin(), s.a.end());
    std::vector<int> strata(t.size(), 1);
    std::fill(strata.begin() + 200, strata.end(), 2);
    const auto one = fs::cox_fit_arm(s.t, s.e, s.a);
    const auto two = fs::cox_fit_arm(t, e, a, strata);
    CHECK(two.coef(0) == doctest::Approx(one.coef(0)).epsilon(1e-8));
    CHECK(two.se(0) == doctest::Approx(one.se(0) / std::sqrt(2.0)).epsilon(1e-8));
  }
  SUBCASE("rank-deficient design throws") {
    auto x = testing::normal_matrix(100, 2, 41);
    x.col(1) = 2 * x.col(0);
    const auto s = testing::cox_sample(x.leftCols(1), Eigen::VectorXd::Constant(1, 0.3), 42);
    CHECK_THROWS_AS(fs::cox_fit(s.t, s.e, x), fs::NumericalError);
  }
}

TEST_CASE("Grambsch-Therneau test") {
  SUBCASE("rarely rejects under proportional hazards") {
    int rejected = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
      const auto s = testing::exponential_trial(200, 0.7, 1000 + r);
      const auto x = Eigen::MatrixXd(Eigen::VectorXd::NullaryExpr(
          200, [&](Eigen::Index i) { return s.a[static_cast<std::size_t>(i)] == Arm::A ? 1.0 : 0.0; }));
      const auto fit = fs::cox_fit(s.t, s.e, x);
      if (fs::gt_test(fit, s.t, s.e, x).global_p < 0.05) ++rejected;
    }
    // 5% level, 3 binomial standard errors
    CHECK(rejected <= 5 + 3 * std::sqrt(reps * 0.05 * 0.95));
  }
  SUBCASE("detects crossing hazards") {
    fs::Rng rng(5);
    testing::Sample s;
    Eigen::MatrixXd x(600, 1);
    for (int i = 0; i < 600; ++i) {
      const bool arm_a = i % 2 == 0;
      // arm A: Weibull shape 3; arm B: exponential with the same median
      const double u = fs::uniform01(rng);
      const double t = arm_a ? std::pow(-std::log(1 - u), 1.0 / 3) : -std::log(1 - u);
      s.t.push_back(std::min(t, 3.0));
      s.e.push_back(t <= 3.0 ? 1 : 0);
      s.a.push_back(arm_a ? Arm::A : Arm::B);
      x(i, 0) = arm_a ? 1.0 : 0.0;
    }
    const auto fit = fs::cox_fit(s.t, s.e, x);
    const auto gt = fs::gt_test(fit, s.t, s.e, x);
    CHECK(gt.df == 1);
    CHECK(gt.global_p < 1e-4);
    CHECK(gt.p[0] == doctest::Approx(gt.global_p));
  }
}

TEST_CASE("elastic-net path") {
  const auto x = testing::normal_matrix(300, 6, 51);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(6);
  beta(0) = 0.8;
  beta(1) = -0.5;
  const auto s = testing::cox_sample(x, beta, 52);

  SUBCASE("everything is zero at lambda_max and not just below") {
    for (double psi : {1.0, 0.5, 0.1}) {
      const double lmax = fs::enet_lambda_max(s.t, s.e, x, psi);
      std::vector<double> grid{lmax, 0.98 * lmax};
      const auto path = fs::enet_path(s.t, s.e, x, psi, grid, {.early_stop = false});
      CHECK(path.coef.col(0).cwiseAbs().maxCoeff() == 0.0);
      CHECK(path.coef.col(1).cwiseAbs().maxCoeff() > 0.0);
    }
  }
  SUBCASE("lambda near zero reproduces the Cox fit") {
    std::vector<double> grid{1e-9};
    fs::EnetOptions opt;
    opt.tolerance = 1e-12;
    const auto path = fs::enet_path(s.t, s.e, x, 1.0, grid, opt);
    const auto cox = fs::cox_fit(s.t, s.e, x);
    for (int j = 0; j < 6; ++j) CHECK(path.coef(j, 0) == doctest::Approx(cox.coef(j)).epsilon(1e-5));
  }
  SUBCASE("single covariate matches a one-dimensional search") {
    const Eigen::MatrixXd x1 = x.leftCols(1);
    const double n = static_cast<double>(x1.rows());
    const double sd = std::sqrt((x1.array() - x1.mean()).square().sum() / n);
    for (double psi : {1.0, 0.4}) {
      const double lambda = 0.3 * fs::enet_lambda_max(s.t, s.e, x1, psi);
      std::vector<double> grid{lambda};
      fs::EnetOptions opt;
      opt.tolerance = 1e-12;
      const auto path = fs::enet_path(s.t, s.e, x1, psi, grid, opt);
      auto objective = [&](double b_std) {
        Eigen::VectorXd b(1);
        b(0) = b_std / sd;
        return -(2.0 / n * loglik_at(s, x1, b) - lambda * (psi * std::abs(b_std) + (1 - psi) / 2 * b_std * b_std));
      };
      const auto [arg, val] = boost::math::tools::brent_find_minima(objective, -5.0, 5.0, 50);
      CHECK(path.coef(0, 0) * sd == doctest::Approx(arg).epsilon(1e-6));
    }
  }
  SUBCASE("objective trace never decreases") {
    fs::EnetOptions opt;
    opt.trace = true;
    const auto path = fs::enet_path(s.t, s.e, x, 0.5, {}, opt);
    for (const auto& tr : path.objective_trace)
      for (std::size_t k = 1; k < tr.size(); ++k) CHECK(tr[k] >= tr[k - 1] - 1e-10);
  }
}

TEST_CASE("cross-validated selection") {
  SUBCASE("folds contain events and cover everyone") {
    std::vector<int> e(100, 0);
    for (int i = 0; i < 100; i += 7) e[static_cast<std::size_t>(i)] = 1;
    const auto folds = fs::make_folds(e, 10, 3);
    std::vector<int> events_in(10, 0);
    for (std::size_t i = 0; i < e.size(); ++i) {
      REQUIRE(folds[i] >= 0);
      REQUIRE(folds[i] < 10);
      events_in[static_cast<std::size_t>(folds[i])] += e[i];
    }
    for (int c : events_in) CHECK(c >= 1);
    CHECK(fs::make_folds(e, 10, 3) == folds);
  }
  SUBCASE("keeps strong signals") {
    const auto x = testing::normal_matrix(400, 8, 61);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(8);
    beta(2) = 1.0;
    beta(5) = -0.8;
    const auto s = testing::cox_sample(x, beta, 62);
    fs::CvOptions opt;
    opt.psi_grid = {0.5, 1.0};
    const auto fit = fs::cv_select(fs::blind(testing::with_covariates(s, x)), opt);
    CHECK(std::find(fit.selected.begin(), fit.selected.end(), "X3") != fit.selected.end());
    CHECK(std::find(fit.selected.begin(), fit.selected.end(), "X6") != fit.selected.end());
    CHECK(fit.surface.size() >= 2);
  }
  SUBCASE("noise covariates are mostly dropped") {
    const int reps = 10;
    int near_empty = 0;
    for (int r = 0; r < reps; ++r) {
      const auto x = testing::normal_matrix(300, 10, 700 + r);
      const auto s = testing::cox_sample(x, Eigen::VectorXd::Zero(10), 800 + r);
      fs::CvOptions opt;
      opt.psi_grid = {0.25, 0.5, 0.75, 1.0};
      opt.seed = static_cast<std::uint64_t>(r + 1);
      if (fs::cv_select(fs::blind(testing::with_covariates(s, x)), opt).selected.size() <= 1) ++near_empty;
    }
    CHECK(near_empty >= 8);
  }
}

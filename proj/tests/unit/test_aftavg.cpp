#include <doctest.h>

#include <cmath>

#include "fivestar/aftavg.hpp"
#include "fivestar/stats.hpp"
#include "helpers.hpp"

namespace fs = fivestar;
using testing::Arm;

namespace {

// Direct censored log-likelihood of log T = mu + delta * A + sigma * eps, with the -log t Jacobian.
double direct_loglik(fs::Distribution d, const testing::Sample& s, double mu, double delta, double sigma) {
  double ll = 0.0;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    const double w = (std::log(s.t[i]) - mu - (s.a[i] == Arm::A ? delta : 0.0)) / sigma;
    double log_f = 0.0, log_s = 0.0;
    switch (d) {
      case fs::Distribution::weibull:
        log_f = w - std::exp(w);
        log_s = -std::exp(w);
        break;
      case fs::Distribution::lognormal:
        log_f = -0.5 * w * w - 0.5 * std::log(2 * M_PI);
        log_s = std::log(fs::normal_sf(w));
        break;
      case fs::Distribution::loglogistic:
        log_f = w - 2 * std::log1p(std::exp(w));
        log_s = -std::log1p(std::exp(w));
        break;
    }
    ll += s.e[i] ? log_f - std::log(sigma) - std::log(s.t[i]) : log_s;
  }
  return ll;
}

testing::Sample weibull_sample(std::size_t n, double shape, double tr, std::uint64_t seed) {
  fs::Rng rng(seed);
  testing::Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool arm_a = i % 2 == 0;
    const double t = (arm_a ? tr : 1.0) * std::pow(-std::log(1 - fs::uniform01(rng)), 1.0 / shape);
    const double c = 2.5 * fs::uniform01(rng);
    s.t.push_back(std::min(t, c));
    s.e.push_back(t <= c ? 1 : 0);
    s.a.push_back(arm_a ? Arm::A : Arm::B);
  }
  return s;
}

}  // namespace

TEST_CASE("AFT log-likelihood, gradient and Hessian") {
  const auto s = weibull_sample(120, 2.0, 1.3, 3);
  const Eigen::Vector3d theta(0.1, 0.2, std::log(0.7));
  for (auto d : fs::all_distributions()) {
    CAPTURE(fs::to_string(d));
    const auto ev = fs::aft_evaluate(d, s.t, s.e, s.a, theta);
    CHECK(ev.loglik == doctest::Approx(direct_loglik(d, s, 0.1, 0.2, 0.7)).epsilon(1e-12));
    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d p = theta, m = theta;
      p(j) += h;
      m(j) -= h;
      const auto ep = fs::aft_evaluate(d, s.t, s.e, s.a, p);
      const auto em = fs::aft_evaluate(d, s.t, s.e, s.a, m);
      CHECK(ev.gradient(j) == doctest::Approx((ep.loglik - em.loglik) / (2 * h)).epsilon(1e-6));
      for (int k = 0; k < 3; ++k)
        CHECK(ev.hessian(j, k) == doctest::Approx((ep.gradient(k) - em.gradient(k)) / (2 * h)).epsilon(1e-5));
    }
  }
}

TEST_CASE("lognormal fit without censoring has a closed form") {
  fs::Rng rng(9);
  testing::Sample s;
  for (int i = 0; i < 80; ++i) {
    s.t.push_back(std::exp(0.3 + (i % 2 == 0 ? 0.25 : 0.0) + 0.6 * fs::standard_normal(rng)));
    s.e.push_back(1);
    s.a.push_back(i % 2 == 0 ? Arm::A : Arm::B);
  }
  double mean_a = 0, mean_b = 0;
  for (std::size_t i = 0; i < s.t.size(); ++i) (s.a[i] == Arm::A ? mean_a : mean_b) += std::log(s.t[i]) / 40.0;
  double ss = 0;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    const double r = std::log(s.t[i]) - (s.a[i] == Arm::A ? mean_a : mean_b);
    ss += r * r;
  }
  const double sigma = std::sqrt(ss / 80.0);
  const auto fit = fs::aft_fit(s.t, s.e, s.a, fs::Distribution::lognormal);
  REQUIRE(fit.converged);
  CHECK(fit.mu == doctest::Approx(mean_b).epsilon(1e-10));
  CHECK(fit.delta == doctest::Approx(mean_a - mean_b).epsilon(1e-10));
  CHECK(fit.sigma == doctest::Approx(sigma).epsilon(1e-10));
  // Var(delta) = sigma^2 (1/40 + 1/40) at the MLE
  CHECK(fit.var_delta == doctest::Approx(sigma * sigma / 20.0).epsilon(1e-8));
  CHECK(fit.aic == doctest::Approx(-2 * fit.loglik + 6));
}

TEST_CASE("Weibull fit recovers the simulating time ratio") {
  const auto s = weibull_sample(2000, 2.5, 1.4, 17);
  const auto fit = fs::aft_fit(s.t, s.e, s.a, fs::Distribution::weibull);
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.delta - std::log(1.4)) < 3 * std::sqrt(fit.var_delta));
  CHECK(fit.sigma == doctest::Approx(1 / 2.5).epsilon(0.08));
}

TEST_CASE("Weibull proportional-hazards identity") {
  fs::AftFit w;
  w.distribution = fs::Distribution::weibull;
  w.delta = 0.347;
  w.sigma = 0.4;
  const auto id = fs::weibull_ph_identity_check(w);
  CHECK(id.beta == doctest::Approx(-0.8675));
  CHECK(id.theta == doctest::Approx(0.42).epsilon(1e-3));
  w.distribution = fs::Distribution::lognormal;
  CHECK_THROWS(fs::weibull_ph_identity_check(w));
}

TEST_CASE("model averaging") {
  auto fit = [](double aic, double delta, double var) {
    fs::AftFit f;
    f.aic = aic;
    f.delta = delta;
    f.var_delta = var;
    f.converged = true;
    return f;
  };
  SUBCASE("AIC weights") {
    std::vector<fs::AftFit> fits{fit(100, 0, 1), fit(120, 0, 1), fit(120, 0, 1)};
    const auto m = fs::model_average(fits);
    CHECK(m.weights[0] == doctest::Approx(0.99991).epsilon(1e-5));
    CHECK(m.weights[1] == doctest::Approx(4.54e-5).epsilon(1e-2));
    CHECK(m.weights[2] == doctest::Approx(m.weights[1]));
    CHECK(m.used == 3);
  }
  SUBCASE("between-model spread enters the variance") {
    std::vector<fs::AftFit> fits{fit(10, 0, 1), fit(10, 2, 1)};
    const auto m = fs::model_average(fits);
    CHECK(m.delta == doctest::Approx(1.0));
    CHECK(m.variance == doctest::Approx(2.0));
  }
  SUBCASE("non-converged fits get zero weight") {
    std::vector<fs::AftFit> fits{fit(10, 0.5, 1), fit(5, 3, 1)};
    fits[1].converged = false;
    const auto m = fs::model_average(fits);
    CHECK(m.weights[1] == 0.0);
    CHECK(m.delta == doctest::Approx(0.5));
    CHECK(m.used == 1);
  }
  SUBCASE("no usable fit") {
    std::vector<fs::AftFit> fits{fit(10, 0, 1)};
    fits[0].converged = false;
    CHECK_THROWS(fs::model_average(fits));
  }
}

TEST_CASE("time-ratio flagging") {
  fs::StratumEffect e;
  e.variance = 0.04;
  e.delta = fs::normal_quantile(0.19) * 0.2;
  fs::fill_time_ratio(e, 0.05, 0.20);
  CHECK(e.pr_tr_gt_1 == doctest::Approx(0.19));
  CHECK(e.flagged);
  e.delta = fs::normal_quantile(0.21) * 0.2;
  fs::fill_time_ratio(e, 0.05, 0.20);
  CHECK_FALSE(e.flagged);
  CHECK(e.tr_lower == doctest::Approx(std::exp(e.delta - 1.959963985 * 0.2)));
  CHECK(e.tr_upper == doctest::Approx(std::exp(e.delta + 1.959963985 * 0.2)));
}

TEST_CASE("stratum summary") {
  const auto s = weibull_sample(300, 2.0, 1.3, 23);
  const auto e = fs::stratum_summary(s.t, s.e, s.a, 2);
  CHECK(e.stratum == 2);
  CHECK(e.n == 300);
  CHECK(e.n_a + e.n_b == 300);
  CHECK_FALSE(e.degenerate);
  CHECK(e.fits.size() == 3);
  double total = 0;
  for (double w : e.weights) total += w;
  CHECK(total == doctest::Approx(1.0));
  CHECK(e.hr.available);
  CHECK(e.tr == doctest::Approx(std::exp(e.delta)));

  SUBCASE("an arm without events is degenerate") {
    auto t = s;
    for (std::size_t i = 0; i < t.e.size(); ++i)
      if (t.a[i] == Arm::A) t.e[i] = 0;
    CHECK(fs::stratum_summary(t.t, t.e, t.a, 1).degenerate);
  }
}

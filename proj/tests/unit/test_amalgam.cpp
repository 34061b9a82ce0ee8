#include <doctest.h>

#include <cmath>

#include <boost/math/special_functions/owens_t.hpp>

#include "fivestar/amalgam.hpp"
#include "fivestar/stats.hpp"

namespace fs = fivestar;

namespace {

// Phi2(h, h; rho) = Phi(h) - 2 T(h, sqrt((1 - rho) / (1 + rho)))
double owen_equal_cdf(double h, double rho) {
  return fs::normal_cdf(h) - 2.0 * boost::math::owens_t(h, std::sqrt((1 - rho) / (1 + rho)));
}

}  // namespace

TEST_CASE("bivariate normal on the diagonal against Owen's T") {
  for (double rho : {0.0, 0.3, 0.7, 0.95, 0.998})
    for (double z : {-2.0, -0.5, 0.0, 1.0, 2.2, 3.05}) {
      CAPTURE(rho);
      CAPTURE(z);
      CHECK(fs::bivariate_normal_equal_cdf(z, rho) == doctest::Approx(owen_equal_cdf(z, rho)).epsilon(1e-10));
    }
  CHECK(fs::bivariate_normal_equal_cdf(1.3, 1.0) == doctest::Approx(fs::normal_cdf(1.3)).epsilon(1e-12));
  CHECK(fs::bivariate_normal_equal_cdf(1.3, 0.0) == doctest::Approx(std::pow(fs::normal_cdf(1.3), 2)).epsilon(1e-12));
}

TEST_CASE("zmax tail") {
  SUBCASE("limits") {
    CHECK(fs::zmax_p(1.96, 1.0) == doctest::Approx(fs::normal_sf(1.96)).epsilon(1e-10));
    CHECK(fs::zmax_p(1.96, 0.0) == doctest::Approx(1 - std::pow(fs::normal_cdf(1.96), 2)).epsilon(1e-10));
    CHECK(fs::zmax_quantile(0.025, 1.0) == doctest::Approx(1.959963985).epsilon(1e-8));
    CHECK(fs::zmax_quantile(0.025, 0.0) == doctest::Approx(2.238964376).epsilon(1e-8));
  }
  SUBCASE("decreasing in z, increasing as rho falls") {
    for (double rho : {0.2, 0.8, 0.99}) {
      double prev = 1.0;
      for (double z = -2.0; z <= 4.0; z += 0.25) {
        const double p = fs::zmax_p(z, rho);
        CHECK(p < prev);
        prev = p;
      }
    }
    CHECK(fs::zmax_p(2.0, 0.2) > fs::zmax_p(2.0, 0.8));
  }
  SUBCASE("density integrates to the tail") {
    // trapezoid on [z, 9]
    const double z = 1.5, rho = 0.6;
    const int n = 20000;
    const double h = (9.0 - z) / n;
    double area = 0.5 * (fs::zmax_density(z, rho) + fs::zmax_density(9.0, rho));
    for (int k = 1; k < n; ++k) area += fs::zmax_density(z + k * h, rho);
    CHECK(area * h == doctest::Approx(fs::zmax_p(z, rho)).epsilon(1e-7));
  }
  SUBCASE("quantile inverts the tail") {
    for (double rho : {0.1, 0.5, 0.9762})
      CHECK(fs::zmax_p(fs::zmax_quantile(0.025, rho), rho) == doctest::Approx(0.025).epsilon(1e-9));
  }
  SUBCASE("Monte Carlo agreement") {
    fs::Rng rng(99);
    const double rho = 0.6, z = 1.8;
    const int draws = 400000;
    int hits = 0;
    for (int k = 0; k < draws; ++k) {
      const double a = fs::standard_normal(rng);
      const double b = rho * a + std::sqrt(1 - rho * rho) * fs::standard_normal(rng);
      if (std::max(a, b) > z) ++hits;
    }
    const double p = fs::zmax_p(z, rho);
    const double est = static_cast<double>(hits) / draws;
    CHECK(std::abs(est - p) < 3 * std::sqrt(p * (1 - p) / draws));
  }
}

TEST_CASE("combining strata") {
  std::vector<fs::StratumEstimate> st{{1, 100, 0.2, 0.01}, {2, 200, 0.1, 0.04}};
  const auto c = fs::combine_z(st);
  CHECK(c.z_i == doctest::Approx(40 / std::sqrt(1700.0)).epsilon(1e-12));
  CHECK(c.z_ii == doctest::Approx(300 / std::sqrt(50000.0)).epsilon(1e-12));
  CHECK(c.rho == doctest::Approx(9000 / (std::sqrt(1700.0) * std::sqrt(50000.0))).epsilon(1e-12));

  const auto r = fs::amalgamate(st);
  CHECK(r.z_max == doctest::Approx(std::max(c.z_i, c.z_ii)));
  CHECK(r.p == doctest::Approx(fs::zmax_p(r.z_max, r.rho)).epsilon(1e-10));
  CHECK(r.reject == (r.p < 0.025));
  CHECK(r.lower < r.delta);
  CHECK(r.delta < r.upper);
  CHECK(r.estimate == doctest::Approx(std::exp(r.delta)));

  SUBCASE("one stratum reduces to a Wald test") {
    std::vector<fs::StratumEstimate> one{{1, 50, 0.3, 0.04}};
    const auto o = fs::amalgamate(one);
    CHECK(o.z_i == doctest::Approx(1.5));
    CHECK(o.z_ii == doctest::Approx(1.5));
    CHECK(o.rho == doctest::Approx(1.0));
    CHECK(o.p == doctest::Approx(fs::normal_sf(1.5)).epsilon(1e-8));
  }
  SUBCASE("hazard-ratio track reports e^-delta") {
    const auto h = fs::amalgamate(st, fs::Track::hr);
    CHECK(h.estimate == doctest::Approx(std::exp(-h.delta)));
    CHECK(h.estimate_lower <= h.estimate);
    CHECK(h.estimate <= h.estimate_upper);
  }
}

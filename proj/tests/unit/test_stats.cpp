#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "fivestar/mvn.hpp"
#include "fivestar/stats.hpp"

namespace fs = fivestar;

TEST_CASE("normal functions agree with boost") {
  boost::math::normal_distribution<> nd;
  for (double z : {-8.0, -3.2, -1.0, 0.0, 0.4, 1.96, 5.5}) {
    CHECK(fs::normal_cdf(z) == doctest::Approx(boost::math::cdf(nd, z)).epsilon(1e-13));
    CHECK(fs::normal_sf(z) == doctest::Approx(boost::math::cdf(boost::math::complement(nd, z))).epsilon(1e-13));
  }
  for (double p : {1e-12, 1e-4, 0.025, 0.5, 0.975, 1 - 1e-9}) {
    CHECK(fs::normal_quantile(p) == doctest::Approx(boost::math::quantile(nd, p)).epsilon(1e-12));
    CHECK(fs::inverse_normal(p) == doctest::Approx(boost::math::quantile(nd, p)).epsilon(1e-13));
  }
}

TEST_CASE("chi-square upper tail agrees with boost") {
  for (double df : {1.0, 3.0, 10.0})
    for (double x : {0.1, 2.0, 15.0}) {
      boost::math::chi_squared_distribution<> d(df);
      CHECK(fs::chisq_sf(x, df) == doctest::Approx(boost::math::cdf(boost::math::complement(d, x))).epsilon(1e-12));
    }
}

TEST_CASE("seed mixing is deterministic and spreads indices") {
  CHECK(fs::mix_seed(7, 3) == fs::mix_seed(7, 3));
  CHECK(fs::mix_seed(7, 3) != fs::mix_seed(7, 4));
  CHECK(fs::mix_seed(7, 3) != fs::mix_seed(8, 3));
}

TEST_CASE("uniform and normal draws have the right moments") {
  fs::Rng rng(5);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = fs::uniform01(rng);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = fs::standard_normal(rng);
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("quantile and moments") {
  std::vector<double> x{4, 1, 3, 2};
  CHECK(fs::mean(x) == 2.5);
  CHECK(fs::sample_sd(x) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(fs::quantile(x, 0.5) == doctest::Approx(2.5));
  CHECK(fs::quantile(x, 0.0) == 1.0);
  CHECK(fs::quantile(x, 1.0) == 4.0);
}

TEST_CASE("multivariate normal CDF: independent and bivariate cases") {
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd b(3);
  b << 0.5, -0.2, 1.0;
  const double exact = fs::normal_cdf(0.5) * fs::normal_cdf(-0.2) * fs::normal_cdf(1.0);
  const auto est = fs::mvn_cdf(r, b, 11, 1e-5);
  CHECK(est.value == doctest::Approx(exact).epsilon(1e-4));
  // perfectly correlated pair: Pr(X <= min)
  Eigen::MatrixXd one = Eigen::MatrixXd::Ones(2, 2);
  Eigen::VectorXd c(2);
  c << 0.3, 1.2;
  CHECK(fs::mvn_cdf(one, c, 3, 1e-6).value == doctest::Approx(fs::normal_cdf(0.3)).epsilon(1e-5));
}

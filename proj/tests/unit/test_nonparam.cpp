#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fivestar/nonparam.hpp"
#include "fivestar/stats.hpp"
#include "helpers.hpp"

namespace fs = fivestar;
using testing::Arm;

TEST_CASE("Kaplan-Meier product limit") {
  SUBCASE("no censoring") {
    std::vector<double> t{1, 2, 3};
    std::vector<int> e{1, 1, 1};
    const auto km = fs::kaplan_meier(t, e);
    CHECK(km.at(1) == doctest::Approx(2.0 / 3));
    CHECK(km.at(2) == doctest::Approx(1.0 / 3));
    CHECK(km.at(3) == doctest::Approx(0.0));
  }
  SUBCASE("single censored subject") {
    std::vector<double> t{2};
    std::vector<int> e{0};
    const auto km = fs::kaplan_meier(t, e);
    CHECK(km.size() == 0);
    CHECK(km.at(5) == 1.0);
  }
  SUBCASE("censored second observation") {
    std::vector<double> t{1, 2, 3, 4};
    std::vector<int> e{1, 0, 1, 1};
    const auto km = fs::kaplan_meier(t, e);
    CHECK(km.at(1) == doctest::Approx(0.75));
    CHECK(km.at(2.5) == doctest::Approx(0.75));
    CHECK(km.at(3) == doctest::Approx(0.375));
    CHECK(km.at(4) == doctest::Approx(0.0));
    CHECK(km.before(3) == doctest::Approx(0.75));
  }
}

TEST_CASE("Kaplan-Meier is non-increasing and within [0, 1]") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = testing::exponential_trial(80, 0.8, seed);
    const auto km = fs::kaplan_meier(s.t, s.e);
    double prev = 1.0;
    for (double v : km.values) {
      CHECK(v <= prev + 1e-15);
      CHECK(v >= 0.0);
      prev = v;
    }
    for (double v : km.variances) CHECK(v >= 0.0);
  }
}

TEST_CASE("Nelson-Aalen increments") {
  std::vector<double> t{1, 2, 3};
  std::vector<int> e{1, 1, 1};
  const auto na = fs::nelson_aalen(t, e);
  CHECK(na.at(1) == doctest::Approx(1.0 / 3));
  CHECK(na.at(2) == doctest::Approx(1.0 / 3 + 0.5));
  CHECK(na.at(3) == doctest::Approx(1.0 / 3 + 0.5 + 1.0));

  std::vector<double> tc{1, 2};
  std::vector<int> ec{0, 0};
  CHECK(fs::nelson_aalen(tc, ec).at(10) == 0.0);

  std::vector<double> t1{4};
  std::vector<int> e1{1};
  CHECK(fs::nelson_aalen(t1, e1).at(4) == doctest::Approx(1.0));
}

TEST_CASE("logrank scores") {
  std::vector<double> t1{4};
  std::vector<int> e1{1};
  CHECK(fs::logrank_scores(t1, e1)[0] == doctest::Approx(0.0));

  std::vector<double> t{1, 2, 5, 6};
  std::vector<int> e{1, 1, 0, 0};
  const auto s = fs::logrank_scores(t, e);
  const double lambda_max = 0.25 + 1.0 / 3;
  CHECK(s[2] == doctest::Approx(-lambda_max));
  CHECK(s[3] == doctest::Approx(-lambda_max));
  // scores sum to zero
  double total = 0;
  for (double v : s) total += v;
  CHECK(total == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("weighted logrank") {
  SUBCASE("identical arms give zero") {
    std::vector<double> t{1, 1, 2, 2, 3, 3};
    std::vector<int> e{1, 1, 0, 0, 1, 1};
    std::vector<Arm> a{Arm::A, Arm::B, Arm::A, Arm::B, Arm::A, Arm::B};
    for (auto [rho, gamma] : {std::pair{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}}) {
      const auto r = fs::weighted_logrank(t, e, a, rho, gamma);
      CHECK(r.numerator == doctest::Approx(0.0));
      CHECK(r.z == doctest::Approx(0.0));
    }
  }
  SUBCASE("six subjects against a hand tally") {
    std::vector<double> t{1, 3, 5, 2, 4, 6};
    std::vector<int> e{1, 1, 1, 1, 1, 1};
    std::vector<Arm> a{Arm::A, Arm::A, Arm::A, Arm::B, Arm::B, Arm::B};
    // tabulate O - E and the hypergeometric variance over the ordered event times
    double o_minus_e = 0, v = 0;
    int n_a = 3, n_b = 3;
    for (int k = 1; k <= 6; ++k) {
      const bool from_a = k % 2 == 1;
      const double n = n_a + n_b;
      o_minus_e += (from_a ? 1.0 : 0.0) - n_a / n;
      v += n_a * n_b / (n * n);
      (from_a ? n_a : n_b) -= 1;
    }
    const auto r = fs::weighted_logrank(t, e, a, 0, 0);
    CHECK(r.z == doctest::Approx(o_minus_e / std::sqrt(v)).epsilon(1e-12));
    CHECK(fs::logrank_test(testing::make_data(t, e, a)).z == doctest::Approx(r.z));
  }
  SUBCASE("G(0,0) is the logrank test") {
    const auto s = testing::exponential_trial(200, 0.7, 3);
    const auto d = testing::make_data(s.t, s.e, s.a);
    CHECK(fs::weighted_logrank(d, 0, 0).z == doctest::Approx(fs::logrank_test(d).z).epsilon(1e-12));
  }
  SUBCASE("a better arm A gives a negative statistic and small p") {
    const auto s = testing::exponential_trial(400, 0.5, 8);
    const auto r = fs::logrank_test(testing::make_data(s.t, s.e, s.a));
    CHECK(r.z < -3.0);
    CHECK(r.p == doctest::Approx(fs::normal_cdf(r.z)));
  }
}

TEST_CASE("MaxCombo") {
  const auto s = testing::exponential_trial(300, 0.75, 21);
  const auto d = testing::make_data(s.t, s.e, s.a);
  const auto r = fs::maxcombo(d);
  for (int k = 0; k < 4; ++k) CHECK(r.correlation(k, k) == doctest::Approx(1.0));
  CHECK(r.statistic == doctest::Approx(*std::min_element(r.z.begin(), r.z.end())));
  CHECK(r.z[0] == doctest::Approx(fs::logrank_test(d).z));

  SUBCASE("perfect correlation collapses to one normal tail") {
    const Eigen::Matrix4d ones = Eigen::Matrix4d::Ones();
    CHECK(fs::maxcombo_p(-1.7, ones) == doctest::Approx(fs::normal_cdf(-1.7)).epsilon(1e-3));
    const Eigen::Matrix4d id = Eigen::Matrix4d::Identity();
    CHECK(fs::maxcombo_p(-1.7, id, 1, 1e-5) ==
          doctest::Approx(1.0 - std::pow(1.0 - fs::normal_cdf(-1.7), 4)).epsilon(1e-3));
  }
  SUBCASE("agrees with a label-permutation reference") {
    const int reps = 2000;
    const double perm = fs::maxcombo_permutation_p(s.t, s.e, s.a, reps, 77);
    const double se = std::sqrt(std::max(perm * (1 - perm), 1e-4) / reps);
    CHECK(std::abs(r.p - perm) < 3 * se + 1e-3);
  }
}

TEST_CASE("restricted mean survival") {
  SUBCASE("no events") {
    std::vector<double> t{3, 3, 4, 4};
    std::vector<int> e{0, 0, 0, 0};
    std::vector<Arm> a{Arm::A, Arm::B, Arm::A, Arm::B};
    const auto r = fs::rmst_compare(t, e, a, 2.0);
    CHECK(r.rmst_a == doctest::Approx(2.0));
    CHECK(r.rmst_b == doctest::Approx(2.0));
    CHECK(r.difference == doctest::Approx(0.0));
  }
  SUBCASE("single event is a unit rectangle") {
    std::vector<double> t{1};
    std::vector<int> e{1};
    CHECK(fs::restricted_mean(fs::kaplan_meier(t, e), 2.0).first == doctest::Approx(1.0));
  }
  SUBCASE("rectangle sums") {
    std::vector<double> t{1, 2, 3, 5, 1.5, 2.5, 4, 6};
    std::vector<int> e{1, 0, 1, 1, 1, 1, 0, 1};
    std::vector<Arm> a(8, Arm::A);
    for (int i = 4; i < 8; ++i) a[i] = Arm::B;
    const auto r = fs::rmst_compare(t, e, a, 4.5);
    // A: S = 1 on [0,1), 3/4 on [1,3), 3/8 on [3,4.5]
    const double ra = 1.0 + 0.75 * 2.0 + 0.375 * 1.5;
    // B: S = 1 on [0,1.5), 3/4 on [1.5,2.5), 1/2 on [2.5,4.5]
    const double rb = 1.5 + 0.75 * 1.0 + 0.5 * 2.0;
    CHECK(r.rmst_a == doctest::Approx(ra));
    CHECK(r.rmst_b == doctest::Approx(rb));
    CHECK(r.difference == doctest::Approx(ra - rb));
    CHECK(r.z * std::sqrt(r.variance) == doctest::Approx(rb - ra));
  }
  SUBCASE("default horizon is the smaller of the arms' last times") {
    std::vector<double> t{1, 2, 3, 5};
    std::vector<Arm> a{Arm::A, Arm::B, Arm::A, Arm::B};
    CHECK(fs::rmst_max_tau(t, a) == 3.0);
  }
}

TEST_CASE("stratified logrank") {
  const auto s = testing::exponential_trial(120, 0.7, 4);
  SUBCASE("one stratum is the plain logrank") {
    std::vector<int> one(s.t.size(), 1);
    CHECK(fs::stratified_logrank(s.t, s.e, s.a, one).z ==
          doctest::Approx(fs::logrank_test(testing::make_data(s.t, s.e, s.a)).z));
  }
  SUBCASE("two copies scale z by sqrt 2") {
    std::vector<double> t = s.t;
    std::vector<int> e = s.e;
    std::vector<Arm> a = s.a;
    t.insert(t.end(), s.t.begin(), s.t.end());
    e.insert(e.end(), s.e.begin(), s.e.end());
    a.insert(a.end(), s.a.begin(), s.a.end());
    std::vector<int> strata(t.size(), 1);
    std::fill(strata.begin() + static_cast<std::ptrdiff_t>(s.t.size()), strata.end(), 2);
    std::vector<int> one(s.t.size(), 1);
    const double z1 = fs::stratified_logrank(s.t, s.e, s.a, one).z;
    CHECK(fs::stratified_logrank(t, e, a, strata).z == doctest::Approx(z1 * std::sqrt(2.0)));
  }
  SUBCASE("single-subject stratum is dropped with a warning") {
    std::vector<double> t = s.t;
    std::vector<int> e = s.e;
    std::vector<Arm> a = s.a;
    t.push_back(0.5);
    e.push_back(1);
    a.push_back(Arm::A);
    std::vector<int> strata(t.size(), 1);
    strata.back() = 2;
    const auto r = fs::stratified_logrank(t, e, a, strata);
    CHECK(r.strata_used == 1);
    CHECK_FALSE(r.warnings.empty());
  }
}

TEST_CASE("smoothed hazard of an exponential sample is near its rate") {
  fs::Rng rng(2);
  std::vector<double> t;
  std::vector<int> e;
  for (int i = 0; i < 20000; ++i) {
    t.push_back(-std::log(1 - fs::uniform01(rng)) / 2.0);
    e.push_back(1);
  }
  const auto na = fs::nelson_aalen(t, e);
  std::vector<double> grid{0.3, 0.5, 0.7};
  for (double h : fs::smoothed_hazard(na, grid, 0.15)) CHECK(h == doctest::Approx(2.0).epsilon(0.1));
}

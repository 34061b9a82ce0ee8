#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fivestar/stats.hpp"
#include "fivestar/survdata.hpp"

namespace testing {

using fivestar::Arm;

// Dataset without covariates from parallel vectors.
inline fivestar::TrialDataset make_data(const std::vector<double>& t, const std::vector<int>& e,
                                        const std::vector<Arm>& a) {
  std::vector<fivestar::SubjectRecord> rows;
  for (std::size_t i = 0; i < t.size(); ++i) rows.push_back({"s" + std::to_string(i), t[i], e[i] != 0, a[i], {}});
  return fivestar::TrialDataset({}, std::move(rows));
}

// Two-arm exponential trial with hazard ratio `hr` (A vs B) and uniform censoring.
struct Sample {
  std::vector<double> t;
  std::vector<int> e;
  std::vector<Arm> a;
};

inline Sample exponential_trial(std::size_t n, double hr, std::uint64_t seed, double censor_max = 3.0) {
  fivestar::Rng rng(seed);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool arm_a = i % 2 == 0;
    const double rate = arm_a ? hr : 1.0;
    const double t = -std::log(1.0 - fivestar::uniform01(rng)) / rate;
    const double c = censor_max * fivestar::uniform01(rng) + 1e-9;
    s.t.push_back(std::min(t, c));
    s.e.push_back(t <= c ? 1 : 0);
    s.a.push_back(arm_a ? Arm::A : Arm::B);
  }
  return s;
}

}  // namespace testing

namespace testing {

// Covariates named X1..Xp attached to a sample; continuous unless `kinds` says otherwise.
inline fivestar::TrialDataset with_covariates(const Sample& s, const Eigen::MatrixXd& x,
                                              const std::vector<fivestar::CovariateKind>& kinds = {}) {
  std::vector<fivestar::CovariateSpec> specs;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto kind = kinds.empty() ? fivestar::CovariateKind::continuous : kinds[static_cast<std::size_t>(j)];
    std::vector<std::string> levels;
    if (kind == fivestar::CovariateKind::nominal || kind == fivestar::CovariateKind::ordinal)
      for (int l = 0; l <= static_cast<int>(x.col(j).maxCoeff()); ++l) levels.push_back("L" + std::to_string(l));
    specs.push_back({"X" + std::to_string(j + 1), kind, levels});
  }
  std::vector<fivestar::SubjectRecord> rows;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    std::vector<double> c(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) c[static_cast<std::size_t>(j)] = x(static_cast<Eigen::Index>(i), j);
    rows.push_back({"s" + std::to_string(i), s.t[i], s.e[i] != 0, s.a[i], std::move(c)});
  }
  return fivestar::TrialDataset(std::move(specs), std::move(rows));
}

// Proportional-hazards sample: rate exp(x * beta), uniform censoring on [0, censor_max].
inline Sample cox_sample(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta, std::uint64_t seed,
                         double censor_max = 4.0) {
  fivestar::Rng rng(seed);
  Sample s;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double rate = std::exp(x.row(i).dot(beta));
    const double t = -std::log(1.0 - fivestar::uniform01(rng)) / rate;
    const double c = censor_max * fivestar::uniform01(rng) + 1e-9;
    s.t.push_back(std::min(t, c));
    s.e.push_back(t <= c ? 1 : 0);
    s.a.push_back(i % 2 == 0 ? Arm::A : Arm::B);
  }
  return s;
}

inline Eigen::MatrixXd normal_matrix(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  fivestar::Rng rng(seed);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = fivestar::standard_normal(rng);
  return x;
}

}  // namespace testing

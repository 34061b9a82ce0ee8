#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fivestar/error.hpp"
#include "fivestar/pipeline.hpp"
#include "helpers.hpp"

namespace fs = fivestar;
using testing::Arm;

namespace {

// Arm effect 0.6 on the hazard, X1 and X2 prognostic, X3..X6 noise.
fs::TrialDataset pipeline_trial(std::uint64_t seed) {
  const auto x = testing::normal_matrix(400, 6, seed);
  Eigen::MatrixXd with_arm(400, 7);
  with_arm << x, Eigen::VectorXd::NullaryExpr(400, [](Eigen::Index i) { return i % 2 == 0 ? 1.0 : 0.0; });
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(7);
  beta(0) = 0.9;
  beta(1) = -0.6;
  beta(6) = std::log(0.6);
  return testing::with_covariates(testing::cox_sample(with_arm, beta, seed + 1, 3.0), x);
}

fs::AnalysisConfig quick_config(const fs::TrialDataset& data) {
  fs::AnalysisConfig c;
  c.schema.covariates = data.specs();
  c.enet.psi_grid = {0.5, 1.0};
  c.enet.folds = 5;
  c.ctree.mode = fs::PValueMode::asymptotic;
  c.comparators.stratified = true;
  c.comparators.factors = {{"X1", 0.0}, {"X2", 0.0}};
  return c;
}

}  // namespace

TEST_CASE("configuration") {
  const auto data = pipeline_trial(3);
  auto c = quick_config(data);
  SUBCASE("round trip") {
    const auto j = fs::to_json(c);
    CHECK(fs::to_json(fs::parse_config(j)) == j);
  }
  SUBCASE("validation") {
    auto bad = c;
    bad.amalgam.test_level = 1.2;
    CHECK_THROWS_AS(bad.validate(), fs::ValidationError);
    bad = c;
    bad.enet.psi_grid.clear();
    CHECK_THROWS_AS(bad.validate(), fs::ValidationError);
    bad = c;
    bad.comparators.factors.clear();
    CHECK_THROWS_AS(bad.validate(), fs::ValidationError);
    bad = c;
    bad.ctree.min_node = 1;
    CHECK_THROWS_AS(bad.validate(), fs::ValidationError);
    auto j = fs::to_json(c);
    j["aft"]["distributions"] = {"gamma"};
    CHECK_THROWS(fs::parse_config(j));
  }
  SUBCASE("reseeding") {
    auto a = c, b = c;
    a.reseed(11);
    b.reseed(11);
    CHECK(fs::to_json(a) == fs::to_json(b));
    b.reseed(12);
    CHECK(a.enet.seed != b.enet.seed);
    CHECK(a.ctree.seed != b.ctree.seed);
    CHECK(a.enet.seed != a.ctree.seed);
  }
}

TEST_CASE("comparator factors form a mixed-radix label") {
  const auto data = pipeline_trial(4);
  const auto labels = fs::factor_strata(data, {{"X1", 0.0}, {"X2", 0.5}});
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = data.records()[i].covariates;
    CHECK(labels[i] == (x[0] > 0.0 ? 1 : 0) + 2 * (x[1] > 0.5 ? 1 : 0));
  }
  CHECK_THROWS_AS(fs::factor_strata(data, {{"X1", std::nullopt}}), fs::ValidationError);
  CHECK_THROWS_AS(fs::factor_strata(data, {{"Z9", 0.0}}), fs::ValidationError);
}

TEST_CASE("five-step analysis") {
  const auto data = pipeline_trial(5);
  const auto config = quick_config(data);
  const auto report = fs::run_5star(data, config);

  CHECK(report.n == data.size());
  CHECK(report.blinded.candidates.size() == 6);
  CHECK(std::find(report.blinded.selected.begin(), report.blinded.selected.end(), "X1") !=
        report.blinded.selected.end());
  CHECK(report.effects.size() == report.blinded.assignment.c);
  REQUIRE(report.tr);
  CHECK(report.tr->p > 0.0);
  CHECK(report.tr->p < 1.0);
  // arm A has the lower hazard, so it lives longer
  CHECK(report.tr->estimate > 1.0);
  REQUIRE(report.comparators.logrank);
  CHECK(report.comparators.logrank->z == doctest::Approx(fs::logrank_test(data).z));
  CHECK(report.comparators.stratified_logrank);
  CHECK(report.comparators.errors.empty());

  SUBCASE("blinded steps ignore the arm labels") {
    const auto swapped = fs::run_5star(data.swap_arms(), config);
    CHECK(swapped.blinded.selected == report.blinded.selected);
    CHECK(swapped.blinded.assignment.stratum == report.blinded.assignment.stratum);
    // stratum effects and both combined statistics flip sign; the reported
    // estimate follows whichever statistic is larger, so it need not
    REQUIRE(swapped.tr);
    REQUIRE(swapped.effects.size() == report.effects.size());
    for (std::size_t q = 0; q < report.effects.size(); ++q) {
      CHECK(swapped.effects[q].delta == doctest::Approx(-report.effects[q].delta).epsilon(1e-6));
      CHECK(swapped.effects[q].variance == doctest::Approx(report.effects[q].variance).epsilon(1e-6));
    }
    CHECK(swapped.tr->z_i == doctest::Approx(-report.tr->z_i).epsilon(1e-6));
    CHECK(swapped.tr->z_ii == doctest::Approx(-report.tr->z_ii).epsilon(1e-6));
    CHECK(swapped.tr->rho == doctest::Approx(report.tr->rho).epsilon(1e-6));
  }
  SUBCASE("worker count does not change the report") {
    auto threaded = config;
    threaded.workers = 3;
    CHECK(fs::to_json(fs::run_5star(data, threaded)).dump() == fs::to_json(report).dump());
  }
  SUBCASE("without the elastic net every candidate advances") {
    auto off = config;
    off.enet.enabled = false;
    const auto blinded = fs::run_blinded_steps(fs::blind(data), off);
    CHECK(blinded.selected == blinded.candidates);
    CHECK_FALSE(blinded.enet);
  }
  SUBCASE("report files") {
    const auto dir = std::filesystem::temp_directory_path() / "fivestar_unit_report";
    std::filesystem::remove_all(dir);
    fs::emit_report(report, dir);
    const std::vector<std::pair<std::string, std::string>> expected{
        {"strata.csv", "stratum,rank_first"},     {"forest.csv", "stratum,n,tr"},
        {"km_curves.csv", "scope,arm,time"},      {"hazard.csv", "scope,arm,time,hazard"},
        {"cv_surface.csv", "psi,lambda"},         {"report.json", "{"}};
    for (const auto& [file, head] : expected) {
      std::ifstream in(dir / file);
      REQUIRE(in);
      std::string first;
      std::getline(in, first);
      CHECK(first.rfind(head, 0) == 0);
    }
    std::ifstream forest(dir / "forest.csv");
    std::string line, last;
    while (std::getline(forest, line)) last = line;
    CHECK(last.rfind("Overall,400,", 0) == 0);
    std::ifstream json(dir / "report.json");
    const auto parsed = nlohmann::json::parse(json);
    CHECK(parsed.at("step5").contains("time_ratio"));
    std::filesystem::remove_all(dir);
  }
}

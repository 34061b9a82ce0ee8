#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "fivestar/error.hpp"
#include "fivestar/survdata.hpp"
#include "helpers.hpp"

namespace fs = fivestar;
using testing::Arm;

namespace {

fs::DataSchema schema_with_grade() {
  fs::DataSchema s;
  s.covariates.push_back({"age", fs::CovariateKind::continuous, {}});
  s.covariates.push_back({"grade", fs::CovariateKind::nominal, {"low", "mid", "high"}});
  return s;
}

}  // namespace

TEST_CASE("reading a three-row file") {
  std::istringstream in("id,time,event,arm\n1,1,1,A\n2,2,1,B\n3,3,0,A\n");
  const auto d = fs::read_csv(in, fs::DataSchema{});
  CHECK(d.size() == 3);
  CHECK(d.event_count() == 2);
  CHECK(d.arms()[1] == Arm::B);
}

TEST_CASE("negative times are rejected") {
  std::istringstream in("id,time,event,arm\n1,-1,1,A\n");
  CHECK_THROWS_WITH_AS(fs::read_csv(in, fs::DataSchema{}), doctest::Contains("negative time"), fs::ValidationError);
}

TEST_CASE("undeclared nominal level names row and column") {
  std::istringstream in("id,time,event,arm,age,grade\n1,1,1,A,50,low\n2,2,0,B,61,extreme\n");
  try {
    fs::read_csv(in, schema_with_grade());
    FAIL("expected a validation error");
  } catch (const fs::ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("grade") != std::string::npos);
    CHECK(msg.find("row 2") != std::string::npos);  // data rows count from 1 below the header
  }
}

TEST_CASE("categorical values are stored as level indices") {
  std::istringstream in("id,time,event,arm,age,grade\n1,1,1,A,50,high\n2,2,0,B,61,low\n");
  const auto d = fs::read_csv(in, schema_with_grade());
  CHECK(d.column(1) == std::vector<double>{2.0, 0.0});
}

TEST_CASE("CSV round trip") {
  std::istringstream in("id,time,event,arm,age,grade\n1,1.5,1,A,50,high\n2,2.25,0,B,61,low\n");
  const auto d = fs::read_csv(in, schema_with_grade());
  std::ostringstream out;
  fs::write_csv(out, d);
  std::istringstream again(out.str());
  const auto e = fs::read_csv(again, schema_with_grade());
  CHECK(e.times() == d.times());
  CHECK(e.events() == d.events());
  CHECK(e.arms() == d.arms());
  CHECK(e.column(1) == d.column(1));
}

TEST_CASE("blinding hides arms and rejoining restores them") {
  const auto d = testing::make_data({1, 2, 3}, {1, 1, 0}, {Arm::A, Arm::B, Arm::A});
  const auto b = fs::blind(d);
  CHECK(b.size() == 3);
  CHECK(std::vector<double>(b.times().begin(), b.times().end()) == d.times());
  CHECK(std::vector<int>(b.events().begin(), b.events().end()) == d.events());
  CHECK(fs::rejoin_arms(b, d) == d.arms());
  // a reordered subset rejoins by id
  std::vector<std::size_t> rows{2, 0};
  const auto sub = b.subset(rows);
  CHECK(fs::rejoin_arms(sub, d) == std::vector<Arm>{Arm::A, Arm::A});
}

TEST_CASE("diagnostics count arms and flag problems") {
  std::vector<fs::SubjectRecord> rows;
  for (int i = 0; i < 600; ++i)
    rows.push_back({"p" + std::to_string(i), 1.0 + i, i % 3 == 0, i % 2 ? Arm::B : Arm::A, {}});
  const auto diag = fs::validate(fs::TrialDataset({}, rows));
  CHECK(diag.n_a == 300);
  CHECK(diag.n_b == 300);

  rows.push_back({"p5", 3.0, true, Arm::A, {}});
  CHECK(fs::validate(fs::TrialDataset({}, rows)).duplicate_ids == std::vector<std::string>{"p5"});

  const auto none = testing::make_data({1, 2, 3, 4}, {1, 1, 0, 0}, {Arm::A, Arm::A, Arm::B, Arm::B});
  CHECK_FALSE(fs::validate(none).warnings.empty());
}

TEST_CASE("schema parsing") {
  const auto j = nlohmann::json::parse(R"({"columns": {"arm": "trt", "arm_a": "T", "arm_b": "C"},
      "covariates": [{"name": "x", "kind": "binary"}, {"name": "g", "kind": "ordinal", "levels": ["1", "2"]}]})");
  const auto s = fs::parse_schema(j);
  CHECK(s.columns.arm == "trt");
  CHECK(s.covariates.size() == 2);
  CHECK(s.covariates[1].kind == fs::CovariateKind::ordinal);
  CHECK_THROWS_AS(fs::parse_schema(nlohmann::json::object()), fs::ValidationError);
  CHECK_THROWS(fs::parse_schema(nlohmann::json::parse(R"({"covariates": [{"name": "x", "kind": "weird"}]})")));
}

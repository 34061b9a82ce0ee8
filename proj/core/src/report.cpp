#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "fivestar/error.hpp"
#include "fivestar/pipeline.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

nlohmann::json to_json(const CoxSummary& c) {
  nlohmann::json j = {{"log_hr", c.log_hr}, {"se", c.se},  {"hr", c.hr}, {"ci", {c.lower, c.upper}},
                      {"z", c.z},           {"p_one_tailed", c.p}};
  if (c.gt_p) j["gt_p"] = *c.gt_p;
  return j;
}

nlohmann::json to_json(const ComparatorBlock& b) {
  nlohmann::json j = nlohmann::json::object();
  if (b.logrank) j["logrank"] = {{"z", b.logrank->z}, {"p_one_tailed", b.logrank->p}};
  if (b.cox) j["cox"] = to_json(*b.cox);
  if (b.stratified_logrank) {
    const auto& s = *b.stratified_logrank;
    j["stratified_logrank"] = {{"z", s.z}, {"p_one_tailed", s.p}, {"strata_used", s.strata_used},
                               {"warnings", s.warnings}};
  }
  if (b.stratified_cox) j["stratified_cox"] = to_json(*b.stratified_cox);
  if (b.maxcombo) {
    const auto& m = *b.maxcombo;
    nlohmann::json corr = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < 4; ++c) row.push_back(m.correlation(r, c));
      corr.push_back(row);
    }
    j["maxcombo"] = {{"z", m.z}, {"correlation", corr}, {"statistic", m.statistic}, {"p_one_tailed", m.p},
                     {"p_error", m.p_error}};
  }
  if (b.rmst) {
    const auto& r = *b.rmst;
    j["rmst"] = {{"tau", r.tau},   {"rmst_a", r.rmst_a}, {"rmst_b", r.rmst_b},       {"difference", r.difference},
                 {"variance", r.variance}, {"z", r.z},   {"p_one_tailed", r.p}};
  }
  if (!b.errors.empty()) j["errors"] = b.errors;
  return j;
}

nlohmann::json to_json(const AnalysisReport& r) {
  nlohmann::json j;
  j["n"] = r.n;
  j["diagnostics"] = to_json(r.diagnostics);

  nlohmann::json step2;
  step2["candidates"] = r.blinded.candidates;
  step2["selected"] = r.blinded.selected;
  if (r.blinded.enet) step2["elastic_net"] = to_json(*r.blinded.enet);
  j["step2"] = step2;

  nlohmann::json step3;
  if (r.blinded.tree) step3["tree"] = r.blinded.tree->to_json();
  step3["assignment"] = r.blinded.assignment.to_json();
  j["step3"] = step3;

  nlohmann::json step4 = nlohmann::json::array();
  for (const auto& e : r.effects) step4.push_back(to_json(e));
  j["step4"] = step4;

  nlohmann::json step5 = nlohmann::json::object();
  if (r.tr) step5["time_ratio"] = to_json(*r.tr);
  if (r.hr) step5["hazard_ratio"] = to_json(*r.hr);
  j["step5"] = step5;

  j["comparators"] = to_json(r.comparators);
  j["notes"] = r.notes;
  return j;
}

void write_forest_csv(std::ostream& out, const AnalysisReport& r) {
  out << "stratum,n,tr,tr_lower,tr_upper,pr_tr_gt_1,flagged,hr,hr_lower,hr_upper,pr_hr_lt_1,gt_p\n";
  for (const auto& e : r.effects) {
    out << e.stratum << ',' << e.n << ',';
    if (e.degenerate) {
      out << "NA,NA,NA,NA,NA,";
    } else {
      out << num(e.tr) << ',' << num(e.tr_lower) << ',' << num(e.tr_upper) << ',' << num(e.pr_tr_gt_1) << ','
          << (e.flagged ? 1 : 0) << ',';
    }
    if (!e.degenerate && e.hr.available) {
      out << num(e.hr.hr) << ',' << num(e.hr.lower) << ',' << num(e.hr.upper) << ',' << num(e.hr.pr_hr_lt_1) << ','
          << num(e.hr.gt_p) << '\n';
    } else {
      out << "NA,NA,NA,NA,NA\n";
    }
  }
  out << "Overall," << r.n << ',';
  if (r.tr) {
    out << num(r.tr->estimate) << ',' << num(r.tr->estimate_lower) << ',' << num(r.tr->estimate_upper) << ','
        << num(normal_cdf(r.tr->delta / std::sqrt(r.tr->variance))) << ",NA,";
  } else {
    out << "NA,NA,NA,NA,NA,";
  }
  if (r.hr) {
    out << num(r.hr->estimate) << ',' << num(r.hr->estimate_lower) << ',' << num(r.hr->estimate_upper) << ','
        << num(normal_cdf(r.hr->delta / std::sqrt(r.hr->variance))) << ',';
  } else {
    out << "NA,NA,NA,NA,";
  }
  out << (r.comparators.cox && r.comparators.cox->gt_p ? num(*r.comparators.cox->gt_p) : "NA") << '\n';
}

void write_strata_csv(std::ostream& out, const AnalysisReport& r) {
  const auto& a = r.blinded.assignment;
  out << "stratum,rank_first,rank_last,n,n_a,n_b,events_a,events_b\n";
  for (std::size_t s = 0; s < a.c; ++s) {
    out << s + 1 << ',' << a.ranges[s].first << ',' << a.ranges[s].second << ',';
    if (s < r.effects.size()) {
      const auto& e = r.effects[s];
      out << e.n << ',' << e.n_a << ',' << e.n_b << ',' << e.events_a << ',' << e.events_b << '\n';
    } else {
      out << a.stratum_sizes()[s] << ",NA,NA,NA,NA\n";
    }
  }
}

void write_km_csv(std::ostream& out, const std::vector<CurveTable>& curves) {
  out << "scope,arm,time,survival,variance\n";
  for (const auto& c : curves) {
    out << c.scope << ',' << c.arm << ",0,1,0\n";
    for (std::size_t k = 0; k < c.curve.size(); ++k)
      out << c.scope << ',' << c.arm << ',' << num(c.curve.knots[k]) << ',' << num(c.curve.values[k]) << ','
          << num(c.curve.variances[k]) << '\n';
  }
}

void write_hazard_csv(std::ostream& out, const std::vector<HazardTable>& hazards) {
  out << "scope,arm,time,hazard,log_hazard,bandwidth\n";
  for (const auto& h : hazards)
    for (std::size_t g = 0; g < h.grid.size(); ++g)
      out << h.scope << ',' << h.arm << ',' << num(h.grid[g]) << ',' << num(h.hazard[g]) << ','
          << (h.hazard[g] > 0.0 ? num(std::log(h.hazard[g])) : "NA") << ',' << num(h.bandwidth) << '\n';
}

void write_cv_surface_csv(std::ostream& out, const std::vector<CvCell>& surface) {
  out << "psi,lambda,mean_deviance,se\n";
  for (const auto& c : surface)
    out << num(c.psi) << ',' << num(c.lambda) << ',' << num(c.mean_deviance) << ',' << num(c.se) << '\n';
}

void emit_report(const AnalysisReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create '" + out_dir.string() + "': " + ec.message());
  {
    auto out = open_out(out_dir / "report.json");
    out << to_json(report).dump(2) << '\n';
  }
  {
    auto out = open_out(out_dir / "strata.csv");
    write_strata_csv(out, report);
  }
  {
    auto out = open_out(out_dir / "forest.csv");
    write_forest_csv(out, report);
  }
  {
    auto out = open_out(out_dir / "km_curves.csv");
    write_km_csv(out, report.km_curves);
  }
  {
    auto out = open_out(out_dir / "hazard.csv");
    write_hazard_csv(out, report.hazards);
  }
  {
    auto out = open_out(out_dir / "cv_surface.csv");
    write_cv_surface_csv(out, report.blinded.enet ? report.blinded.enet->surface : std::vector<CvCell>{});
  }
}

}  // namespace fivestar

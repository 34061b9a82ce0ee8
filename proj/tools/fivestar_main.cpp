// fivestar: command-line front end for the 5-STAR analysis and the simulation lab.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fivestar/error.hpp"
#include "fivestar/nonparam.hpp"
#include "fivestar/pipeline.hpp"
#include "fivestar/simlab.hpp"

namespace fs = fivestar;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kNumerical = 3;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fs::ValidationError("cannot open config '" + path + "'");
  return json::parse(in);
}

fs::DataSchema schema_from(const std::string& config_path) {
  if (config_path.empty()) {
    fs::DataSchema schema;
    return schema;
  }
  return fs::parse_schema(read_json(config_path));
}

// Writes to `path`, or stdout when empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fs::ValidationError("cannot write '" + path + "'");
  out << text;
}

std::string one_tailed_block(double z, double p) {
  return json{{"z", z}, {"p_one_tailed", p}}.dump(2) + "\n";
}

struct DataArgs {
  std::string data;
  std::string config;
  std::string out;
};

void add_data_args(CLI::App* cmd, DataArgs& args) {
  cmd->add_option("--data", args.data, "Trial CSV (id,time,event,arm,...)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--config", args.config, "JSON config with column mapping and covariates");
  cmd->add_option("--out", args.out, "Output file (default stdout)");
}

int run_analyze(const DataArgs& args, std::optional<std::uint64_t> seed, std::optional<std::size_t> workers) {
  if (args.config.empty()) throw fs::ValidationError("analyze needs --config");
  if (args.out.empty()) throw fs::ValidationError("analyze needs --out");
  auto config = fs::parse_config(read_json(args.config));
  if (seed) config.reseed(*seed);
  if (workers) config.workers = *workers;
  const auto data = fs::load_csv(args.data, config.schema);
  const auto report = fs::run_5star(data, config);
  fs::emit_report(report, args.out);
  if (report.tr)
    std::fprintf(stderr, "5-STAR TR %.4f (%.4f, %.4f)  one-tailed p %.4g  strata %zu\n", report.tr->estimate,
                 report.tr->estimate_lower, report.tr->estimate_upper, report.tr->p, report.blinded.assignment.c);
  return kOk;
}

int run_km(const DataArgs& args) {
  const auto data = fs::load_csv(args.data, schema_from(args.config));
  const auto times = data.times();
  const auto events = data.events();
  const auto arms = data.arms();
  std::vector<fs::CurveTable> curves;
  curves.push_back({"overall", "pooled", fs::kaplan_meier(times, events)});
  for (fs::Arm arm : {fs::Arm::A, fs::Arm::B}) {
    std::vector<double> t;
    std::vector<int> e;
    for (std::size_t i = 0; i < times.size(); ++i)
      if (arms[i] == arm) {
        t.push_back(times[i]);
        e.push_back(events[i]);
      }
    if (!t.empty()) curves.push_back({"overall", arm == fs::Arm::A ? "A" : "B", fs::kaplan_meier(t, e)});
  }
  std::ostringstream out;
  fs::write_km_csv(out, curves);
  emit(args.out, out.str());
  return kOk;
}

int run_logrank(const DataArgs& args, double rho, double gamma) {
  const auto data = fs::load_csv(args.data, schema_from(args.config));
  if (rho == 0.0 && gamma == 0.0) {
    const auto r = fs::logrank_test(data);
    emit(args.out, one_tailed_block(r.z, r.p));
    return kOk;
  }
  const auto r = fs::weighted_logrank(data, rho, gamma);
  json j = {{"rho", r.rho}, {"gamma", r.gamma}, {"numerator", r.numerator}, {"variance", r.variance},
            {"z", r.z},     {"p_one_tailed", fs::normal_cdf(r.z)}};
  emit(args.out, j.dump(2) + "\n");
  return kOk;
}

int run_rmst(const DataArgs& args, std::optional<double> tau) {
  const auto data = fs::load_csv(args.data, schema_from(args.config));
  const auto r = fs::rmst_compare(data, tau);
  json j = {{"tau", r.tau},           {"rmst_a", r.rmst_a}, {"rmst_b", r.rmst_b},
            {"difference", r.difference}, {"variance", r.variance}, {"z", r.z},
            {"p_one_tailed", r.p}};
  emit(args.out, j.dump(2) + "\n");
  return kOk;
}

int run_maxcombo(const DataArgs& args, const fs::MaxComboOptions& options) {
  const auto data = fs::load_csv(args.data, schema_from(args.config));
  const auto r = fs::maxcombo(data, options);
  json j = {{"z", r.z}, {"statistic", r.statistic}, {"p_one_tailed", r.p}, {"p_error", r.p_error}};
  emit(args.out, j.dump(2) + "\n");
  return kOk;
}

struct SimulateArgs {
  std::string scenario = "alt1";
  std::size_t reps = 2000;
  std::uint64_t seed = 7;
  std::size_t workers = 1;
  std::string out;
  bool log = false;
  bool permutation = false;
  bool quiet = false;
};

int run_simulate(const SimulateArgs& args) {
  if (args.out.empty()) throw fs::ValidationError("simulate needs --out");
  const auto spec = fs::ScenarioSpec::make(fs::scenario_from_string(args.scenario));
  fs::SimOptions options;
  options.reps = args.reps;
  options.seed = args.seed;
  options.workers = args.workers;
  options.ctree_mode = args.permutation ? fs::PValueMode::permutation : fs::PValueMode::asymptotic;
  if (!args.quiet) {
    const std::size_t step = std::max<std::size_t>(1, args.reps / 20);
    options.progress = [step, total = args.reps](std::size_t done) {
      if (done % step == 0 || done == total) std::fprintf(stderr, "  %zu/%zu replicates\n", done, total);
    };
  }
  const auto run = fs::run_scenario(spec, options);

  std::filesystem::create_directories(args.out);
  const std::filesystem::path dir(args.out);
  {
    std::ofstream csv(dir / "table2.csv", std::ios::binary);
    fs::write_table2_csv(csv, run.results);
  }
  const auto rec = fs::recovery(run.replicates);
  auto j = fs::table2_json(run.results, {rec}, {fs::to_string(spec.scenario)});
  j["scenario"] = fs::to_string(spec.scenario);
  j["seed"] = args.seed;
  j["true_time_ratio"] = spec.true_time_ratio();
  j["true_hazard_ratio"] = spec.true_hazard_ratio();
  {
    std::ofstream out(dir / "table2.json", std::ios::binary);
    out << j.dump(2) << '\n';
  }
  if (args.log) {
    std::ofstream out(dir / "replicates.jsonl", std::ios::binary);
    for (const auto& r : run.replicates) out << fs::to_json(r).dump() << '\n';
  }
  if (!args.quiet) {
    fs::write_table2_csv(std::cout, run.results);
    std::fprintf(stderr, "%zu replicates in %.1f s\n", args.reps, run.runtime_seconds);
  }
  return kOk;
}

int run_generate(const std::string& scenario, std::uint64_t seed, const std::string& out,
                 const std::string& config_out) {
  const auto spec = fs::ScenarioSpec::make(fs::scenario_from_string(scenario));
  const auto trial = fs::gen_trial(spec, seed);
  std::ostringstream csv;
  fs::write_csv(csv, trial.data);
  emit(out, csv.str());
  if (!config_out.empty()) {
    fs::AnalysisConfig config;
    config.schema.covariates = spec.covariate_specs();
    emit(config_out, fs::to_json(config).dump(2) + "\n");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"5-STAR survival analysis toolkit"};
  app.require_subcommand(1);

  DataArgs analyze_args;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  auto* analyze = app.add_subcommand("analyze", "Run steps 1-5 and the comparators, write report files");
  add_data_args(analyze, analyze_args);
  analyze->add_option("--seed", seed, "Master seed for every stochastic step");
  analyze->add_option("--workers", workers, "Threads for cross-validation");

  DataArgs km_args;
  auto* km = app.add_subcommand("km", "Kaplan-Meier curves, pooled and by arm (CSV)");
  add_data_args(km, km_args);

  DataArgs lr_args;
  double rho = 0.0, gamma = 0.0;
  auto* logrank = app.add_subcommand("logrank", "Logrank or Fleming-Harrington G(rho,gamma) test (JSON)");
  add_data_args(logrank, lr_args);
  logrank->add_option("--rho", rho, "FH rho")->check(CLI::NonNegativeNumber);
  logrank->add_option("--gamma", gamma, "FH gamma")->check(CLI::NonNegativeNumber);

  DataArgs rmst_args;
  std::optional<double> tau;
  auto* rmst = app.add_subcommand("rmst", "Restricted mean survival time comparison (JSON)");
  add_data_args(rmst, rmst_args);
  rmst->add_option("--tau", tau, "Horizon (default: largest admissible)");

  DataArgs mc_args;
  fs::MaxComboOptions mc_options;
  auto* mc = app.add_subcommand("maxcombo", "MaxCombo test over four FH weights (JSON)");
  add_data_args(mc, mc_args);
  mc->add_flag("--permutation", mc_options.permutation, "Label-permutation p-value");
  mc->add_option("--permutation-reps", mc_options.permutation_reps, "Permutations");
  mc->add_option("--seed", mc_options.seed, "Seed for the p-value integration");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo operating characteristics for one scenario");
  simulate->add_option("--scenario", sim_args.scenario, "null, alt1, alt2 or alt3");
  simulate->add_option("--reps", sim_args.reps, "Replicates")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim_args.seed, "Master seed");
  simulate->add_option("--workers", sim_args.workers, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim_args.out, "Output directory")->required();
  simulate->add_flag("--log", sim_args.log, "Also write replicates.jsonl");
  simulate->add_flag("--permutation-ctree", sim_args.permutation, "Permutation p-values in the trees (slow)");
  simulate->add_flag("--quiet", sim_args.quiet, "No progress output");

  std::string gen_scenario = "alt1", gen_out, gen_config;
  std::uint64_t gen_seed = 1;
  auto* generate = app.add_subcommand("generate", "Write one simulated trial as CSV");
  generate->add_option("--scenario", gen_scenario, "null, alt1, alt2 or alt3");
  generate->add_option("--seed", gen_seed, "Seed");
  generate->add_option("--out", gen_out, "CSV path (default stdout)");
  generate->add_option("--config-out", gen_config, "Also write a matching analysis config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*analyze) return run_analyze(analyze_args, seed, workers);
    if (*km) return run_km(km_args);
    if (*logrank) return run_logrank(lr_args, rho, gamma);
    if (*rmst) return run_rmst(rmst_args, tau);
    if (*mc) return run_maxcombo(mc_args, mc_options);
    if (*simulate) return run_simulate(sim_args);
    if (*generate) return run_generate(gen_scenario, gen_seed, gen_out, gen_config);
  } catch (const fs::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const fs::ValidationError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kValidation;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return kValidation;
  } catch (const fs::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "file error: %s\n", e.what());
    return kValidation;
  }
  return kOk;
}

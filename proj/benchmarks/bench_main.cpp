#include <benchmark/benchmark.h>

#include "fivestar/simlab.hpp"

namespace fs = fivestar;

namespace {

const fs::GeneratedTrial& trial() {
  static const auto t = fs::gen_trial(fs::ScenarioSpec::make(fs::Scenario::alt2), 2024);
  return t;
}

void BM_GenTrial(benchmark::State& state) {
  const auto spec = fs::ScenarioSpec::make(fs::Scenario::alt2);
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fs::gen_trial(spec, seed++));
}
BENCHMARK(BM_GenTrial)->Unit(benchmark::kMillisecond);

void BM_EnetPath(benchmark::State& state) {
  const auto blinded = fs::blind(trial().data);
  for (auto _ : state) benchmark::DoNotOptimize(fs::enet_path(blinded, 0.5));
}
BENCHMARK(BM_EnetPath)->Unit(benchmark::kMillisecond);

void BM_CvSelect(benchmark::State& state) {
  const auto blinded = fs::blind(trial().data);
  fs::CvOptions opt;
  opt.psi_grid.resize(static_cast<std::size_t>(state.range(0)));
  for (std::size_t k = 0; k < opt.psi_grid.size(); ++k)
    opt.psi_grid[k] = static_cast<double>(k + 1) / static_cast<double>(opt.psi_grid.size());
  for (auto _ : state) benchmark::DoNotOptimize(fs::cv_select(blinded, opt));
}
BENCHMARK(BM_CvSelect)->Arg(1)->Arg(19)->Unit(benchmark::kMillisecond);

void BM_Ctree(benchmark::State& state) {
  const auto blinded = fs::blind(trial().data);
  std::vector<std::size_t> covariates{0, 1, 25, 3, 30};
  fs::CtreeOptions opt;
  opt.mode = state.range(0) ? fs::PValueMode::permutation : fs::PValueMode::asymptotic;
  for (auto _ : state) benchmark::DoNotOptimize(fs::ctree_grow(blinded, covariates, opt));
}
BENCHMARK(BM_Ctree)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_AftFit(benchmark::State& state) {
  const auto& d = trial().data;
  const auto t = d.times();
  const auto e = d.events();
  const auto a = d.arms();
  const auto dist = static_cast<fs::Distribution>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fs::aft_fit(t, e, a, dist));
}
BENCHMARK(BM_AftFit)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

void BM_ZmaxP(benchmark::State& state) {
  double z = 1.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fs::zmax_p(z, 0.97));
    z = z < 3.0 ? z + 0.01 : 1.5;
  }
}
BENCHMARK(BM_ZmaxP)->Unit(benchmark::kMicrosecond);

void BM_ZmaxQuantile(benchmark::State& state) {
  double rho = 0.9;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fs::zmax_quantile(0.025, rho));
    rho = rho < 0.999 ? rho + 0.001 : 0.9;
  }
}
BENCHMARK(BM_ZmaxQuantile)->Unit(benchmark::kMicrosecond);

void BM_MaxCombo(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(fs::maxcombo(trial().data));
}
BENCHMARK(BM_MaxCombo)->Unit(benchmark::kMillisecond);

void BM_Replicate(benchmark::State& state) {
  const auto spec = fs::ScenarioSpec::make(fs::Scenario::alt1);
  const auto config = fs::simulation_config(spec, {});
  std::size_t rep = 0;
  for (auto _ : state) benchmark::DoNotOptimize(fs::run_replicate(spec, config, rep++, 7, 0.025));
}
BENCHMARK(BM_Replicate)->Unit(benchmark::kSecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();

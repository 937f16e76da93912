#include <benchmark/benchmark.h>

#include <vector>

#include "fusionest/simulation.hpp"

using namespace fusionest;

namespace {

ScenarioSpec scenario(ScenarioKind kind, std::size_t n) {
  ScenarioSpec s;
  s.kind = kind;
  s.n_rct = n;
  s.m_obs = n;
  return s;
}

struct Prepared {
  Dataset data;
  CrossFitBundle bundle;
  std::vector<NuisanceAt> eta;
};

Prepared prepare(ScenarioKind kind, std::size_t n) {
  const auto spec = scenario(kind, n);
  Rng rng(spec.seed);
  Dataset data = generate(spec, rng);
  const auto folds = make_folds(data.size(), 5, rng);
  auto learners = default_learners(spec);
  learners.oracle = oracle_nuisances(spec);
  auto bundle = cross_fit(data, folds, learners);
  auto eta = evaluate_out_of_fold(data, bundle);
  return {std::move(data), std::move(bundle), std::move(eta)};
}

void BM_Phi0(benchmark::State& state) {
  const auto p = prepare(ScenarioKind::Discrete, 3000);
  const KernelContext ctx{EstimandKind::Tgt, 0.1, p.bundle.rho};
  for (auto _ : state) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) acc += phi0(p.data.s(i), p.data.z(i), p.data.y(i), p.eta[i], ctx);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.data.size()));
}
BENCHMARK(BM_Phi0);

void BM_SelectionProjection(benchmark::State& state) {
  const auto p = prepare(ScenarioKind::Discrete, 3000);
  for (auto _ : state) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i)
      acc += f_selection(p.data.s(i), p.data.z(i), p.eta[i]) * zeta_selection(p.eta[i], EstimandKind::Rct, p.bundle.rho);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.data.size()));
}
BENCHMARK(BM_SelectionProjection);

void BM_LambdaSolve(benchmark::State& state) {
  const auto p = prepare(ScenarioKind::M4Synthetic, 2000);
  const auto psi = M4Design::psi();
  std::vector<double> flat;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const auto f = psi(p.data.x(i));
    flat.insert(flat.end(), f.begin(), f.end());
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(lambda_solve(p.eta, flat, psi.size(), {}, EstimandKind::Rct, p.bundle.rho));
  }
}
BENCHMARK(BM_LambdaSolve);

void BM_CrossFit(benchmark::State& state) {
  const auto kind = static_cast<ScenarioKind>(state.range(0));
  const auto spec = scenario(kind, 3000);
  Rng rng(spec.seed);
  const Dataset data = generate(spec, rng);
  const auto folds = make_folds(data.size(), 5, rng);
  auto learners = default_learners(spec);
  learners.oracle = oracle_nuisances(spec);
  for (auto _ : state) benchmark::DoNotOptimize(cross_fit(data, folds, learners));
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_CrossFit)
    ->Arg(static_cast<int>(ScenarioKind::Discrete))
    ->Arg(static_cast<int>(ScenarioKind::Continuous))
    ->Arg(static_cast<int>(ScenarioKind::M4Synthetic))
    ->Unit(benchmark::kMillisecond);

void BM_OneStep(benchmark::State& state) {
  const auto p = prepare(ScenarioKind::Discrete, 3000);
  for (auto _ : state) benchmark::DoNotOptimize(one_step_m5(p.data, p.bundle, EstimandKind::Rct));
}
BENCHMARK(BM_OneStep)->Unit(benchmark::kMicrosecond);

// a full benchmark replicate: generation, both variants, all methods and kinds
void BM_Replicate(benchmark::State& state) {
  BenchmarkConfig cfg;
  cfg.scenario = scenario(ScenarioKind::Discrete, 3000);
  cfg.methods = {Method::Baseline, Method::EffM5, Method::ControlVariate};
  cfg.replicates = 2;
  cfg.calibration_replicates = 2;
  cfg.boot = 10;
  for (auto _ : state) benchmark::DoNotOptimize(run_benchmark(cfg));
  state.SetLabel("2 replicates + 2 calibration");
}
BENCHMARK(BM_Replicate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

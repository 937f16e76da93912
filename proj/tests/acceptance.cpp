// Acceptance suite: one PASS/FAIL line per check, grouped by criterion.
//   acceptance [--only N] [--jobs J]
// Exit status is 0 only when every executed check passes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fusionest/error.hpp"
#include "fusionest/simulation.hpp"

using namespace fusionest;

namespace {

int g_jobs = 1;
int g_failed = 0;
int g_passed = 0;

void report(int criterion, bool pass, const std::string& what) {
  std::printf("%s  [%d] %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
  std::fflush(stdout);
  (pass ? g_passed : g_failed) += 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const char* kind_name(EstimandKind k) { return to_string(k).data(); }

// ---------------------------------------------------------------------------
// Benchmark runs, computed once per process

BenchmarkConfig discrete_config(std::size_t n_rct) {
  BenchmarkConfig c;
  c.scenario.kind = ScenarioKind::Discrete;
  c.scenario.n_rct = n_rct;
  c.scenario.m_obs = 3000;
  c.scenario.seed = 7;
  c.methods = {Method::Baseline, Method::EffM5, Method::ControlVariate};
  c.replicates = 1000;
  c.boot = 1000;
  c.k_folds = 5;
  return c;
}

BenchmarkConfig m4_config(bool homoskedastic, int replicates) {
  BenchmarkConfig c;
  c.scenario.kind = ScenarioKind::M4Synthetic;
  c.scenario.n_rct = 2000;
  c.scenario.m_obs = 2000;
  c.scenario.seed = 7;
  c.scenario.homoskedastic = homoskedastic;
  c.methods = {Method::Baseline, Method::EffM4};
  c.variants = {Variant::Oracle};
  c.replicates = replicates;
  c.boot = 1000;
  return c;
}

BenchmarkConfig continuous_config() {
  BenchmarkConfig c = discrete_config(3000);
  c.scenario.kind = ScenarioKind::Continuous;
  c.replicates = 200;
  c.calibration_replicates = 200;
  return c;
}

std::map<std::string, BenchmarkResult> g_runs;

const BenchmarkResult& run(const std::string& name, const std::function<BenchmarkConfig()>& make) {
  auto it = g_runs.find(name);
  if (it != g_runs.end()) return it->second;
  BenchmarkConfig cfg = make();
  cfg.jobs = g_jobs;
  std::printf("      running %s (R=%d) ...\n", name.c_str(), cfg.replicates);
  std::fflush(stdout);
  return g_runs.emplace(name, run_benchmark(cfg)).first->second;
}

const BenchmarkResult& discrete3000() { return run("discrete n_rct=3000", [] { return discrete_config(3000); }); }
const BenchmarkResult& discrete300() { return run("discrete n_rct=300", [] { return discrete_config(300); }); }
const BenchmarkResult& m4_hetero() { return run("m4_synthetic heteroskedastic", [] { return m4_config(false, 1000); }); }

std::vector<double> errors(const BenchmarkResult& r, Variant v, Method m, EstimandKind k) {
  auto est = r.estimates(v, m, k);
  const double truth = r.tau.of(k);
  for (auto& e : est) e -= truth;
  return est;
}

void check_re(int criterion, const BenchmarkResult& r, Variant v, Method m, EstimandKind k, double lo, double hi) {
  const SummaryRow* row = r.find(v, m, k);
  if (row == nullptr) {
    report(criterion, false, "missing summary row");
    return;
  }
  const bool pass = row->re > lo && row->re < hi;
  report(criterion, pass,
         fmt("%s %s %s n_rct=%zu: RE %.3f (95%% CI %.3f-%.3f), target interval (%.2f, %.2f)", to_string(v).data(),
             to_string(m).data(), kind_name(k), r.scenario.n_rct, row->re, row->ci_lo, row->ci_hi, lo, hi));
}

// Ordering a <= b in MSE, allowing interval overlap: fails only when the
// bootstrap interval of MSE(b)/MSE(a) lies entirely below 1.
void check_order(int criterion, const BenchmarkResult& r, Variant v, EstimandKind k, Method a, Method b,
                 const char* label) {
  const auto ea = errors(r, v, a, k);
  const auto eb = errors(r, v, b, k);
  const auto ci = mse_ratio_interval(eb, ea, 1000, derive_seed(r.scenario.seed, 1, seed_tag::bootstrap));
  report(criterion, ci.hi >= 1.0,
         fmt("%s %s %s: MSE(%s)/MSE(%s) = %.3f (95%% CI %.3f-%.3f)", label, to_string(v).data(), kind_name(k),
             to_string(b).data(), to_string(a).data(), ci.ratio, ci.lo, ci.hi));
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto& big = discrete3000();
  check_re(1, big, Variant::Oracle, Method::EffM5, EstimandKind::Rct, 1.19, 1.34);
  check_re(1, big, Variant::Oracle, Method::ControlVariate, EstimandKind::Rct, 0.96, 1.12);
  check_re(1, discrete300(), Variant::Oracle, Method::EffM5, EstimandKind::Obs, 3.83, 4.80);
}

void criterion2() {
  const auto& big = discrete3000();
  check_re(2, big, Variant::Feasible, Method::EffM5, EstimandKind::Rct, 1.18, 1.33);
  check_re(2, big, Variant::Feasible, Method::ControlVariate, EstimandKind::Rct, 0.96, 1.13);
}

void criterion3() {
  const auto& big = discrete3000();
  for (Variant v : {Variant::Oracle, Variant::Feasible}) {
    for (EstimandKind k : kAllKinds) {
      check_order(3, big, v, k, Method::EffM5, Method::ControlVariate, "discrete");
      check_order(3, big, v, k, Method::ControlVariate, Method::Baseline, "discrete");
    }
  }
  // continuous scenario: smoke test of the same ordering
  const auto& cont = run("continuous n_rct=3000", continuous_config);
  for (Variant v : {Variant::Oracle, Variant::Feasible}) {
    for (EstimandKind k : kAllKinds) {
      check_order(3, cont, v, k, Method::EffM5, Method::ControlVariate, "continuous");
      check_order(3, cont, v, k, Method::ControlVariate, Method::Baseline, "continuous");
    }
  }
}

void criterion4() {
  const Population pop = enumerate_population(discrete_config(3000).scenario);
  auto phi = [&](const SupportPoint& w, EstimandKind k) {
    return phi0(w.s, w.z, w.y, pop.eta->at(w.x), {k, pop.tau.of(k), pop.rho});
  };
  auto g5 = [&](const SupportPoint& w, EstimandKind k) {
    const auto eta = pop.eta->at(w.x);
    return f_selection(w.s, w.z, eta) * zeta_selection(eta, k, pop.rho) * (w.y - eta.mean_at(w.s, w.z));
  };
  for (EstimandKind k : kAllKinds) {
    const double mean = pop.expect([&](const SupportPoint& w) { return phi(w, k); });
    report(4, std::abs(mean) < 1e-10, fmt("(a) %s: |E[phi0]| = %.2e < 1e-10", kind_name(k), std::abs(mean)));
  }
  for (EstimandKind k : kAllKinds) {
    double worst = 0.0;
    for (double a : {0.0, 1.0})
      for (double b : {0.0, 1.0}) {
        const double x[2] = {a, b};
        const double m = pop.expect([&](const SupportPoint& w) {
          if (w.x[0] != a || w.x[1] != b) return 0.0;
          return w.s * (w.z - pop.eta->at(w.x).e) * phi(w, k);
        });
        worst = std::max(worst, std::abs(m / pop.x_prob(x)));
      }
    report(4, worst < 1e-10, fmt("(b) %s: max_x |E[S(Z-e)phi0 | X=x]| = %.2e < 1e-10", kind_name(k), worst));
  }
  for (EstimandKind k : kAllKinds) {
    const double cross = pop.expect([&](const SupportPoint& w) { return phi(w, k) * g5(w, k); });
    const double gg = pop.expect([&](const SupportPoint& w) { return g5(w, k) * g5(w, k); });
    const double v0 = pop.expect([&](const SupportPoint& w) { return phi(w, k) * phi(w, k); });
    const double v1 = pop.expect([&](const SupportPoint& w) { return std::pow(phi(w, k) - g5(w, k), 2); });
    report(4, std::abs(cross - gg) < 1e-8 && v1 <= v0,
           fmt("(c) %s: |E[phi0 g] - E[g^2]| = %.2e < 1e-8; Var(phi0 - g) = %.4f <= Var(phi0) = %.4f", kind_name(k),
               std::abs(cross - gg), v1, v0));
  }
  double worst = 0.0;
  for (double a : {0.0, 1.0})
    for (double b : {0.0, 1.0}) {
      const double x[2] = {a, b};
      const auto eta = pop.eta->at(x);
      worst = std::max(worst, std::abs(logit(eta.m_sz(1, 1)) - logit(eta.m_sz(1, 0)) - logit(eta.m_sz(0, 1)) +
                                       logit(eta.m_sz(0, 0))));
    }
  report(4, worst < 1e-12, fmt("(d) max_x |log OR1 - log OR0| = %.2e < 1e-12", worst));
}

void criterion5() {
  // homoskedastic, constant e, psi with intercept, kind Rct
  ScenarioSpec spec = m4_config(true, 1).scenario;
  const auto oracle = oracle_nuisances(spec);
  const FeatureMap psi = M4Design::psi();
  const int datasets = 50;
  double worst_nu = 0.0;
  int identical = 0;
  for (int r = 0; r < datasets; ++r) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(r), seed_tag::replicate));
    const Dataset data = generate(spec, rng);
    const auto folds = make_folds(data.size(), 5, rng);
    CrossFitSpec cs;
    cs.p = cs.e = cs.q = cs.m = LearnerSpec::oracle();
    cs.oracle = oracle;
    cs.restriction = Restriction::M4;
    cs.psi = psi;
    const auto bundle = cross_fit(data, folds, cs);
    const auto eta = evaluate_out_of_fold(data, bundle);
    std::vector<double> flat;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto f = psi(data.x(i));
      flat.insert(flat.end(), f.begin(), f.end());
    }
    const auto lam = lambda_solve(eta, flat, psi.size(), {}, EstimandKind::Rct, bundle.rho);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::span<const double> f(flat.data() + i * psi.size(), psi.size());
      worst_nu = std::max(worst_nu, std::abs(nu_confounding(eta[i], EstimandKind::Rct, bundle.rho, lam.lambda, f)));
    }
    const auto rep = one_step_m4(data, bundle, EstimandKind::Rct);
    identical += rep.tau_hat == rep.baseline;
  }
  report(5, worst_nu < 1e-10,
         fmt("max |nu(x)| over %d datasets x %zu rows = %.2e < 1e-10", datasets, spec.n_rct + spec.m_obs, worst_nu));
  report(5, identical == datasets, fmt("tau_eff == tau_ba bitwise in %d of %d datasets", identical, datasets));
}

void criterion6() {
  const auto& r = m4_hetero();
  for (EstimandKind k : kAllKinds) {
    const auto ea = errors(r, Variant::Oracle, Method::EffM4, k);
    const auto eb = errors(r, Variant::Oracle, Method::Baseline, k);
    auto var = [](const std::vector<double>& e, const std::vector<std::size_t>& idx) {
      double m = 0.0;
      for (auto i : idx) m += e[i];
      m /= static_cast<double>(idx.size());
      double v = 0.0;
      for (auto i : idx) v += (e[i] - m) * (e[i] - m);
      return v / static_cast<double>(idx.size() - 1);
    };
    std::vector<std::size_t> idx(ea.size());
    std::iota(idx.begin(), idx.end(), 0);
    const double ratio = var(ea, idx) / var(eb, idx);
    // one-sided percentile bootstrap: reject Var(eff) >= Var(ba) when the upper 95% point is below 1
    Rng rng(derive_seed(r.scenario.seed, 2, seed_tag::bootstrap));
    std::vector<double> boots;
    for (int b = 0; b < 2000; ++b) {
      for (auto& i : idx) i = rng.below(ea.size());
      boots.push_back(var(ea, idx) / var(eb, idx));
    }
    std::sort(boots.begin(), boots.end());
    const double upper = sorted_quantile(boots, 0.95);
    const double p_value =
        static_cast<double>(std::count_if(boots.begin(), boots.end(), [](double v) { return v >= 1.0; })) /
        static_cast<double>(boots.size());
    report(6, upper < 1.0,
           fmt("%s: Var(eff)/Var(ba) = %.3f, one-sided 95%% upper bound %.3f, bootstrap p = %.4f", kind_name(k), ratio,
               upper, p_value));
    const SummaryRow* eff = r.find(Variant::Oracle, Method::EffM4, k);
    const SummaryRow* ba = r.find(Variant::Oracle, Method::Baseline, k);
    const double mse_ratio = eff->mse / ba->mse;
    report(6, mse_ratio < 0.9, fmt("%s: MSE(eff)/MSE(ba) = %.3f < 0.9 (R=%d, N=%zu)", kind_name(k), mse_ratio,
                                   eff->n_ok, r.scenario.n_rct + r.scenario.m_obs));
  }
}

void criterion7() {
  Rng rng(2718);
  const auto psi = FeatureMap::parse("intercept,x1,x2,x1*x2");
  double worst5 = 0.0, worst4 = 0.0;
  auto rand_fn = [&](bool prob) {
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    return NuisanceModel::Component{std::make_shared<FunctionRegressor>([=](std::span<const double> x) {
                                      const double t = a + b * x[0] + c * x[1];
                                      return prob ? expit(t) : t;
                                    }),
                                    std::nullopt};
  };
  for (int i = 0; i < 1000; ++i) {
    NuisanceModel d5, d4;
    d5.outcome_kind = OutcomeKind::Binary;
    d4.outcome_kind = OutcomeKind::Continuous;
    d5.p = d5.e = d5.q = d4.p = d4.e = d4.q = rand_fn(true);
    for (std::size_t c = 0; c < 4; ++c) {
      d5.m[c] = rand_fn(true);
      d4.m[c] = rand_fn(false);
    }
    std::vector<double> theta{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const auto m5 = enforce_m5(d5);
    const auto m4 = enforce_m4(d4, theta, psi);
    const double x[2] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto a = m5.at(x);
    worst5 = std::max(worst5, std::abs(logit(a.m_sz(1, 1)) - logit(a.m_sz(1, 0)) - logit(a.m_sz(0, 1)) +
                                       logit(a.m_sz(0, 0))));
    const auto b = m4.at(x);
    const auto f = psi(x);
    const double lin = std::inner_product(f.begin(), f.end(), theta.begin(), 0.0);
    worst4 = std::max(worst4, std::abs(b.m_sz(1, 1) - b.m_sz(1, 0) - b.m_sz(0, 1) + b.m_sz(0, 0) - lin));
  }
  report(7, worst5 < 1e-12, fmt("enforce_m5 on 1000 random drafts: max logit-identity residual %.2e < 1e-12", worst5));
  report(7, worst4 < 1e-12, fmt("enforce_m4 on 1000 random drafts: max additive-identity residual %.2e < 1e-12", worst4));

  // truncation band of every fitted probability, over cross-fits of random datasets
  int outside = 0, probes = 0;
  for (int trial = 0; trial < 40; ++trial) {
    ScenarioSpec spec;
    spec.kind = trial % 2 == 0 ? ScenarioKind::Discrete : ScenarioKind::Continuous;
    spec.n_rct = 30 + rng.below(300);
    spec.m_obs = 30 + rng.below(300);
    Rng local(rng.next());
    const Dataset data = generate(spec, local);
    const auto folds = make_folds(data.size(), 5, local);
    auto learners = default_learners(spec);
    learners.oracle = oracle_nuisances(spec);  // e is the design's own, untruncated; p, q, m are fitted
    const auto bundle = cross_fit(data, folds, learners);
    for (int k = 0; k < 5; ++k) {
      const auto train = folds.complement(k);
      auto band = [&](const RegressionTarget& t) { return truncation_band(select_rows(data, train, t).size()); };
      const Band bp = band(RegressionTarget::selection()),
                 bq = band(RegressionTarget::obs_propensity());
      Band bm[4];
      for (int s = 0; s <= 1; ++s)
        for (int z = 0; z <= 1; ++z) bm[cell(s, z)] = band(RegressionTarget::outcome(s, z));
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& model = *bundle.models[static_cast<std::size_t>(k)];
        const auto x = data.x(i);
        auto in = [](const Band& b, double v) { return v >= b.lo && v <= b.hi; };
        bool ok = in(bp, model.p(x)) && in(bq, model.q(x));
        for (std::size_t c = 0; c < 4; ++c)
          if (model.m[c]) ok = ok && in(bm[c], model.m[c](x));  // m11 is derived under the restriction
        outside += !ok;
        ++probes;
      }
    }
  }
  report(7, outside == 0, fmt("truncation band [1/sqrt(n), 1-1/sqrt(n)]: %d of %d probed fits outside", outside, probes));

  // one-step identity on every benchmark run of this suite
  const std::pair<const char*, const BenchmarkResult*> runs[] = {
      {"discrete n_rct=3000", &discrete3000()},
      {"discrete n_rct=300", &discrete300()},
      {"m4_synthetic heteroskedastic", &m4_hetero()},
  };
  for (const auto& [name, r] : runs) {
    int rows = 0;
    for (const auto& row : r->rows) rows += row.ok && row.method != Method::Baseline;
    report(7, r->difference_violations == 0,
           fmt("%s: tau_hat == baseline - adjustment bitwise, %d violations in %d one-step rows", name,
               r->difference_violations, rows));
    report(7, r->sum_violations == 0,
           fmt("%s: tau_hat + adjustment == baseline bitwise, %d violations in %d one-step rows", name,
               r->sum_violations, rows));
  }
}

void criterion8() {
  auto same = [](BenchmarkConfig cfg, const char* name) {
    cfg.jobs = 1;
    const auto a = run_benchmark(cfg);
    cfg.jobs = std::max(4, g_jobs);
    const auto b = run_benchmark(cfg);
    const bool rep = to_csv(replicate_table(a)) == to_csv(replicate_table(b));
    const bool sum = to_csv(summary_table(a)) == to_csv(summary_table(b));
    report(8, rep && sum, fmt("%s: replicate and summary CSVs byte-identical for --jobs 1 and --jobs %d", name,
                              cfg.jobs));
  };
  same(discrete_config(300), "discrete n_rct=300 R=1000");
  same(m4_config(false, 100), "m4_synthetic R=100");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusionest acceptance suite"};
  int only = 0;
  g_jobs = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--only", only, "Run a single criterion (1-8)")->check(CLI::Range(0, 8));
  app.add_option("--jobs", g_jobs, "Worker threads for the benchmark runs")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::function<void()> criteria[] = {criterion1, criterion2, criterion3, criterion4,
                                            criterion5, criterion6, criterion7, criterion8};
  for (int c = 1; c <= 8; ++c) {
    if (only != 0 && only != c) continue;
    std::printf("criterion %d\n", c);
    try {
      criteria[c - 1]();
    } catch (const std::exception& e) {
      report(c, false, std::string("aborted: ") + e.what());
    }
  }
  std::printf("\n%d passed, %d failed\n", g_passed, g_failed);
  return g_failed == 0 ? 0 : 1;
}

#include "fusionest/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "fusionest/error.hpp"

namespace fusionest {

std::string_view to_string(Variant v) noexcept { return v == Variant::Oracle ? "oracle" : "feasible"; }

Variant parse_variant(std::string_view text) {
  if (text == "feasible") return Variant::Feasible;
  if (text == "oracle") return Variant::Oracle;
  throw Error(ErrorKind::ConflictingOptions,
              "unknown variant '" + std::string(text) + "' (expected feasible or oracle)");
}

CrossFitSpec default_learners(const ScenarioSpec& spec) {
  CrossFitSpec s;
  switch (spec.kind) {
    case ScenarioKind::Discrete:
      s.p = s.q = s.m = LearnerSpec::cell_mean();
      s.e = LearnerSpec::oracle();
      break;
    case ScenarioKind::Continuous:
      s.p = s.q = s.m = LearnerSpec::irls(2);
      s.e = LearnerSpec::oracle();
      break;
    case ScenarioKind::M4Synthetic:
      s.p = LearnerSpec::irls(2);
      s.q = LearnerSpec::irls(1);
      s.m = LearnerSpec::irls(2);
      s.e = LearnerSpec::known(M4Design::e);
      s.psi = M4Design::psi();
      break;
  }
  s.restriction = spec.restriction();
  return s;
}

void BenchmarkConfig::validate() const {
  scenario.validate();
  if (replicates < 2) throw Error(ErrorKind::ConflictingOptions, "need at least 2 replicates");
  if (boot < 0) throw Error(ErrorKind::ConflictingOptions, "bootstrap count must be non-negative");
  if (jobs < 1) throw Error(ErrorKind::ConflictingOptions, "jobs must be at least 1");
  if (k_folds < 2) throw Error(ErrorKind::BadFoldCount, "need K >= 2 folds");
  if (calibration_replicates && *calibration_replicates < 2) {
    throw Error(ErrorKind::ConflictingOptions, "need at least 2 calibration replicates");
  }
  if (methods.empty() || kinds.empty() || variants.empty()) {
    throw Error(ErrorKind::MissingRequired, "methods, kinds and variants must be non-empty");
  }
  const Restriction r = scenario.restriction();
  for (Method m : methods) {
    const bool ok = m == Method::Baseline || (m == Method::EffM4 && r == Restriction::M4) ||
                    ((m == Method::EffM5 || m == Method::ControlVariate) && r == Restriction::M5);
    if (!ok) {
      throw Error(ErrorKind::ConflictingOptions,
                  "method " + std::string(to_string(m)) + " does not apply to scenario " +
                      std::string(to_string(scenario.kind)) + " (use " +
                      (r == Restriction::M4 ? "baseline, eff_m4" : "baseline, eff_m5, cv") + ")");
    }
  }
  if (learners && learners->restriction != Restriction::None && learners->restriction != r) {
    throw Error(ErrorKind::ConflictingOptions, "learner restriction disagrees with the scenario");
  }
}

std::vector<double> BenchmarkResult::estimates(Variant v, Method m, EstimandKind k) const {
  std::vector<double> out;
  for (const auto& row : rows) {
    if (row.variant == v && row.method == m && row.kind == k) {
      out.push_back(row.ok ? row.tau_hat : std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

const SummaryRow* BenchmarkResult::find(Variant v, Method m, EstimandKind k) const {
  for (const auto& s : summary)
    if (s.variant == v && s.method == m && s.kind == k) return &s;
  return nullptr;
}

double sorted_quantile(std::span<const double> sorted, double prob) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

double ratio_of(double num, double den) {
  if (den == 0.0) return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace

RatioInterval mse_ratio_interval(std::span<const double> err_a, std::span<const double> err_b, int boot,
                                 std::uint64_t seed, double level) {
  if (err_a.size() != err_b.size()) throw Error(ErrorKind::DimensionMismatch, "error vectors differ in length");
  const std::size_t n = err_a.size();
  auto ratio_over = [&](auto&& index) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = index(j);
      if (std::isnan(err_a[i]) || std::isnan(err_b[i])) continue;
      num += err_a[i] * err_a[i];
      den += err_b[i] * err_b[i];
    }
    return ratio_of(num, den);
  };
  RatioInterval out;
  out.ratio = ratio_over([](std::size_t j) { return j; });
  out.lo = out.hi = out.ratio;
  if (boot <= 0 || n == 0) return out;
  Rng rng(seed);
  std::vector<std::size_t> idx(n);
  std::vector<double> draws;
  draws.reserve(static_cast<std::size_t>(boot));
  for (int b = 0; b < boot; ++b) {
    for (auto& i : idx) i = rng.below(n);
    draws.push_back(ratio_over([&](std::size_t j) { return idx[j]; }));
  }
  std::sort(draws.begin(), draws.end());
  const double tail = (1.0 - level) / 2.0;
  out.lo = sorted_quantile(draws, tail);
  out.hi = sorted_quantile(draws, 1.0 - tail);
  return out;
}

namespace {

// Runs fn(i) for i in [0, n) on `jobs` threads. Each index writes only its own slot.
template <class Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct Plan {
  BenchmarkConfig config;
  std::vector<Method> methods;  // baseline first
  CrossFitSpec feasible;
  CrossFitSpec oracle;
  bool want_cv = false;

  const CrossFitSpec& learners(Variant v) const { return v == Variant::Oracle ? oracle : feasible; }
  std::size_t slots_per_replicate() const {
    return config.variants.size() * config.kinds.size() * methods.size();
  }
};

Plan make_plan(const BenchmarkConfig& config) {
  config.validate();
  Plan plan;
  plan.config = config;
  plan.methods.push_back(Method::Baseline);
  for (Method m : config.methods)
    if (std::find(plan.methods.begin(), plan.methods.end(), m) == plan.methods.end()) plan.methods.push_back(m);
  plan.want_cv = std::find(plan.methods.begin(), plan.methods.end(), Method::ControlVariate) != plan.methods.end();

  const auto oracle = oracle_nuisances(config.scenario);
  plan.feasible = config.learners ? *config.learners : default_learners(config.scenario);
  plan.feasible.restriction = config.scenario.restriction();
  plan.feasible.oracle = oracle;
  if (plan.feasible.restriction == Restriction::M4 && plan.feasible.psi.empty()) plan.feasible.psi = M4Design::psi();

  plan.oracle = plan.feasible;
  plan.oracle.p = plan.oracle.e = plan.oracle.q = plan.oracle.m = LearnerSpec::oracle();
  return plan;
}

struct Draw {
  Dataset data;
  FoldAssignment folds;
  CvSpec cv;
};

Draw draw_dataset(const Plan& plan, Rng& rng) {
  Dataset data = generate(plan.config.scenario, rng);
  FoldAssignment folds = make_folds(data.size(), plan.config.k_folds, rng);
  CvSpec cv;
  if (plan.want_cv) {
    cv = plan.config.scenario.kind == ScenarioKind::Discrete
             ? CvSpec::discrete()
             : CvSpec::continuous(data, plan.config.cv_points, rng);
  }
  return {std::move(data), std::move(folds), std::move(cv)};
}

// Calibration pairs (tau_ba, lambda) keyed by (variant, kind) position.
struct CalibrationDraw {
  bool ok = false;
  std::vector<double> tau;  // variants x kinds
  std::vector<double> lambda;
};

std::string short_error(const std::exception& ex) {
  std::string msg = ex.what();
  if (const auto pos = msg.find('\n'); pos != std::string::npos) msg.resize(pos);
  return msg;
}

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
  const Plan plan = make_plan(config);
  const auto& cfg = plan.config;
  const ScenarioSpec& sc = cfg.scenario;
  const std::size_t nv = cfg.variants.size();
  const std::size_t nk = cfg.kinds.size();

  BenchmarkResult result;
  result.scenario = sc;
  result.tau = true_taus(sc);

  // Control-variate factors from independent calibration replicates.
  std::map<std::pair<std::size_t, std::size_t>, Gamma> gammas;
  if (plan.want_cv && cfg.cv_bootstrap == 0) {
    const int n_cal = cfg.calibration_replicates.value_or(cfg.replicates);
    std::vector<CalibrationDraw> cal(static_cast<std::size_t>(n_cal));
    parallel_for(n_cal, cfg.jobs, [&](int r) {
      auto& slot = cal[static_cast<std::size_t>(r)];
      try {
        Rng rng(derive_seed(sc.seed, static_cast<std::uint64_t>(r), seed_tag::calibration));
        const Draw d = draw_dataset(plan, rng);
        slot.lambda = cv_statistics(d.data, plan.feasible, d.cv).lambda;
        for (std::size_t v = 0; v < nv; ++v) {
          const auto bundle = cross_fit(d.data, d.folds, plan.learners(cfg.variants[v]));
          for (std::size_t k = 0; k < nk; ++k) slot.tau.push_back(fit_baseline(d.data, bundle, cfg.kinds[k]).tau_hat);
        }
        slot.ok = true;
      } catch (const std::exception&) {
        slot.ok = false;
      }
    });
    for (std::size_t v = 0; v < nv; ++v) {
      for (std::size_t k = 0; k < nk; ++k) {
        std::vector<double> taus;
        std::vector<std::vector<double>> lambdas;
        for (const auto& c : cal) {
          if (!c.ok) continue;
          taus.push_back(c.tau[v * nk + k]);
          lambdas.push_back(c.lambda);
        }
        gammas[{v, k}] = estimate_gamma(taus, lambdas);
      }
    }
  }

  const std::size_t per = plan.slots_per_replicate();
  const auto n_rep = static_cast<std::size_t>(cfg.replicates);
  std::vector<ReplicateRow> rows(n_rep * per);
  std::mutex progress_mu;
  int done = 0;

  parallel_for(cfg.replicates, cfg.jobs, [&](int r) {
    const auto base = static_cast<std::size_t>(r) * per;
    auto slot = [&](std::size_t v, std::size_t k, std::size_t m) -> ReplicateRow& {
      return rows[base + (v * nk + k) * plan.methods.size() + m];
    };
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t k = 0; k < nk; ++k)
        for (std::size_t m = 0; m < plan.methods.size(); ++m) {
          auto& row = slot(v, k, m);
          row.replicate = r;
          row.variant = cfg.variants[v];
          row.kind = cfg.kinds[k];
          row.method = plan.methods[m];
          row.error = "not run";
        }

    auto fail_all = [&](std::size_t v_from, std::size_t v_to, const std::string& msg) {
      for (std::size_t v = v_from; v < v_to; ++v)
        for (std::size_t k = 0; k < nk; ++k)
          for (std::size_t m = 0; m < plan.methods.size(); ++m) slot(v, k, m).error = msg;
    };

    Rng rng(derive_seed(sc.seed, static_cast<std::uint64_t>(r), seed_tag::replicate));
    std::optional<Draw> draw;
    try {
      draw = draw_dataset(plan, rng);
    } catch (const std::exception& ex) {
      fail_all(0, nv, short_error(ex));
    }

    if (draw) {
      std::optional<CvStatistics> stats;
      std::string cv_error;
      if (plan.want_cv) {
        try {
          stats = cv_statistics(draw->data, plan.feasible, draw->cv);
        } catch (const std::exception& ex) {
          cv_error = short_error(ex);
        }
      }
      for (std::size_t v = 0; v < nv; ++v) {
        const Variant variant = cfg.variants[v];
        std::optional<CrossFitBundle> bundle;
        try {
          bundle = cross_fit(draw->data, draw->folds, plan.learners(variant));
        } catch (const std::exception& ex) {
          fail_all(v, v + 1, short_error(ex));
          continue;
        }
        for (std::size_t k = 0; k < nk; ++k) {
          const EstimandKind kind = cfg.kinds[k];
          std::optional<EstimateReport> ba;
          for (std::size_t m = 0; m < plan.methods.size(); ++m) {
            auto& row = slot(v, k, m);
            try {
              EstimateReport rep;
              switch (plan.methods[m]) {
                case Method::Baseline:
                  rep = fit_baseline(draw->data, *bundle, kind);
                  ba = rep;
                  break;
                case Method::EffM4: rep = one_step_m4(draw->data, *bundle, kind); break;
                case Method::EffM5: rep = one_step_m5(draw->data, *bundle, kind); break;
                case Method::ControlVariate: {
                  if (!ba) throw Error(ErrorKind::MissingGamma, "baseline failed");
                  if (!stats) throw Error(ErrorKind::EmptyCells, cv_error);
                  std::optional<Gamma> gamma;
                  if (cfg.cv_bootstrap > 0) {
                    gamma = bootstrap_gamma(draw->data, plan.learners(variant), cfg.k_folds, kind, draw->cv,
                                            cfg.cv_bootstrap, rng);
                  } else {
                    gamma = gammas.at({v, k});
                  }
                  rep = control_variate(*ba, *stats, gamma);
                  break;
                }
              }
              row.ok = true;
              row.error.clear();
              row.tau_hat = rep.tau_hat;
              row.baseline = rep.baseline;
              row.adjustment = rep.adjustment;
            } catch (const std::exception& ex) {
              row.ok = false;
              row.error = short_error(ex);
            }
          }
        }
      }
    }
    if (cfg.progress) {
      std::lock_guard lock(progress_mu);
      cfg.progress(++done, cfg.replicates);
    }
  });

  result.rows = std::move(rows);
  for (const auto& row : result.rows) {
    if (!row.ok) continue;
    if (row.baseline - row.adjustment != row.tau_hat) ++result.difference_violations;
    if (row.tau_hat + row.adjustment != row.baseline) ++result.sum_violations;
  }

  const std::uint64_t boot_seed = derive_seed(sc.seed, 0, seed_tag::bootstrap);
  for (Variant v : cfg.variants) {
    for (EstimandKind k : cfg.kinds) {
      const double truth = result.tau.of(k);
      auto errors = [&](Method m) {
        auto est = result.estimates(v, m, k);
        for (double& e : est) e -= truth;
        return est;
      };
      const auto err_ba = errors(Method::Baseline);
      for (Method m : plan.methods) {
        const auto err = errors(m);
        SummaryRow s;
        s.variant = v;
        s.method = m;
        s.kind = k;
        s.true_tau = truth;
        double sq = 0.0;
        for (double e : err) {
          if (std::isnan(e)) {
            ++s.n_fail;
          } else {
            ++s.n_ok;
            sq += e * e;
          }
        }
        s.mse = s.n_ok > 0 ? sq / s.n_ok : std::numeric_limits<double>::quiet_NaN();
        const auto ci = mse_ratio_interval(err_ba, err, cfg.boot, boot_seed);
        s.re = ci.ratio;
        s.ci_lo = ci.lo;
        s.ci_hi = ci.hi;
        result.summary.push_back(s);
      }
    }
  }
  return result;
}

Table replicate_table(const BenchmarkResult& result) {
  Table t;
  t.columns = {"replicate", "variant", "method", "kind", "status", "tau_hat", "baseline", "adjustment", "true_tau"};
  for (const auto& row : result.rows) {
    const double truth = result.tau.of(row.kind);
    std::vector<Cell> cells = {static_cast<std::int64_t>(row.replicate), std::string(to_string(row.variant)),
                               std::string(to_string(row.method)), std::string(to_string(row.kind)),
                               row.ok ? std::string("ok") : row.error};
    if (row.ok) {
      cells.insert(cells.end(), {row.tau_hat, row.baseline, row.adjustment});
    } else {
      cells.insert(cells.end(), {std::string(), std::string(), std::string()});
    }
    cells.emplace_back(truth);
    t.add_row(std::move(cells));
  }
  return t;
}

Table summary_table(const BenchmarkResult& result) {
  Table t;
  t.columns = {"scenario", "n_rct", "m_obs", "variant", "method", "kind", "true_tau",
               "mse", "re", "ci_lo", "ci_hi", "n_ok", "n_fail"};
  for (const auto& s : result.summary) {
    t.add_row({std::string(to_string(result.scenario.kind)), static_cast<std::int64_t>(result.scenario.n_rct),
               static_cast<std::int64_t>(result.scenario.m_obs), std::string(to_string(s.variant)),
               std::string(to_string(s.method)), std::string(to_string(s.kind)), s.true_tau, s.mse, s.re, s.ci_lo,
               s.ci_hi, static_cast<std::int64_t>(s.n_ok), static_cast<std::int64_t>(s.n_fail)});
  }
  return t;
}

}  // namespace fusionest

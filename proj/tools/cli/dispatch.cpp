#include "cli/dispatch.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>

#include <unistd.h>

#include "fusionest/error.hpp"
#include "json.hpp"

namespace fusionest::cli {

namespace {

bool binary_covariates(const Dataset& data) {
  if (data.dim() > 63) return false;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (double v : data.x(i))
      if (v != 0.0 && v != 1.0) return false;
  return true;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int run_simulate(const RunConfig& c, std::ostream& out) {
  Rng rng(derive_seed(c.scenario.seed, 0, seed_tag::replicate));
  const Dataset data = generate(c.scenario, rng);
  write_csv(data, c.out);
  out << "wrote " << data.size() << " rows (" << data.n_rct() << " rct, " << data.n_obs() << " obs) to "
      << c.out.string() << "\n";
  return 0;
}

int run_estimate(const RunConfig& c, std::ostream& out) {
  const Dataset data = load_csv(c.input, c.outcome);
  const CrossFitSpec spec = estimate_learners(c, data);
  Rng rng(derive_seed(c.scenario.seed, 0, seed_tag::replicate));
  const FoldAssignment folds = make_folds(data.size(), c.k, rng);
  const CrossFitBundle bundle = cross_fit(data, folds, spec);

  const bool want_cv = std::find(c.methods.begin(), c.methods.end(), Method::ControlVariate) != c.methods.end();
  std::optional<CvSpec> cv;
  if (want_cv) {
    cv = data.dim() == 2 && binary_covariates(data)
             ? CvSpec::discrete()
             : CvSpec::continuous(data, static_cast<std::size_t>(c.cv_points), rng);
  }

  Table table;
  table.columns = {"kind", "method", "tau_hat", "baseline", "adjustment"};
  out << "n = " << data.size() << " (" << data.n_rct() << " rct, " << data.n_obs() << " obs), K = " << c.k
      << ", restriction " << to_string(c.restriction) << "\n";
  out << "learners: " << spec.p.to_string() << " (p), " << spec.e.to_string() << " (e), " << spec.q.to_string()
      << " (q), " << spec.m.to_string() << " (m)\n\n";
  out << std::left << std::setw(6) << "kind" << std::setw(10) << "method" << std::right << std::setw(14) << "tau_hat"
      << std::setw(14) << "adjustment" << "\n";
  for (EstimandKind kind : c.kinds) {
    const EstimateReport ba = fit_baseline(data, bundle, kind);
    for (Method m : c.methods) {
      EstimateReport r;
      switch (m) {
        case Method::Baseline: r = ba; break;
        case Method::EffM4: r = one_step_m4(data, bundle, kind); break;
        case Method::EffM5: r = one_step_m5(data, bundle, kind); break;
        case Method::ControlVariate: {
          const Gamma gamma = bootstrap_gamma(data, spec, c.k, kind, *cv, c.cv_bootstrap, rng);
          r = control_variate(ba, cv_statistics(data, spec, *cv), gamma);
          break;
        }
      }
      table.add_row({std::string(to_string(kind)), std::string(to_string(m)), r.tau_hat, r.baseline, r.adjustment});
      out << std::left << std::setw(6) << to_string(kind) << std::setw(10) << to_string(m) << std::right
          << std::setw(14) << fixed(r.tau_hat, 6) << std::setw(14) << fixed(r.adjustment, 6) << "\n";
    }
  }
  const auto diag = bundle.diagnostics();
  if (diag.irls_not_converged + diag.ridge_fallbacks + diag.empty_strata + diag.pooled_variance_fits > 0) {
    out << "\nnotes: " << diag.irls_not_converged << " non-converged fits, " << diag.ridge_fallbacks
        << " ridge fallbacks, " << diag.empty_strata << " empty strata, " << diag.pooled_variance_fits
        << " pooled variance fits\n";
  }
  if (!c.out.empty()) {
    write_csv(table, c.out);
    out << "\nwrote " << c.out.string() << "\n";
  }
  return 0;
}

int run_benchmark_command(const RunConfig& c, std::ostream& out, std::ostream& err) {
  BenchmarkConfig b;
  b.scenario = c.scenario;
  b.methods = c.methods;
  b.kinds = c.kinds;
  b.variants = c.variants;
  b.replicates = c.replicates;
  b.boot = c.boot;
  b.jobs = c.jobs;
  b.k_folds = c.k;
  b.calibration_replicates = c.calibration_replicates;
  b.cv_bootstrap = c.cv_bootstrap;
  b.cv_points = static_cast<std::size_t>(c.cv_points);
  CrossFitSpec learners = default_learners(c.scenario);
  if (c.learner_p) learners.p = *c.learner_p;
  if (c.learner_e) learners.e = *c.learner_e;
  if (c.learner_q) learners.q = *c.learner_q;
  if (c.learner_m) learners.m = *c.learner_m;
  if (!c.psi.empty()) learners.psi = c.psi;
  learners.psi_variance = c.psi_v;
  b.learners = learners;
  if (isatty(STDERR_FILENO)) {
    b.progress = [&err](int done, int total) {
      err << "\rreplicate " << done << "/" << total << std::flush;
      if (done == total) err << "\n";
    };
  }

  const BenchmarkResult result = run_benchmark(b);

  out << "scenario " << to_string(c.scenario.kind) << ", n_rct = " << c.scenario.n_rct
      << ", m_obs = " << c.scenario.m_obs << ", R = " << c.replicates << ", seed = " << c.scenario.seed << "\n";
  out << "true tau: rct " << fixed(result.tau.rct, 6) << ", obs " << fixed(result.tau.obs, 6) << ", tgt "
      << fixed(result.tau.tgt, 6) << "\n\n";
  out << std::left << std::setw(10) << "variant" << std::setw(10) << "method" << std::setw(6) << "kind" << std::right
      << std::setw(12) << "mse" << std::setw(9) << "re" << std::setw(20) << "95% ci" << std::setw(8) << "fail"
      << "\n";
  for (const auto& s : result.summary) {
    out << std::left << std::setw(10) << to_string(s.variant) << std::setw(10) << to_string(s.method) << std::setw(6)
        << to_string(s.kind) << std::right << std::setw(12) << std::scientific << std::setprecision(3) << s.mse
        << std::defaultfloat << std::setw(9) << fixed(s.re, 3) << std::setw(20)
        << ("(" + fixed(s.ci_lo, 3) + ", " + fixed(s.ci_hi, 3) + ")") << std::setw(8) << s.n_fail << "\n";
  }

  if (!c.out.empty()) {
    std::filesystem::create_directories(c.out);
    write_csv(replicate_table(result), c.out / "replicates.csv");
    write_csv(summary_table(result), c.out / "summary.csv");
    std::ofstream json(c.out / "summary.json");
    if (!json) throw Error(ErrorKind::IoError, "cannot write " + (c.out / "summary.json").string());
    json << summary_json(result, utc_timestamp()) << "\n";
    out << "\nwrote replicates.csv, summary.csv, summary.json to " << c.out.string() << "\n";
  }
  return 0;
}

}  // namespace

CrossFitSpec estimate_learners(const RunConfig& c, const Dataset& data) {
  const LearnerSpec fallback = binary_covariates(data) ? LearnerSpec::cell_mean() : LearnerSpec::irls(2);
  CrossFitSpec spec;
  spec.p = c.learner_p.value_or(fallback);
  spec.e = c.learner_e.value_or(fallback);
  spec.q = c.learner_q.value_or(fallback);
  spec.m = c.learner_m.value_or(fallback);
  spec.restriction = c.restriction;
  spec.psi = c.psi;
  spec.psi_variance = c.psi_v;
  return spec;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string summary_json(const BenchmarkResult& result, const std::string& generated_at) {
  using nlohmann::json;
  auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  json doc;
  doc["generated_at"] = generated_at;
  doc["scenario"] = std::string(to_string(result.scenario.kind));
  doc["n_rct"] = result.scenario.n_rct;
  doc["m_obs"] = result.scenario.m_obs;
  doc["seed"] = result.scenario.seed;
  doc["true_tau"] = {{"rct", result.tau.rct}, {"obs", result.tau.obs}, {"tgt", result.tau.tgt}};
  json rows = json::array();
  for (const auto& s : result.summary) {
    rows.push_back({{"scenario", std::string(to_string(result.scenario.kind))},
                    {"n_rct", result.scenario.n_rct},
                    {"method", std::string(to_string(s.method))},
                    {"variant", std::string(to_string(s.variant))},
                    {"kind", std::string(to_string(s.kind))},
                    {"re", num(s.re)},
                    {"ci_lo", num(s.ci_lo)},
                    {"ci_hi", num(s.ci_hi)},
                    {"n_fail", s.n_fail},
                    {"mse", num(s.mse)}});
  }
  doc["results"] = std::move(rows);
  return doc.dump(2);
}

int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    validate(config);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    switch (config.command) {
      case Command::Simulate: return run_simulate(config, out);
      case Command::Estimate: return run_estimate(config, out);
      case Command::Benchmark: return run_benchmark_command(config, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace fusionest::cli

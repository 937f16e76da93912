#include "fusionest/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <utility>
#include <numeric>
#include <set>

#include "fusionest/error.hpp"
#include "fusionest/linalg.hpp"

namespace fusionest {

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Baseline: return "baseline";
    case Method::EffM4: return "eff_m4";
    case Method::EffM5: return "eff_m5";
    case Method::ControlVariate: return "cv";
  }
  return "baseline";
}

Method parse_method(std::string_view text) {
  if (text == "baseline" || text == "ba") return Method::Baseline;
  if (text == "eff_m4") return Method::EffM4;
  if (text == "eff_m5") return Method::EffM5;
  if (text == "cv" || text == "control_variate") return Method::ControlVariate;
  throw Error(ErrorKind::ConflictingOptions,
              "unknown method '" + std::string(text) + "' (expected baseline, eff_m4, eff_m5 or cv)");
}

std::string EstimateReport::method_label() const {
  std::string label(to_string(method));
  if (oracle) label += "_oracle";
  return label;
}

namespace {

Error at_row(const Error& err, std::size_t i) {
  return Error(err.kind(), "row " + std::to_string(i) + ": " + err.what());
}

void require_groups(const Dataset& data, EstimandKind kind) {
  if (data.n_rct() == 0) throw Error(ErrorKind::NoRctRows, "the dataset has no RCT rows");
  if (kind == EstimandKind::Obs && data.n_obs() == 0) {
    throw Error(ErrorKind::NoObsRows, "the observational estimand needs observational rows");
  }
}

void require_cover(const Dataset& data, const CrossFitBundle& bundle) {
  if (bundle.folds.size() != data.size() || bundle.models.size() != static_cast<std::size_t>(bundle.folds.k())) {
    throw Error(ErrorKind::DimensionMismatch, "cross-fit bundle does not match the dataset");
  }
}

// Each row's canonical gradient less its adjustment term.
std::vector<double> influence_values(const Dataset& data, std::span<const NuisanceAt> eta,
                                     const KernelContext& ctx, std::span<const double> g) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = phi0(data.s(i), data.z(i), data.y(i), eta[i], ctx) - (g.empty() ? 0.0 : g[i]);
  }
  return out;
}

// tau_hat = baseline - adjustment always holds exactly. When tau_hat and the
// adjustment can be chosen (within a few ulps) so that tau_hat + adjustment
// also reproduces the baseline, that choice is taken; it is impossible when
// both lie on a coarser binary grid than the baseline.
std::pair<double, double> exact_split(double baseline, double correction) {
  const double t0 = baseline - correction;
  double up = t0;
  double down = t0;
  for (int step = 0; step < 64; ++step) {
    for (double t : {up, down}) {
      const double a = baseline - t;
      if (t + a == baseline && baseline - a == t) return {t, a};
    }
    up = std::nextafter(up, std::numeric_limits<double>::infinity());
    down = std::nextafter(down, -std::numeric_limits<double>::infinity());
  }
  return {t0, correction};
}

EstimateReport finish_one_step(const Dataset& data, std::span<const NuisanceAt> eta, EstimandKind kind,
                               double rho, double tau_ba, std::span<const double> g, Method method,
                               bool per_obs) {
  EstimateReport r;
  r.kind = kind;
  r.method = method;
  r.baseline = tau_ba;
  double sum = 0.0;
  for (double v : g) sum += v;
  std::tie(r.tau_hat, r.adjustment) = exact_split(tau_ba, sum / static_cast<double>(data.size()));
  if (per_obs) r.per_obs = influence_values(data, eta, {kind, tau_ba, rho}, g);
  return r;
}

}  // namespace

double baseline_root(const Dataset& data, std::span<const NuisanceAt> eta, EstimandKind kind, double rho) {
  require_groups(data, kind);
  if (!(rho > kDegenerateTol && rho < 1.0 - kDegenerateTol)) {
    throw Error(ErrorKind::DegenerateSelection, "rho = " + format_double(rho));
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const NuisanceAt& n = eta[i];
    const int s = data.s(i);
    try {
      const double c = n.cate();
      switch (kind) {
        case EstimandKind::Rct:
          if (s == 1) {
            num += delta(data.z(i), data.y(i), n) + c;
            den += 1.0;
          }
          break;
        case EstimandKind::Obs:
          if (s == 1) {
            if (!(n.p > kDegenerateTol && n.p < 1.0 - kDegenerateTol)) {
              throw Error(ErrorKind::DegenerateSelection, "p = " + format_double(n.p));
            }
            num += (1.0 - n.p) / n.p * delta(data.z(i), data.y(i), n);
          } else {
            num += c;
            den += 1.0;
          }
          break;
        case EstimandKind::Tgt:
          if (s == 1) {
            if (!(n.p > kDegenerateTol && n.p < 1.0 - kDegenerateTol)) {
              throw Error(ErrorKind::DegenerateSelection, "p = " + format_double(n.p));
            }
            num += delta(data.z(i), data.y(i), n) / n.p;
          }
          num += c;
          den += 1.0;
          break;
      }
    } catch (const Error& err) {
      throw at_row(err, i);
    }
  }
  return num / den;
}

double mean_phi0(const Dataset& data, std::span<const NuisanceAt> eta, EstimandKind kind, double rho,
                 double tau) {
  const KernelContext ctx{kind, tau, rho};
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) sum += phi0(data.s(i), data.z(i), data.y(i), eta[i], ctx);
  return sum / static_cast<double>(data.size());
}

EstimateReport fit_baseline(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                            bool per_obs) {
  require_cover(data, bundle);
  const auto eta = evaluate_out_of_fold(data, bundle);
  EstimateReport r;
  r.kind = kind;
  r.method = Method::Baseline;
  r.tau_hat = baseline_root(data, eta, kind, bundle.rho);
  r.baseline = r.tau_hat;
  r.adjustment = 0.0;
  r.diagnostics.model = bundle.diagnostics();
  if (per_obs) r.per_obs = influence_values(data, eta, {kind, r.tau_hat, bundle.rho}, {});
  return r;
}

EstimateReport one_step_m4(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                           bool per_obs) {
  return one_step_m4(data, bundle, kind, bundle.psi, per_obs);
}

EstimateReport one_step_m4(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                           const FeatureMap& psi, bool per_obs) {
  require_cover(data, bundle);
  if (bundle.restriction != Restriction::M4) {
    throw Error(ErrorKind::RestrictionMismatch, "eff_m4 needs nuisances fitted under restriction m4, got " +
                                                    std::string(to_string(bundle.restriction)));
  }
  if (psi.empty() || psi.min_dim() > data.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "confounding basis does not fit the covariates");
  }
  const std::size_t n = data.size();
  const std::size_t q = psi.size();
  const double rho = bundle.rho;

  std::vector<double> psi_rows(n * q);
  for (std::size_t i = 0; i < n; ++i) psi.evaluate(data.x(i), std::span<double>(psi_rows).subspan(i * q, q));

  const auto oof = evaluate_out_of_fold(data, bundle);
  const double tau_ba = baseline_root(data, oof, kind, rho);

  EstimateDiagnostics diag;
  diag.model = bundle.diagnostics();
  std::vector<double> g(n, 0.0);
  const int k_folds = bundle.folds.k();
  const bool shared = bundle.shared_model();
  std::vector<NuisanceAt> eta_all;
  LambdaResult lambda;
  for (int k = 0; k < k_folds; ++k) {
    const NuisanceModel& model = *bundle.models[static_cast<std::size_t>(k)];
    if (k == 0 || !shared) {
      if (shared) {
        eta_all = oof;
      } else {
        eta_all.clear();
        eta_all.reserve(n);
        for (std::size_t i = 0; i < n; ++i) eta_all.push_back(model.at(data.x(i)));
      }
      try {
        lambda = lambda_solve(eta_all, psi_rows, q, {}, kind, rho);
      } catch (const Error& err) {
        throw Error(err.kind(), "fold " + std::to_string(k) + ": " + err.what());
      }
      if (lambda.ridge_used) ++diag.lambda_ridge;
    }
    for (std::size_t i : bundle.folds.members(k)) {
      const NuisanceAt& eta = oof[i];
      try {
        const int s = data.s(i), z = data.z(i);
        const double nu = nu_confounding(eta, kind, rho, lambda.lambda,
                                         std::span<const double>(psi_rows).subspan(i * q, q));
        g[i] = h_confounding(s, z, eta) * nu * (data.y(i) - eta.mean_at(s, z));
      } catch (const Error& err) {
        throw at_row(err, i);
      }
    }
  }
  auto r = finish_one_step(data, oof, kind, rho, tau_ba, g, Method::EffM4, per_obs);
  r.diagnostics = diag;
  return r;
}

EstimateReport one_step_m5(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                           bool per_obs) {
  require_cover(data, bundle);
  if (data.outcome_kind() != OutcomeKind::Binary) {
    throw Error(ErrorKind::NotBinaryOutcome, "eff_m5 needs a binary outcome");
  }
  if (bundle.restriction != Restriction::M5) {
    throw Error(ErrorKind::RestrictionMismatch, "eff_m5 needs nuisances fitted under restriction m5, got " +
                                                    std::string(to_string(bundle.restriction)));
  }
  const double rho = bundle.rho;
  const auto oof = evaluate_out_of_fold(data, bundle);
  const double tau_ba = baseline_root(data, oof, kind, rho);
  std::vector<double> g(data.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const NuisanceAt& eta = oof[i];
    try {
      const int s = data.s(i), z = data.z(i);
      g[i] = f_selection(s, z, eta) * zeta_selection(eta, kind, rho) * (data.y(i) - eta.mean_at(s, z));
    } catch (const Error& err) {
      throw at_row(err, i);
    }
  }
  auto r = finish_one_step(data, oof, kind, rho, tau_ba, g, Method::EffM5, per_obs);
  r.diagnostics.model = bundle.diagnostics();
  return r;
}

// ---------------------------------------------------------------------------

CvSpec CvSpec::discrete() {
  CvSpec cv;
  cv.probe = CvProbe::Discrete;
  cv.points = {{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}};
  return cv;
}

CvSpec CvSpec::continuous(const Dataset& data, std::size_t count, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  CvSpec cv;
  cv.probe = CvProbe::Continuous;
  std::set<std::vector<double>> seen;
  for (std::size_t i : order) {
    if (cv.points.size() == count) break;
    std::vector<double> x(data.x(i).begin(), data.x(i).end());
    if (seen.insert(x).second) cv.points.push_back(std::move(x));
  }
  if (cv.points.empty()) throw Error(ErrorKind::EmptyCells, "no probe points available");
  return cv;
}

namespace {

bool cell_is_empty(const NuisanceModel::Component& c, std::span<const double> x) {
  const auto* cm = dynamic_cast<const CellMeanRegressor*>(c.fn.get());
  return cm != nullptr && cm->trials(x) == 0;
}

double odds(double m) { return m / (1.0 - m); }

}  // namespace

CvStatistics cv_statistics(const NuisanceModel& model, const CvSpec& cv) {
  if (!model.m[cell(1, 1)]) {
    throw Error(ErrorKind::RestrictionMismatch, "control variate needs a freely fitted m11");
  }
  CvStatistics out;
  auto mean = [&](int s, int z, std::span<const double> x) { return model.m[cell(s, z)](x); };
  if (cv.probe == CvProbe::Discrete) {
    for (const auto& x : cv.points) {
      bool empty = false;
      for (const auto& c : model.m) empty = empty || cell_is_empty(c, x);
      if (empty) {
        ++out.empty_cells;
        out.lambda.push_back(0.0);
        continue;
      }
      const double or1 = odds(mean(1, 1, x)) / odds(mean(1, 0, x));
      const double or0 = odds(mean(0, 1, x)) / odds(mean(0, 0, x));
      out.lambda.push_back(or1 - or0);
    }
  } else {
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& x : cv.points) {
      const double l1 = logit(mean(1, 1, x)) - logit(mean(1, 0, x));
      const double l0 = logit(mean(0, 1, x)) - logit(mean(0, 0, x));
      const double v = l1 - l0;
      if (!std::isfinite(v)) {
        ++out.empty_cells;
        continue;
      }
      sum += v;
      ++used;
    }
    out.lambda.push_back(used == 0 ? 0.0 : sum / static_cast<double>(used));
  }
  return out;
}

CvStatistics cv_statistics(const Dataset& data, const CrossFitSpec& learners, const CvSpec& cv) {
  if (data.outcome_kind() != OutcomeKind::Binary) {
    throw Error(ErrorKind::NotBinaryOutcome, "the odds-ratio control variate needs a binary outcome");
  }
  CrossFitSpec free = learners;
  free.restriction = Restriction::None;
  return cv_statistics(fit_full_sample(data, free), cv);
}

Gamma estimate_gamma(std::span<const double> tau_ba, std::span<const std::vector<double>> lambda) {
  const std::size_t r = tau_ba.size();
  if (r < 2 || lambda.size() != r) {
    throw Error(ErrorKind::SingularCovariance, "need at least two replicate pairs");
  }
  const std::size_t dim = lambda.front().size();
  for (const auto& l : lambda) {
    if (l.size() != dim) throw Error(ErrorKind::DimensionMismatch, "lambda dimension varies across replicates");
  }
  const double n = static_cast<double>(r);
  const double tau_mean = std::accumulate(tau_ba.begin(), tau_ba.end(), 0.0) / n;
  std::vector<double> lmean(dim, 0.0);
  for (const auto& l : lambda)
    for (std::size_t a = 0; a < dim; ++a) lmean[a] += l[a] / n;

  std::vector<double> cov_ll(dim * dim, 0.0);
  std::vector<double> cov_lt(dim, 0.0);
  for (std::size_t j = 0; j < r; ++j) {
    const double dt = tau_ba[j] - tau_mean;
    for (std::size_t a = 0; a < dim; ++a) {
      const double da = lambda[j][a] - lmean[a];
      cov_lt[a] += da * dt / (n - 1.0);
      for (std::size_t b = 0; b < dim; ++b) cov_ll[a * dim + b] += da * (lambda[j][b] - lmean[b]) / (n - 1.0);
    }
  }
  auto solved = solve_symmetric(cov_ll, cov_lt, dim, ErrorKind::SingularCovariance);
  return {std::move(solved.solution), solved.ridge_used};
}

EstimateReport control_variate(const EstimateReport& baseline, const CvStatistics& stats,
                               const std::optional<Gamma>& gamma) {
  if (!gamma) throw Error(ErrorKind::MissingGamma, "the control variate needs an adjustment factor");
  if (gamma->row.size() != stats.lambda.size()) {
    throw Error(ErrorKind::DimensionMismatch, "gamma has " + std::to_string(gamma->row.size()) +
                                                  " entries, lambda has " + std::to_string(stats.lambda.size()));
  }
  double adj = 0.0;
  for (std::size_t a = 0; a < stats.lambda.size(); ++a) adj += gamma->row[a] * stats.lambda[a];
  EstimateReport r;
  r.kind = baseline.kind;
  r.method = Method::ControlVariate;
  r.oracle = baseline.oracle;
  r.baseline = baseline.tau_hat;
  std::tie(r.tau_hat, r.adjustment) = exact_split(r.baseline, adj);
  r.diagnostics = baseline.diagnostics;
  r.diagnostics.empty_cells = stats.empty_cells;
  if (gamma->ridge_used) ++r.diagnostics.gamma_ridge;
  return r;
}

EstimateReport control_variate(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                               const CrossFitSpec& learners, const CvSpec& cv,
                               const std::optional<Gamma>& gamma) {
  if (!gamma) throw Error(ErrorKind::MissingGamma, "the control variate needs an adjustment factor");
  return control_variate(fit_baseline(data, bundle, kind), cv_statistics(data, learners, cv), gamma);
}

Gamma bootstrap_gamma(const Dataset& data, const CrossFitSpec& learners, int k_folds, EstimandKind kind,
                      const CvSpec& cv, int boots, Rng& rng) {
  if (boots < 2) throw Error(ErrorKind::SingularCovariance, "need at least two bootstrap draws");
  std::vector<double> taus;
  std::vector<std::vector<double>> lambdas;
  std::vector<std::size_t> rows(data.size());
  for (int b = 0; b < boots; ++b) {
    for (auto& r : rows) r = static_cast<std::size_t>(rng.below(data.size()));
    const Dataset boot = data.subset(rows);
    const auto folds = make_folds(boot.size(), k_folds, rng);
    taus.push_back(fit_baseline(boot, cross_fit(boot, folds, learners), kind).tau_hat);
    lambdas.push_back(cv_statistics(boot, learners, cv).lambda);
  }
  return estimate_gamma(taus, lambdas);
}

}  // namespace fusionest

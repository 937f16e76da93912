#include "fusionest/learners.hpp"

#include <algorithm>
#include <cmath>

#include "fusionest/error.hpp"
#include "fusionest/linalg.hpp"

namespace fusionest {

double expit(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logit(double u) noexcept { return std::log(u) - std::log1p(-u); }

double RegressionTarget::response_of(const Dataset& data, std::size_t i) const {
  switch (response) {
    case Response::S: return data.s(i);
    case Response::Z: return data.z(i);
    case Response::Y: return data.y(i);
  }
  return 0.0;
}

std::string RegressionTarget::name() const {
  std::string out;
  switch (response) {
    case Response::S: out = "S"; break;
    case Response::Z: out = "Z"; break;
    case Response::Y: out = "Y"; break;
  }
  out += " | X";
  if (s) out += ", S=" + std::to_string(*s);
  if (z) out += ", Z=" + std::to_string(*z);
  return out;
}

std::vector<std::size_t> select_rows(const Dataset& data, std::span<const std::size_t> rows,
                                     const RegressionTarget& target) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (std::size_t i : rows)
    if (target.selects(data, i)) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t CellMeanRegressor::cell_key(std::span<const double> x) {
  if (x.size() > 63) {
    throw Error(ErrorKind::NonDiscreteCovariates, "cell-mean learner supports at most 63 covariates");
  }
  std::uint64_t key = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] == 1.0) {
      key |= std::uint64_t{1} << j;
    } else if (x[j] != 0.0) {
      throw Error(ErrorKind::NonDiscreteCovariates,
                  "covariate x" + std::to_string(j + 1) + "=" + format_double(x[j]) +
                      " is not binary; the cell-mean learner needs 0/1 covariates");
    }
  }
  return key;
}

CellMeanRegressor CellMeanRegressor::fit(const Dataset& data, std::span<const std::size_t> rows,
                                         const RegressionTarget& target) {
  CellMeanRegressor out;
  for (std::size_t i : rows) {
    if (!target.selects(data, i)) continue;
    Cell& c = out.cells_[cell_key(data.x(i))];
    ++c.trials;
    c.successes += target.response_of(data, i);
    ++out.n_train_;
  }
  return out;
}

double CellMeanRegressor::predict(std::span<const double> x) const {
  const auto it = cells_.find(cell_key(x));
  if (it == cells_.end()) return 0.5;
  return (it->second.successes + 1.0) / (static_cast<double>(it->second.trials) + 2.0);
}

std::uint64_t CellMeanRegressor::trials(std::span<const double> x) const {
  const auto it = cells_.find(cell_key(x));
  return it == cells_.end() ? 0 : it->second.trials;
}

// ---------------------------------------------------------------------------

double GlmRegressor::linear_predictor(std::span<const double> x) const {
  double eta = 0.0;
  const auto& terms = features_.terms();
  for (std::size_t k = 0; k < terms.size(); ++k) {
    double f = 1.0;
    for (std::size_t j : terms[k]) f *= x[j];
    eta += coef_[k] * f;
  }
  return eta;
}

double GlmRegressor::predict(std::span<const double> x) const {
  const double eta = linear_predictor(x);
  switch (link_) {
    case Link::Logit: return expit(eta);
    case Link::Identity: return eta;
    case Link::Log: return std::exp(eta);
  }
  return eta;
}

namespace {

constexpr double kMinWeight = 1e-12;

struct Design {
  std::vector<double> f;  // n x q row-major
  std::size_t q = 0;
  std::size_t n = 0;

  std::span<const double> row(std::size_t i) const { return {f.data() + i * q, q}; }
};

Design build_design(std::span<const double> x, std::size_t d, std::size_t n,
                    const FeatureMap& features) {
  if (features.min_dim() > d) {
    throw Error(ErrorKind::DimensionMismatch, "feature map '" + features.to_string() +
                                                  "' needs " + std::to_string(features.min_dim()) +
                                                  " covariates, data has " + std::to_string(d));
  }
  Design des;
  des.q = features.size();
  des.n = n;
  des.f.resize(n * des.q);
  for (std::size_t i = 0; i < n; ++i) {
    features.evaluate(x.subspan(i * d, d), {des.f.data() + i * des.q, des.q});
    for (std::size_t k = 0; k < des.q; ++k) {
      if (!std::isfinite(des.f[i * des.q + k])) {
        throw Error(ErrorKind::SingularDesign, "feature map produced a non-finite value");
      }
    }
  }
  return des;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

GlmRegressor fit_identity(const Design& des, std::span<const double> y, const FeatureMap& features) {
  NormalEquations ne(des.q);
  for (std::size_t i = 0; i < des.n; ++i) ne.add(des.row(i), 1.0, y[i]);
  auto sol = ne.solve(ErrorKind::SingularDesign);
  GlmRegressor out(features, Link::Identity, std::move(sol.solution));
  out.ridge_used = sol.ridge_used;
  out.iterations = 1;
  return out;
}

GlmRegressor fit_logit(const Design& des, std::span<const double> y, const FeatureMap& features,
                       const IrlsOptions& opt) {
  std::vector<double> beta(des.q, 0.0);
  bool converged = false;
  bool ridge = false;
  int iter = 0;
  for (; iter < opt.max_iter && !converged; ++iter) {
    NormalEquations ne(des.q);
    for (std::size_t i = 0; i < des.n; ++i) {
      const auto f = des.row(i);
      const double eta = dot(f, beta);
      const double mu = expit(eta);
      const double w = std::max(mu * (1.0 - mu), kMinWeight);
      ne.add(f, w, eta + (y[i] - mu) / w);
    }
    auto sol = ne.solve(ErrorKind::SingularDesign);
    ridge = ridge || sol.ridge_used;
    for (double b : sol.solution) {
      if (!std::isfinite(b)) throw Error(ErrorKind::SingularDesign, "IRLS diverged");
    }
    converged = max_abs_diff(sol.solution, beta) < opt.tol;
    beta = std::move(sol.solution);
  }
  GlmRegressor out(features, Link::Logit, std::move(beta));
  out.converged = converged;
  out.ridge_used = ridge;
  out.iterations = iter;
  return out;
}

// Negative gamma quasi-log-likelihood in mu, defined for y >= 0.
double gamma_objective(const Design& des, std::span<const double> y, const std::vector<double>& beta) {
  double obj = 0.0;
  for (std::size_t i = 0; i < des.n; ++i) {
    const double eta = dot(des.row(i), beta);
    obj += y[i] * std::exp(-eta) + eta;
  }
  return obj;
}

GlmRegressor fit_log(const Design& des, std::span<const double> y, const FeatureMap& features,
                     const IrlsOptions& opt) {
  double mean = 0.0;
  for (double v : y) {
    if (v < 0.0 || !std::isfinite(v)) {
      throw Error(ErrorKind::SingularDesign, "log-link GLM needs nonnegative responses");
    }
    mean += v;
  }
  mean /= static_cast<double>(des.n);
  // all-zero response: the fit degenerates to a tiny constant
  const double start = std::log(std::max(mean, 1e-300));

  std::vector<double> beta(des.q, 0.0);
  if (features.has_intercept()) {
    const auto& terms = features.terms();
    for (std::size_t k = 0; k < terms.size(); ++k)
      if (terms[k].empty()) { beta[k] = start; break; }
  } else {
    // no intercept: scale a least-squares fit of log(y + mean) as a start
    NormalEquations ne(des.q);
    for (std::size_t i = 0; i < des.n; ++i) ne.add(des.row(i), 1.0, std::log(y[i] + mean + 1e-300));
    beta = ne.solve(ErrorKind::SingularDesign).solution;
  }
  if (mean <= 0.0) {
    GlmRegressor out(features, Link::Log, std::move(beta));
    out.iterations = 0;
    return out;
  }

  bool converged = false;
  bool ridge = false;
  int iter = 0;
  double obj = gamma_objective(des, y, beta);
  for (; iter < opt.max_iter && !converged; ++iter) {
    NormalEquations ne(des.q);
    for (std::size_t i = 0; i < des.n; ++i) {
      const auto f = des.row(i);
      const double eta = dot(f, beta);
      const double mu = std::exp(eta);
      ne.add(f, 1.0, eta + (y[i] - mu) / mu);
    }
    auto sol = ne.solve(ErrorKind::SingularDesign);
    ridge = ridge || sol.ridge_used;
    std::vector<double> next = std::move(sol.solution);
    double next_obj = gamma_objective(des, y, next);
    for (int halving = 0; halving < 30 && !(next_obj <= obj); ++halving) {
      for (std::size_t k = 0; k < des.q; ++k) next[k] = 0.5 * (next[k] + beta[k]);
      next_obj = gamma_objective(des, y, next);
    }
    if (!std::isfinite(next_obj)) throw Error(ErrorKind::SingularDesign, "log-link GLM diverged");
    converged = max_abs_diff(next, beta) < opt.tol;
    beta = std::move(next);
    obj = next_obj;
  }
  GlmRegressor out(features, Link::Log, std::move(beta));
  out.converged = converged;
  out.ridge_used = ridge;
  out.iterations = iter;
  return out;
}

}  // namespace

GlmRegressor fit_glm(std::span<const double> x, std::size_t d, std::span<const double> y,
                     const FeatureMap& features, Link link, const IrlsOptions& options) {
  if (y.empty()) throw Error(ErrorKind::SingularDesign, "no training rows");
  if (x.size() != y.size() * d) throw Error(ErrorKind::DimensionMismatch, "design and response disagree");
  const Design des = build_design(x, d, y.size(), features);
  GlmRegressor out = [&] {
    switch (link) {
      case Link::Identity: return fit_identity(des, y, features);
      case Link::Logit: return fit_logit(des, y, features, options);
      case Link::Log: return fit_log(des, y, features, options);
    }
    return fit_identity(des, y, features);
  }();
  out.n_train = y.size();
  return out;
}

GlmRegressor fit_logistic_irls(const Dataset& data, std::span<const std::size_t> rows,
                               const RegressionTarget& target, const FeatureMap& features,
                               Link link, const IrlsOptions& options) {
  const auto selected = select_rows(data, rows, target);
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(selected.size() * data.dim());
  y.reserve(selected.size());
  for (std::size_t i : selected) {
    const auto xi = data.x(i);
    x.insert(x.end(), xi.begin(), xi.end());
    y.push_back(target.response_of(data, i));
  }
  if (y.empty()) {
    throw Error(ErrorKind::EmptyStratum, "no training rows for " + target.name());
  }
  return fit_glm(x, data.dim(), y, features, link, options);
}

}  // namespace fusionest

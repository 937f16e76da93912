#include "fusionest/influence.hpp"

#include <cmath>
#include <string>

#include "fusionest/error.hpp"
#include "fusionest/linalg.hpp"

namespace fusionest {

std::string_view to_string(EstimandKind kind) noexcept {
  switch (kind) {
    case EstimandKind::Rct: return "rct";
    case EstimandKind::Obs: return "obs";
    case EstimandKind::Tgt: return "tgt";
  }
  return "rct";
}

EstimandKind parse_estimand_kind(std::string_view text) {
  if (text == "rct") return EstimandKind::Rct;
  if (text == "obs") return EstimandKind::Obs;
  if (text == "tgt") return EstimandKind::Tgt;
  throw Error(ErrorKind::ConflictingOptions,
              "unknown estimand '" + std::string(text) + "' (expected rct, obs or tgt)");
}

namespace {

bool interior(double v) { return v > kDegenerateTol && v < 1.0 - kDegenerateTol; }

void need_propensity(double v, const char* name) {
  if (!interior(v)) {
    throw Error(ErrorKind::DegeneratePropensity, std::string(name) + " = " + format_double(v) +
                                                     " is not inside (0, 1)");
  }
}

void need_selection(double p) {
  if (!interior(p)) {
    throw Error(ErrorKind::DegenerateSelection, "p = " + format_double(p) + " is not inside (0, 1)");
  }
}

void need_rho(double rho) {
  if (!interior(rho)) {
    throw Error(ErrorKind::DegenerateSelection, "rho = " + format_double(rho) + " is not inside (0, 1)");
  }
}

void need_all(const NuisanceAt& eta) {
  need_selection(eta.p);
  need_propensity(eta.e, "e");
  need_propensity(eta.q, "q");
}

// Factor taking the Rct closed forms to the other estimands.
double kind_scale(const NuisanceAt& eta, EstimandKind kind, double rho) {
  switch (kind) {
    case EstimandKind::Rct: return 1.0;
    case EstimandKind::Obs: need_selection(eta.p); return rho * (1.0 - eta.p) / (eta.p * (1.0 - rho));
    case EstimandKind::Tgt: need_selection(eta.p); return rho / eta.p;
  }
  return 1.0;
}

}  // namespace

double delta(int z, double y, const NuisanceAt& eta) {
  need_propensity(eta.e, "e");
  if (z == 1) return (y - eta.m_sz(1, 1)) / eta.e;
  return -(y - eta.m_sz(1, 0)) / (1.0 - eta.e);
}

double phi0(int s, int z, double y, const NuisanceAt& eta, const KernelContext& ctx) {
  need_rho(ctx.rho);
  const double c = eta.cate() - ctx.tau;
  switch (ctx.kind) {
    case EstimandKind::Rct:
      if (s == 0) return 0.0;
      return (delta(z, y, eta) + c) / ctx.rho;
    case EstimandKind::Obs:
      if (s == 0) return c / (1.0 - ctx.rho);
      need_selection(eta.p);
      return (1.0 - eta.p) * delta(z, y, eta) / (eta.p * (1.0 - ctx.rho));
    case EstimandKind::Tgt:
      if (s == 0) return c;
      need_selection(eta.p);
      return delta(z, y, eta) / eta.p + c;
  }
  return 0.0;
}

double h_confounding(int s, int z, const NuisanceAt& eta) {
  need_all(eta);
  const double p = eta.p, e = eta.e, q = eta.q;
  if (s == 1) return z == 1 ? 1.0 / (p * e) : -1.0 / (p * (1.0 - e));
  return z == 1 ? -1.0 / ((1.0 - p) * q) : 1.0 / ((1.0 - p) * (1.0 - q));
}

double sigma_x(const NuisanceAt& eta) {
  need_all(eta);
  const double p = eta.p, e = eta.e, q = eta.q;
  const double pe = p * e;
  return eta.v_sz(1, 1) + eta.v_sz(1, 0) * e / (1.0 - e) + eta.v_sz(0, 1) * pe / ((1.0 - p) * q) +
         eta.v_sz(0, 0) * pe / ((1.0 - p) * (1.0 - q));
}

double i_conditional(const NuisanceAt& eta, EstimandKind kind, double rho) {
  need_rho(rho);
  need_propensity(eta.e, "e");
  const double base = (eta.v_sz(1, 1) / eta.e + eta.v_sz(1, 0) / (1.0 - eta.e)) / rho;
  return base * kind_scale(eta, kind, rho);
}

LambdaResult lambda_solve(std::span<const NuisanceAt> eta, std::span<const double> psi, std::size_t q,
                          std::span<const double> weights, EstimandKind kind, double rho) {
  if (q == 0 || psi.size() != eta.size() * q) {
    throw Error(ErrorKind::DimensionMismatch, "psi values do not match the evaluation points");
  }
  if (!weights.empty() && weights.size() != eta.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one weight per evaluation point required");
  }
  NormalEquations ne(q);
  for (std::size_t i = 0; i < eta.size(); ++i) {
    const NuisanceAt& n = eta[i];
    const double sigma = sigma_x(n);
    if (!(sigma > 0.0)) {
      throw Error(ErrorKind::ZeroSigma, "Sigma(x) = " + format_double(sigma) + " at point " +
                                            std::to_string(i));
    }
    const double w = (weights.empty() ? 1.0 : weights[i]) * n.p * n.e / sigma;
    // Accumulates G lambda = -b directly.
    ne.add(psi.subspan(i * q, q), w, -i_conditional(n, kind, rho));
  }
  auto solved = ne.solve(ErrorKind::SingularGram);
  return {std::move(solved.solution), solved.ridge_used};
}

double nu_confounding(const NuisanceAt& eta, EstimandKind kind, double rho,
                      std::span<const double> lambda, std::span<const double> psi) {
  if (lambda.size() != psi.size()) {
    throw Error(ErrorKind::DimensionMismatch, "lambda and psi differ in length");
  }
  const double sigma = sigma_x(eta);
  if (!(sigma > 0.0)) throw Error(ErrorKind::ZeroSigma, "Sigma(x) = " + format_double(sigma));
  double lp = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) lp += lambda[k] * psi[k];
  return eta.p * eta.e * (i_conditional(eta, kind, rho) + lp) / sigma;
}

double dlogit(double u) {
  if (!interior(u)) {
    throw Error(ErrorKind::MeanOnBoundary, "outcome mean " + format_double(u) + " is not inside (0, 1)");
  }
  return 1.0 / (u * (1.0 - u));
}

double f_selection(int s, int z, const NuisanceAt& eta) {
  need_all(eta);
  const double p = eta.p, e = eta.e, q = eta.q;
  const double pe = p * e;
  if (s == 1) {
    if (z == 1) return dlogit(eta.m_sz(1, 1));
    return -e * dlogit(eta.m_sz(1, 0)) / (1.0 - e);
  }
  if (z == 1) return -pe * dlogit(eta.m_sz(0, 1)) / ((1.0 - p) * q);
  return pe * dlogit(eta.m_sz(0, 0)) / ((1.0 - p) * (1.0 - q));
}

double d_selection(const NuisanceAt& eta) {
  need_all(eta);
  const double p = eta.p, e = eta.e, q = eta.q;
  const double pe = p * e;
  const double mult[4] = {pe / ((1.0 - p) * (1.0 - q)), pe / ((1.0 - p) * q), e / (1.0 - e), 1.0};
  double d = 0.0;
  for (int s = 0; s <= 1; ++s) {
    for (int z = 0; z <= 1; ++z) {
      const auto c = cell(s, z);
      const double l = dlogit(eta.m[c]);
      d += mult[c] * eta.v[c] * l * l;
    }
  }
  return d;
}

double zeta_selection(const NuisanceAt& eta, EstimandKind kind, double rho) {
  need_rho(rho);
  const double d = d_selection(eta);
  if (!(d > 0.0)) throw Error(ErrorKind::ZeroD, "D(x) = " + format_double(d));
  const double e = eta.e;
  const double num = dlogit(eta.m_sz(1, 1)) * eta.v_sz(1, 1) +
                     dlogit(eta.m_sz(1, 0)) * e * eta.v_sz(1, 0) / (1.0 - e);
  return num / (rho * e * d) * kind_scale(eta, kind, rho);
}

}  // namespace fusionest

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "fusionest/nuisance.hpp"

namespace fusionest {

enum class EstimandKind { Rct, Obs, Tgt };

std::string_view to_string(EstimandKind kind) noexcept;
EstimandKind parse_estimand_kind(std::string_view text);
inline constexpr EstimandKind kAllKinds[] = {EstimandKind::Rct, EstimandKind::Obs, EstimandKind::Tgt};

struct KernelContext {
  EstimandKind kind = EstimandKind::Rct;
  double tau = 0.0;
  double rho = 0.5;
};

// Probabilities closer than this to 0 or 1 are treated as degenerate.
inline constexpr double kDegenerateTol = 1e-12;

/// z(y - m11)/e - (1 - z)(y - m10)/(1 - e)
double delta(int z, double y, const NuisanceAt& eta);

/// Canonical gradient of the chosen estimand at one observation.
double phi0(int s, int z, double y, const NuisanceAt& eta, const KernelContext& ctx);

// Linear confounding bias kernels.
double h_confounding(int s, int z, const NuisanceAt& eta);
double sigma_x(const NuisanceAt& eta);
double i_conditional(const NuisanceAt& eta, EstimandKind kind, double rho);

struct LambdaResult {
  std::vector<double> lambda;
  bool ridge_used = false;
};

/// lambda = -G^{-1} avg[I pe/Sigma psi] with G = avg[pe/Sigma psi psi^T].
/// `psi` is row-major, one row of `q` basis values per point; `weights`
/// may be empty (uniform).
LambdaResult lambda_solve(std::span<const NuisanceAt> eta, std::span<const double> psi, std::size_t q,
                          std::span<const double> weights, EstimandKind kind, double rho);

/// p e (I + lambda^T psi) / Sigma
double nu_confounding(const NuisanceAt& eta, EstimandKind kind, double rho,
                      std::span<const double> lambda, std::span<const double> psi);

// Outcome-mediated selection kernels (binary outcome).
double dlogit(double u);
double f_selection(int s, int z, const NuisanceAt& eta);
double d_selection(const NuisanceAt& eta);
double zeta_selection(const NuisanceAt& eta, EstimandKind kind, double rho);

}  // namespace fusionest

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusionest/dataset.hpp"
#include "fusionest/influence.hpp"
#include "fusionest/nuisance.hpp"
#include "fusionest/rng.hpp"

namespace fusionest {

enum class Method { Baseline, EffM4, EffM5, ControlVariate };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view text);

struct EstimateDiagnostics {
  ModelDiagnostics model;
  int lambda_ridge = 0;
  int empty_cells = 0;
  int gamma_ridge = 0;
};

struct EstimateReport {
  EstimandKind kind = EstimandKind::Rct;
  Method method = Method::Baseline;
  bool oracle = false;
  double tau_hat = 0.0;
  double baseline = 0.0;    // the initial AIP(S)W estimate
  double adjustment = 0.0;  // baseline - tau_hat; 0 for the baseline itself
  std::optional<std::vector<double>> per_obs;
  EstimateDiagnostics diagnostics;

  std::string method_label() const;
};

/// Cross-fit AIP(S)W estimate. With `per_obs`, also returns the estimated
/// canonical gradient at each row.
EstimateReport fit_baseline(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                            bool per_obs = false);

/// Closed-form root of the baseline estimating equation given each row's nuisances.
double baseline_root(const Dataset& data, std::span<const NuisanceAt> eta, EstimandKind kind, double rho);

/// Mean of phi0 over the rows at a given tau.
double mean_phi0(const Dataset& data, std::span<const NuisanceAt> eta, EstimandKind kind, double rho,
                 double tau);

/// One-step estimator under the linear confounding bias restriction.
/// lambda is solved once per fold over every row, using that fold's models.
EstimateReport one_step_m4(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                           bool per_obs = false);
EstimateReport one_step_m4(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                           const FeatureMap& psi, bool per_obs = false);

/// One-step estimator under the odds-ratio (outcome-mediated selection) restriction.
EstimateReport one_step_m5(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                           bool per_obs = false);

// ---------------------------------------------------------------------------
// Control variate

enum class CvProbe { Discrete, Continuous };

struct CvSpec {
  CvProbe probe = CvProbe::Discrete;
  /// Continuous probe: covariate rows at which log OR1 - log OR0 is averaged.
  std::vector<std::vector<double>> points;

  /// The four binary cells of a two-covariate design.
  static CvSpec discrete();
  /// `count` distinct covariate rows of `data`, sampled without replacement.
  static CvSpec continuous(const Dataset& data, std::size_t count, Rng& rng);
  std::size_t dim() const { return probe == CvProbe::Discrete ? 4 : 1; }
};

struct CvStatistics {
  std::vector<double> lambda;
  int empty_cells = 0;
};

/// Odds-ratio contrasts of a model fitted on the whole sample without
/// cross-fitting and without enforcing the restriction. Zero under M5.
CvStatistics cv_statistics(const NuisanceModel& full_model, const CvSpec& cv);
CvStatistics cv_statistics(const Dataset& data, const CrossFitSpec& learners, const CvSpec& cv);

struct Gamma {
  std::vector<double> row;  // 1 x dim(lambda)
  bool ridge_used = false;
};

/// cov(tau, lambda) cov(lambda)^{-1} from replicate pairs.
Gamma estimate_gamma(std::span<const double> tau_ba, std::span<const std::vector<double>> lambda);

/// tau_ba - Gamma lambda. Throws MissingGamma when gamma is absent.
EstimateReport control_variate(const EstimateReport& baseline, const CvStatistics& stats,
                               const std::optional<Gamma>& gamma);
EstimateReport control_variate(const Dataset& data, const CrossFitBundle& bundle, EstimandKind kind,
                               const CrossFitSpec& learners, const CvSpec& cv,
                               const std::optional<Gamma>& gamma);

/// Per-dataset alternative: Gamma from B row bootstraps of this dataset.
Gamma bootstrap_gamma(const Dataset& data, const CrossFitSpec& learners, int k_folds, EstimandKind kind,
                      const CvSpec& cv, int boots, Rng& rng);

}  // namespace fusionest

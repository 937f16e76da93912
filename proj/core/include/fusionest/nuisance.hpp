#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusionest/dataset.hpp"
#include "fusionest/features.hpp"
#include "fusionest/learners.hpp"

namespace fusionest {

/// Index of the (s, z) cell in the 4-arrays of NuisanceAt: 00, 01, 10, 11.
constexpr std::size_t cell(int s, int z) noexcept { return static_cast<std::size_t>(2 * s + z); }

/// All nuisance values at one covariate point.
struct NuisanceAt {
  double p = 0.5;  // P(S=1 | X=x)
  double e = 0.5;  // P(Z=1 | S=1, X=x)
  double q = 0.5;  // P(Z=1 | S=0, X=x)
  std::array<double, 4> m{};  // E[Y | S=s, Z=z, X=x], indexed by cell(s, z)
  std::array<double, 4> v{};  // Var(Y | S=s, Z=z, X=x)

  double m_sz(int s, int z) const { return m[cell(s, z)]; }
  double v_sz(int s, int z) const { return v[cell(s, z)]; }
  /// Outcome mean at the observed (s, z).
  double mean_at(int s, int z) const { return m[cell(s, z)]; }
  double cate() const { return m[cell(1, 1)] - m[cell(1, 0)]; }
};

enum class Restriction { None, M4, M5 };

std::string_view to_string(Restriction r) noexcept;
Restriction parse_restriction(std::string_view text);

/// Closed probability band applied to a fitted component.
struct Band {
  double lo = 0.0;
  double hi = 1.0;
  double apply(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
};

/// [1/sqrt(n), 1 - 1/sqrt(n)]; collapses to {1/2} when n < 4.
Band truncation_band(std::size_t n_train);
double truncate_probability(double value, std::size_t n_train);

struct ModelDiagnostics {
  int irls_not_converged = 0;
  int ridge_fallbacks = 0;
  int empty_strata = 0;
  int pooled_variance_fits = 0;

  ModelDiagnostics& operator+=(const ModelDiagnostics& o) {
    irls_not_converged += o.irls_not_converged;
    ridge_fallbacks += o.ridge_fallbacks;
    empty_strata += o.empty_strata;
    pooled_variance_fits += o.pooled_variance_fits;
    return *this;
  }
};

/// Fitted (or analytic) nuisance functions. Evaluation is pure.
///
/// How m11 is produced depends on `restriction`:
///   None: its own regressor (`m[cell(1,1)]`)
///   M5:   expit(logit m10 + logit m01 - logit m00)
///   M4:   m10 + m01 - m00 + psi(x)^T theta
/// Variances come from `v` regressors when present; for a binary outcome
/// they are always m(1 - m).
class NuisanceModel {
 public:
  struct Component {
    RegressorPtr fn;
    std::optional<Band> band;

    double operator()(std::span<const double> x) const {
      const double v = fn->predict(x);
      return band ? band->apply(v) : v;
    }
    explicit operator bool() const noexcept { return static_cast<bool>(fn); }
  };

  Component p;
  Component e;
  Component q;
  std::array<Component, 4> m;
  std::array<RegressorPtr, 4> v;

  double rho = 0.5;
  OutcomeKind outcome_kind = OutcomeKind::Binary;
  Restriction restriction = Restriction::None;
  std::vector<double> theta;
  FeatureMap psi;

  ModelDiagnostics diagnostics;
  std::string description;
  /// FNV-1a hash of the training row indices (0 for analytic models).
  std::uint64_t training_hash = 0;

  NuisanceAt at(std::span<const double> x) const;
};

using NuisanceModelPtr = std::shared_ptr<const NuisanceModel>;

/// Overwrites m11 with the logit identity. Requires a binary outcome.
NuisanceModel enforce_m5(NuisanceModel draft);
/// Overwrites m11 with the additive identity m10 + m01 - m00 + psi^T theta.
NuisanceModel enforce_m4(NuisanceModel draft, std::vector<double> theta, FeatureMap psi);

// ---------------------------------------------------------------------------
// Learner configuration

struct LearnerSpec {
  enum class Kind { CellMean, Irls, Oracle, Known };

  Kind kind = Kind::CellMean;
  int degree = 1;      // Irls feature degree
  double value = 0.5;  // Known constant

  static LearnerSpec cell_mean() { return {Kind::CellMean, 1, 0.5}; }
  static LearnerSpec irls(int degree) { return {Kind::Irls, degree, 0.5}; }
  static LearnerSpec oracle() { return {Kind::Oracle, 1, 0.5}; }
  static LearnerSpec known(double v) { return {Kind::Known, 1, v}; }

  /// cell_mean | irls:<degree> | oracle | known:<value>
  static LearnerSpec parse(std::string_view text);
  std::string to_string() const;

  bool operator==(const LearnerSpec&) const = default;
};

struct CrossFitSpec {
  LearnerSpec p = LearnerSpec::cell_mean();
  LearnerSpec e = LearnerSpec::cell_mean();
  LearnerSpec q = LearnerSpec::cell_mean();
  LearnerSpec m = LearnerSpec::cell_mean();
  Restriction restriction = Restriction::None;
  /// Confounding basis for M4.
  FeatureMap psi;
  /// Covariate map of the variance GLM; defaults to psi, or intercept plus
  /// linear terms when psi is empty.
  std::optional<FeatureMap> psi_variance;
  /// Source for every Oracle learner.
  NuisanceModelPtr oracle;
  IrlsOptions irls;
};

struct CrossFitBundle {
  FoldAssignment folds;
  std::vector<NuisanceModelPtr> models;  // models[k] trained outside fold k
  double rho = 0.5;
  Restriction restriction = Restriction::None;
  std::vector<double> theta;
  FeatureMap psi;
  std::vector<std::uint64_t> training_hash;

  /// True when every fold shares one model object (the oracle bypass).
  bool shared_model() const;
  const NuisanceModel& model_for_row(std::size_t i) const {
    return *models[static_cast<std::size_t>(folds.fold_of(i))];
  }
  ModelDiagnostics diagnostics() const;
};

/// Hash of a sorted index set, recorded per fold for auditing.
std::uint64_t hash_indices(std::span<const std::size_t> rows);

/// Fits one learner on `rows` for `target`, with the fold's truncation
/// policy. Exposed for testing; cross_fit is the usual entry point.
NuisanceModel::Component fit_component(const Dataset& data, std::span<const std::size_t> rows,
                                       const RegressionTarget& target, const LearnerSpec& learner,
                                       bool probability, const NuisanceModel::Component* oracle,
                                       const IrlsOptions& irls, ModelDiagnostics& diag);

/// Least-squares confounding coefficients over RCT rows, with regression target
///   Y [Z/e - (1-Z)/(1-e)] - (m01(X) - m00(X))
/// using each row's out-of-fold m01, m00. `e_star` is the known constant RCT
/// propensity; when absent each row's out-of-fold e(X) is used instead.
std::vector<double> theta_wls(const Dataset& data, const FoldAssignment& folds,
                              std::span<const NuisanceModelPtr> drafts, const FeatureMap& psi,
                              std::optional<double> e_star);

/// Per-(s,z) log-link GLMs of squared cross-fit residuals on psi_v(x), fitted
/// on `train`. `residual_sq[i]` must hold (Y_i - m^(-k(i))(R_i))^2 for every row.
/// A cell with no training rows uses the pooled fit (flagged in `diag`).
std::array<RegressorPtr, 4> fit_variance_glm(const Dataset& data, std::span<const std::size_t> train,
                                             std::span<const double> residual_sq,
                                             const FeatureMap& psi_v, const IrlsOptions& irls,
                                             ModelDiagnostics& diag);

CrossFitBundle cross_fit(const Dataset& data, const FoldAssignment& folds, const CrossFitSpec& spec);

/// One model fitted on every row (no cross-fitting), restriction None, so the
/// four outcome means are estimated freely.
NuisanceModel fit_full_sample(const Dataset& data, const CrossFitSpec& spec);

/// Out-of-fold nuisance values at every row.
std::vector<NuisanceAt> evaluate_out_of_fold(const Dataset& data, const CrossFitBundle& bundle);

}  // namespace fusionest

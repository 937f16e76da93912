#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusionest/dataset.hpp"
#include "fusionest/estimators.hpp"
#include "fusionest/influence.hpp"
#include "fusionest/nuisance.hpp"
#include "fusionest/rng.hpp"

namespace fusionest {

enum class ScenarioKind { Discrete, Continuous, M4Synthetic };

std::string_view to_string(ScenarioKind kind) noexcept;
ScenarioKind parse_scenario_kind(std::string_view text);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::Discrete;
  std::size_t n_rct = 3000;
  std::size_t m_obs = 3000;
  double case_keep = 0.9;
  double control_keep = 0.1;
  std::uint64_t seed = 7;
  /// m4_synthetic only: constant outcome variances.
  bool homoskedastic = false;

  void validate() const;
  double rho() const { return static_cast<double>(n_rct) / static_cast<double>(n_rct + m_obs); }
  OutcomeKind outcome_kind() const {
    return kind == ScenarioKind::M4Synthetic ? OutcomeKind::Continuous : OutcomeKind::Binary;
  }
  /// The structural restriction the scenario satisfies.
  Restriction restriction() const {
    return kind == ScenarioKind::M4Synthetic ? Restriction::M4 : Restriction::M5;
  }
};

// ---------------------------------------------------------------------------
// Data generating processes

/// Treatment probability expit(x1 - x2), shared by the discrete and continuous designs.
double logistic_treatment(std::span<const double> x);
/// P(Y=1 | S=1, Z=z, X=x) for the discrete (no interaction) or continuous design.
double logistic_outcome(int z, std::span<const double> x, bool interaction);

/// Parameters of the synthetic linear-confounding design.
struct M4Design {
  static constexpr double e = 0.5;
  static constexpr std::array<double, 3> theta = {0.5, -0.3, 0.2};  // on psi = (1, x1, x2)
  /// Observational covariate density is (1 + tilt * x1) / 4 on [-1, 1]^2.
  static constexpr double tilt = 0.5;

  static double cate(std::span<const double> x);
  static double confounding(std::span<const double> x);
  static double mean(int s, int z, std::span<const double> x);
  static double variance(int s, int z, std::span<const double> x, bool homoskedastic);
  static double obs_propensity(std::span<const double> x);
  static FeatureMap psi();
};

/// Keeps each row with probability case_keep when y = 1, control_keep otherwise.
std::vector<std::size_t> apply_selection(std::span<const double> y, double case_keep, double control_keep,
                                         Rng& rng);

Dataset gen_discrete(const ScenarioSpec& spec, Rng& rng);
Dataset gen_continuous(const ScenarioSpec& spec, Rng& rng);
Dataset gen_m4_synthetic(const ScenarioSpec& spec, Rng& rng);
Dataset generate(const ScenarioSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Oracle quantities

/// True nuisance functions of the scenario, with rho fixed at n_rct / N.
NuisanceModelPtr oracle_nuisances(const ScenarioSpec& spec);

struct TrueTaus {
  double rct = 0.0;
  double obs = 0.0;
  double tgt = 0.0;
  double of(EstimandKind kind) const;
};

TrueTaus true_taus(const ScenarioSpec& spec);

struct SupportPoint {
  std::array<double, 2> x{};
  int s = 0;
  int z = 0;
  int y = 0;
  double prob = 0.0;
};

struct Population {
  std::vector<SupportPoint> points;
  TrueTaus tau;
  double rho = 0.5;
  NuisanceModelPtr eta;

  /// Sum over the support of prob * f(point).
  double expect(const std::function<double(const SupportPoint&)>& f) const;
  /// Marginal probability of covariate cell x under the fused law.
  double x_prob(std::span<const double> x) const;
};

/// Exact fused-data law of the discrete scenario on its 32 support points.
Population enumerate_population(const ScenarioSpec& spec);

// ---------------------------------------------------------------------------
// Monte Carlo harness

enum class Variant { Feasible, Oracle };
std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view text);

struct BenchmarkConfig {
  ScenarioSpec scenario;
  std::vector<Method> methods = {Method::Baseline};
  std::vector<EstimandKind> kinds = {EstimandKind::Rct, EstimandKind::Obs, EstimandKind::Tgt};
  std::vector<Variant> variants = {Variant::Feasible, Variant::Oracle};
  int replicates = 1000;
  int boot = 1000;
  int jobs = 1;
  int k_folds = 5;
  /// Replicates used to estimate the control-variate factor; defaults to `replicates`.
  std::optional<int> calibration_replicates;
  /// When positive, Gamma comes from this many row bootstraps of each dataset instead.
  int cv_bootstrap = 0;
  std::size_t cv_points = 50;
  /// Feasible learners; scenario defaults when absent.
  std::optional<CrossFitSpec> learners;
  /// Called after each finished replicate with the number done so far.
  std::function<void(int, int)> progress;

  void validate() const;
};

/// Learners used by the feasible variant of a scenario.
CrossFitSpec default_learners(const ScenarioSpec& spec);

struct ReplicateRow {
  int replicate = 0;
  Variant variant = Variant::Feasible;
  Method method = Method::Baseline;
  EstimandKind kind = EstimandKind::Rct;
  bool ok = false;
  double tau_hat = 0.0;
  double baseline = 0.0;
  double adjustment = 0.0;
  std::string error;
};

struct SummaryRow {
  Variant variant = Variant::Feasible;
  Method method = Method::Baseline;
  EstimandKind kind = EstimandKind::Rct;
  double true_tau = 0.0;
  double mse = 0.0;
  double re = 1.0;
  double ci_lo = 1.0;
  double ci_hi = 1.0;
  int n_ok = 0;
  int n_fail = 0;
};

struct BenchmarkResult {
  ScenarioSpec scenario;
  TrueTaus tau;
  std::vector<ReplicateRow> rows;  // sorted by replicate, variant, kind, method
  std::vector<SummaryRow> summary;
  /// Rows where baseline - adjustment != tau_hat in floating point.
  int difference_violations = 0;
  /// Rows where tau_hat + adjustment != baseline in floating point.
  int sum_violations = 0;

  /// Estimates of one (variant, method, kind), NaN where the replicate failed.
  std::vector<double> estimates(Variant v, Method m, EstimandKind k) const;
  const SummaryRow* find(Variant v, Method m, EstimandKind k) const;
};

BenchmarkResult run_benchmark(const BenchmarkConfig& config);

/// Percentile bootstrap interval of MSE(a)/MSE(b), resampling replicate
/// indices jointly. `err_*` are estimation errors; NaN entries are dropped pairwise.
struct RatioInterval {
  double ratio = 1.0;
  double lo = 1.0;
  double hi = 1.0;
};
RatioInterval mse_ratio_interval(std::span<const double> err_a, std::span<const double> err_b, int boot,
                                 std::uint64_t seed, double level = 0.95);

/// Quantile with linear interpolation between order statistics of a sorted sample.
double sorted_quantile(std::span<const double> sorted, double prob);

Table replicate_table(const BenchmarkResult& result);
Table summary_table(const BenchmarkResult& result);

}  // namespace fusionest

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fusionest/dataset.hpp"
#include "fusionest/features.hpp"

namespace fusionest {

/// Which column is regressed, and on which (s, z) sub-population.
struct RegressionTarget {
  enum class Response { S, Z, Y };

  Response response = Response::Y;
  std::optional<int> s;
  std::optional<int> z;

  static RegressionTarget selection() { return {Response::S, std::nullopt, std::nullopt}; }
  static RegressionTarget rct_propensity() { return {Response::Z, 1, std::nullopt}; }
  static RegressionTarget obs_propensity() { return {Response::Z, 0, std::nullopt}; }
  static RegressionTarget outcome(int s, int z) { return {Response::Y, s, z}; }

  /// Same response with the row filter dropped.
  RegressionTarget pooled() const { return {response, std::nullopt, std::nullopt}; }

  bool selects(const Dataset& data, std::size_t i) const {
    return (!s || data.s(i) == *s) && (!z || data.z(i) == *z);
  }
  double response_of(const Dataset& data, std::size_t i) const;
  std::string name() const;
};

/// Rows of `rows` that fall in the target's sub-population.
std::vector<std::size_t> select_rows(const Dataset& data, std::span<const std::size_t> rows,
                                     const RegressionTarget& target);

class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual double predict(std::span<const double> x) const = 0;
};

using RegressorPtr = std::shared_ptr<const Regressor>;

class ConstantRegressor final : public Regressor {
 public:
  explicit ConstantRegressor(double value) : value_(value) {}
  double predict(std::span<const double>) const override { return value_; }
  double value() const noexcept { return value_; }

 private:
  double value_;
};

class FunctionRegressor final : public Regressor {
 public:
  explicit FunctionRegressor(std::function<double(std::span<const double>)> fn)
      : fn_(std::move(fn)) {}
  double predict(std::span<const double> x) const override { return fn_(x); }

 private:
  std::function<double(std::span<const double>)> fn_;
};

/// Per-cell smoothed frequency for binary covariates:
/// (successes + 1) / (trials + 2), and 1/2 for cells never seen.
class CellMeanRegressor final : public Regressor {
 public:
  struct Cell {
    std::uint64_t trials = 0;
    double successes = 0.0;
  };

  static CellMeanRegressor fit(const Dataset& data, std::span<const std::size_t> rows,
                               const RegressionTarget& target);

  double predict(std::span<const double> x) const override;
  /// Number of training rows in the cell of `x`.
  std::uint64_t trials(std::span<const double> x) const;
  std::size_t n_train() const noexcept { return n_train_; }

  /// Bit-packed key of a binary covariate vector; throws NonDiscreteCovariates.
  static std::uint64_t cell_key(std::span<const double> x);

 private:
  std::unordered_map<std::uint64_t, Cell> cells_;
  std::size_t n_train_ = 0;
};

enum class Link { Logit, Identity, Log };

struct IrlsOptions {
  int max_iter = 50;
  double tol = 1e-8;
};

/// Generalized linear predictor g^{-1}(psi(x)^T beta).
class GlmRegressor final : public Regressor {
 public:
  GlmRegressor(FeatureMap features, Link link, std::vector<double> coef)
      : features_(std::move(features)), link_(link), coef_(std::move(coef)) {}

  double predict(std::span<const double> x) const override;
  double linear_predictor(std::span<const double> x) const;

  const std::vector<double>& coefficients() const noexcept { return coef_; }
  const FeatureMap& features() const noexcept { return features_; }
  Link link() const noexcept { return link_; }

  bool converged = true;
  bool ridge_used = false;
  int iterations = 0;
  std::size_t n_train = 0;

 private:
  FeatureMap features_;
  Link link_;
  std::vector<double> coef_;
};

/// IRLS for the logit link; the identity link reduces to ordinary least
/// squares in one step. Non-convergence after max_iter is flagged on the
/// result, not thrown.
GlmRegressor fit_logistic_irls(const Dataset& data, std::span<const std::size_t> rows,
                               const RegressionTarget& target, const FeatureMap& features,
                               Link link, const IrlsOptions& options = {});

/// Same fit on an explicit design. `x` is row-major with `d` columns and one
/// row per response. The log link uses gamma-family working weights (all 1)
/// with step halving on the gamma quasi-likelihood.
GlmRegressor fit_glm(std::span<const double> x, std::size_t d, std::span<const double> y,
                     const FeatureMap& features, Link link, const IrlsOptions& options = {});

double expit(double t) noexcept;
double logit(double u) noexcept;

}  // namespace fusionest

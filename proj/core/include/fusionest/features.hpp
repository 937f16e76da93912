#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fusionest {

/// A basis expansion x -> (psi_1(x), ..., psi_q(x)) where every term is a
/// product of covariates (the empty product is the intercept).
class FeatureMap {
 public:
  /// Each term lists 0-based covariate indices; repeats give powers.
  using Term = std::vector<std::size_t>;

  FeatureMap() = default;
  explicit FeatureMap(std::vector<Term> terms);

  static FeatureMap intercept_only();
  /// Intercept plus every monomial of total degree 1..degree in d covariates.
  static FeatureMap polynomial(std::size_t d, int degree);
  /// Parses "intercept,x1,x2,x1*x2,x1^2". Covariate names are 1-based.
  static FeatureMap parse(std::string_view spec);

  std::size_t size() const noexcept { return terms_.size(); }
  bool empty() const noexcept { return terms_.empty(); }
  bool has_intercept() const noexcept;
  /// Largest covariate index referenced plus one (0 for intercept-only).
  std::size_t min_dim() const noexcept;

  void evaluate(std::span<const double> x, std::span<double> out) const;
  std::vector<double> operator()(std::span<const double> x) const;

  std::string to_string() const;
  const std::vector<Term>& terms() const noexcept { return terms_; }

  bool operator==(const FeatureMap&) const = default;

 private:
  std::vector<Term> terms_;
};

}  // namespace fusionest

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fusionest/error.hpp"

namespace fusionest {

/// Condition-number threshold above which a ridge term is added.
inline constexpr double kRidgeConditionLimit = 1e12;
/// Ridge magnitude relative to trace(G)/dim.
inline constexpr double kRidgeScale = 1e-8;

struct LinearSolve {
  std::vector<double> solution;
  bool ridge_used = false;
};

/// Solves G b = r for a symmetric positive semi-definite q x q matrix G
/// (row-major). When the reciprocal condition estimate of G falls below
/// 1/kRidgeConditionLimit, kRidgeScale * trace(G)/q is added to the diagonal
/// and the system is solved again; if that still fails `on_singular` is thrown.
LinearSolve solve_symmetric(std::span<const double> gram, std::span<const double> rhs,
                            std::size_t q, ErrorKind on_singular);

/// Accumulates weighted Gram matrix and moment vector for least squares.
class NormalEquations {
 public:
  explicit NormalEquations(std::size_t q) : q_(q), gram_(q * q, 0.0), rhs_(q, 0.0) {}

  /// Adds weight * f f^T to the Gram matrix and weight * response * f to the moment.
  void add(std::span<const double> f, double weight, double response);

  std::size_t dim() const noexcept { return q_; }
  /// Full symmetric Gram matrix, row-major.
  std::vector<double> gram() const;
  std::span<const double> rhs() const noexcept { return rhs_; }

  LinearSolve solve(ErrorKind on_singular) const {
    return solve_symmetric(gram(), rhs_, q_, on_singular);
  }

 private:
  std::size_t q_;
  std::vector<double> gram_;  // lower triangle only
  std::vector<double> rhs_;
};

}  // namespace fusionest

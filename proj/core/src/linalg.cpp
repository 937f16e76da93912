#include "fusionest/linalg.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace fusionest {

namespace {

bool try_solve(const Eigen::MatrixXd& g, const Eigen::VectorXd& r, Eigen::VectorXd& out) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  // LDLT::solve silently skips zero pivots, so rcond alone does not catch exact singularity
  const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
  if (!(d.minCoeff() * kRidgeConditionLimit > d.maxCoeff())) return false;
  const double rcond = ldlt.rcond();
  if (!(rcond >= 1.0 / kRidgeConditionLimit)) return false;
  out = ldlt.solve(r);
  return out.allFinite();
}

}  // namespace

LinearSolve solve_symmetric(std::span<const double> gram, std::span<const double> rhs,
                            std::size_t q, ErrorKind on_singular) {
  if (gram.size() != q * q || rhs.size() != q) {
    throw Error(ErrorKind::DimensionMismatch, "normal equations of inconsistent size");
  }
  if (q == 0) return {};
  const auto n = static_cast<Eigen::Index>(q);
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = gram[static_cast<std::size_t>(i * n + j)];
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = rhs[static_cast<std::size_t>(i)];
  if (!g.allFinite() || !r.allFinite()) {
    throw Error(on_singular, "non-finite entries in normal equations");
  }

  Eigen::VectorXd b;
  LinearSolve out;
  if (!try_solve(g, r, b)) {
    const double trace = g.trace();
    if (!(trace > 0.0)) throw Error(on_singular, "Gram matrix has zero trace");
    g.diagonal().array() += kRidgeScale * trace / static_cast<double>(q);
    if (!try_solve(g, r, b)) {
      throw Error(on_singular, "Gram matrix is rank-deficient even after ridge fallback");
    }
    out.ridge_used = true;
  }
  out.solution.assign(b.data(), b.data() + b.size());
  return out;
}

void NormalEquations::add(std::span<const double> f, double weight, double response) {
  for (std::size_t i = 0; i < q_; ++i) {
    const double wi = weight * f[i];
    rhs_[i] += wi * response;
    double* row = gram_.data() + i * q_;
    for (std::size_t j = 0; j <= i; ++j) row[j] += wi * f[j];
  }
}

std::vector<double> NormalEquations::gram() const {
  std::vector<double> g = gram_;
  for (std::size_t i = 0; i < q_; ++i)
    for (std::size_t j = i + 1; j < q_; ++j) g[i * q_ + j] = g[j * q_ + i];
  return g;
}

}  // namespace fusionest

#pragma once

#include <functional>
#include <vector>

namespace fusionest {

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton iteration on P_n).
GaussRule gauss_legendre(int n);

/// Tensor-product rule for the integral of f over [-1, 1]^2.
double integrate_square(const std::function<double(double, double)>& f, int n = 96);

}  // namespace fusionest

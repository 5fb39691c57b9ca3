#pragma once

#include <vector>

namespace neqlab {

struct QuadratureRule {
  std::vector<double> nodes;  ///< on [-1, 1]
  std::vector<double> weights;
};

/// Gauss-Legendre rule with `order` points, 1 <= order <= 20.
const QuadratureRule& gauss_legendre(int order);

}  // namespace neqlab

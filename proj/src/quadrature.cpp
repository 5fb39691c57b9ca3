#include "neqlab/quadrature.hpp"

#include <array>
#include <boost/math/quadrature/gauss.hpp>
#include <utility>

#include "neqlab/common.hpp"

namespace neqlab {

namespace {

template <int N>
QuadratureRule expand() {
  // boost stores the non-negative half of the symmetric rule
  using G = boost::math::quadrature::gauss<double, N>;
  const auto& x = G::abscissa();
  const auto& w = G::weights();
  QuadratureRule r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) {
      r.nodes.push_back(0.0);
      r.weights.push_back(w[i]);
      continue;
    }
    r.nodes.push_back(-x[i]);
    r.weights.push_back(w[i]);
    r.nodes.push_back(x[i]);
    r.weights.push_back(w[i]);
  }
  return r;
}

template <int... N>
std::array<QuadratureRule, sizeof...(N)> table(std::integer_sequence<int, N...>) {
  return {expand<N + 1>()...};
}

}  // namespace

const QuadratureRule& gauss_legendre(int order) {
  static const auto rules = table(std::make_integer_sequence<int, 20>{});
  if (order < 1 || order > 20) throw ValidationError("gauss_legendre: order must be in 1..20");
  return rules[order - 1];
}

}  // namespace neqlab

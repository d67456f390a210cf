// Taylor blocks of reducible coefficients composed with gamma, for comparing
// against the irreducible recursion: C_X^(k)(x|x0) = C_Y^(k)(gamma(x)|gamma(x0)).
#pragma once

#include <vector>

#include "difflik/reducible.hpp"
#include "difflik/taylor.hpp"

namespace oracle {

using namespace difflik;

// sum_i beta_i prod_j (gamma_j(x) - gamma_j(x0))^{i_j}, as an Expression in x
inline Expression compose(const NumericPoly& Cy, const std::vector<Expression>& gamma, std::span<const double> y0) {
  Expression sum = Expression::constant(0.0);
  for (int i = 0; i < Cy.size(); ++i) {
    if (Cy[i] == 0.0) continue;
    Expression term = Expression::constant(Cy[i]);
    const MultiIndex& mi = Cy.basis().monomial(i);
    for (int j = 0; j < Cy.dim(); ++j)
      for (int e = 0; e < mi[j]; ++e) term = term * (gamma[j] - Expression::constant(y0[j]));
    sum = sum + term;
  }
  return sum;
}

// Per k = -1..K: Taylor polynomial about x0 of order j_k.
inline std::vector<NumericPoly> reducible_taylor_blocks(const ReducibleEvaluator& ev, std::span<const double> x0,
                                                        std::span<const double> theta) {
  const std::vector<double> y0 = ev.to_y(x0, theta);
  const auto Cy = ev.coefficients(y0, theta);
  const int K = ev.K();
  std::vector<NumericPoly> out;
  for (int k = -1; k <= K; ++k) {
    const Expression e = compose(Cy[k + 1], ev.model().gamma, y0);
    out.push_back(taylor(e, x0, theta, 2 * (K + 1 - k), ev.dim()));
  }
  return out;
}

}  // namespace oracle

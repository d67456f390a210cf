// Taylor expansion of expressions about a point, as displacement polynomials.
#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "difflik/displacement_poly.hpp"
#include "difflik/expression.hpp"

namespace difflik {

// Mixed partial derivative d^{|i|} e / dx^i, built by repeated symbolic
// differentiation and memoized per (expression node, multi-index).  Safe for
// concurrent use.
const Expression& derivative(const Expression& e, const MultiIndex& i);
// Same, compiled for fast numeric evaluation.
const CompiledExpression& compiled_derivative(const Expression& e, const MultiIndex& i);

// Numeric Taylor polynomial of e about x0 in `dim` variables to order J:
// coefficient i is (d^i e)(x0) / i!.  Uses exact symbolic derivatives.
// Throws EvaluationError when a required derivative is non-finite at x0.
NumericPoly taylor(const Expression& e, std::span<const double> x0, std::span<const double> theta, int J,
                   int dim);

// Symbolic Taylor polynomial about a symbolic center: coefficient i is the
// Expression (d^i e)/i! in the state variables, read as the center x0.
SymbolicPoly taylor_symbolic(const Expression& e, int J, int dim);

// Same numeric polynomial as taylor(), computed by evaluating the expression
// tree in truncated power-series arithmetic (exact up to rounding; no symbolic
// derivative trees).
NumericPoly propagate_taylor(const Expression& e, std::span<const double> x0, std::span<const double> theta, int J,
                             int dim);

// Series of parameter-free subexpressions at one expansion point, so repeated
// propagate_taylor calls at that point with different theta skip them.
// Internally locked.
class TaylorMemo {
 public:
  TaylorMemo(std::span<const double> x0, int J, int dim);

  bool matches(std::span<const double> x0, int J, int dim) const;
  std::size_t size() const;

 private:
  friend struct TaylorMemoAccess;
  struct Entry {
    Expression pin;  // keeps the node alive
    bool param_free = false;
    std::unique_ptr<NumericPoly> series;
  };
  std::vector<double> x0_;
  int J_;
  int dim_;
  mutable std::mutex mutex_;
  std::unordered_map<const Expression::Node*, Entry> entries_;
};

// Same as above, reusing and filling `memo` (which must match x0, J, dim).
NumericPoly propagate_taylor(const Expression& e, std::span<const double> x0, std::span<const double> theta, int J,
                             int dim, TaylorMemo* memo);

// Truncated series composition f(p) for the elementary functions, with
// p = c + (terms of positive order).  Exposed for tests.
NumericPoly series_ln(const NumericPoly& p);
NumericPoly series_exp(const NumericPoly& p);
NumericPoly series_pow(const NumericPoly& p, double exponent);
NumericPoly series_sin(const NumericPoly& p);
NumericPoly series_cos(const NumericPoly& p);
NumericPoly series_reciprocal(const NumericPoly& p);

}  // namespace difflik

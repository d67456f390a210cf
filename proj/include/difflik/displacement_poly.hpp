// Truncated multivariate polynomials in the displacement d = x - x0.
//
// The coefficient type is a template parameter: double for numeric work at a
// fixed center, Expression for coefficients that are symbolic in (x0, theta).
// Both modes support the same operations.
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <type_traits>
#include <vector>

#include "difflik/expression.hpp"
#include "difflik/monomial_basis.hpp"

namespace difflik {

template <class Scalar>
struct ScalarOps;

template <>
struct ScalarOps<double> {
  static double zero() { return 0.0; }
  static double from(double v) { return v; }
  static bool is_zero(double v) { return v == 0.0; }
  static double add(double a, double b) { return a + b; }
  static double sub(double a, double b) { return a - b; }
  static double mul(double a, double b) { return a * b; }
  static double neg(double a) { return -a; }
};

template <>
struct ScalarOps<Expression> {
  static Expression zero() { return Expression::constant(0.0); }
  static Expression from(double v) { return Expression::constant(v); }
  static bool is_zero(const Expression& v) { return v.is_zero(); }
  static Expression add(const Expression& a, const Expression& b) { return make_simplified(ExprKind::Add, a, b); }
  static Expression sub(const Expression& a, const Expression& b) { return make_simplified(ExprKind::Sub, a, b); }
  static Expression mul(const Expression& a, const Expression& b) { return make_simplified(ExprKind::Mul, a, b); }
  static Expression neg(const Expression& a) { return make_simplified(ExprKind::Neg, a); }
};

// Expansion point.  A null center is the symbolic placeholder (or "unspecified"),
// compatible with any other center.
using Center = std::shared_ptr<const std::vector<double>>;

inline Center make_center(std::span<const double> x0) {
  return std::make_shared<const std::vector<double>>(x0.begin(), x0.end());
}

template <class Scalar>
class DisplacementPoly {
 public:
  using Ops = ScalarOps<Scalar>;

  DisplacementPoly() = default;
  DisplacementPoly(int dim, int degree, Center center = {})
      : basis_(&MonomialBasis::get(dim, degree)),
        coeffs_(basis_->size(), Ops::zero()),
        center_(std::move(center)) {}

  static DisplacementPoly constant(int dim, int degree, Scalar c, Center center = {}) {
    DisplacementPoly p(dim, degree, std::move(center));
    p.coeffs_[0] = std::move(c);
    return p;
  }

  int dim() const { return basis_->dim(); }
  int degree() const { return basis_->degree(); }
  const MonomialBasis& basis() const { return *basis_; }
  const Center& center() const { return center_; }
  void set_center(Center c) { center_ = std::move(c); }

  int size() const { return static_cast<int>(coeffs_.size()); }
  Scalar& operator[](int idx) { return coeffs_[idx]; }
  const Scalar& operator[](int idx) const { return coeffs_[idx]; }
  std::span<const Scalar> coefficients() const { return coeffs_; }

  Scalar coefficient(const MultiIndex& i) const {
    const int idx = basis_->index_of(i);
    return idx < 0 ? Ops::zero() : coeffs_[idx];
  }
  void set_coefficient(const MultiIndex& i, Scalar v) {
    const int idx = basis_->index_of(i);
    if (idx < 0) throw Error("DisplacementPoly: multi-index order exceeds degree bound");
    coeffs_[idx] = std::move(v);
  }

  // Same polynomial with terms of order > degree dropped (or zero-padded).
  DisplacementPoly truncated(int degree) const {
    DisplacementPoly out(dim(), std::max(degree, 0), center_);
    const int n = std::min(out.size(), size());
    for (int i = 0; i < n; ++i) out.coeffs_[i] = coeffs_[i];
    return out;
  }

  // Highest order carrying a coefficient that is not identically zero.
  int effective_degree() const {
    for (int i = size() - 1; i >= 0; --i)
      if (!Ops::is_zero(coeffs_[i])) return basis_->order_of(i);
    return -1;
  }

 private:
  const MonomialBasis* basis_ = nullptr;
  std::vector<Scalar> coeffs_;
  Center center_;
};

using NumericPoly = DisplacementPoly<double>;
using SymbolicPoly = DisplacementPoly<Expression>;

namespace detail {

inline Center merged_center(const Center& a, const Center& b) {
  if (a && b && a != b && *a != *b) throw Error("DisplacementPoly: center mismatch");
  return a ? a : b;
}

template <class S>
void check_dims(const DisplacementPoly<S>& p, const DisplacementPoly<S>& q) {
  if (p.dim() != q.dim()) throw Error("DisplacementPoly: dimension mismatch");
}

}  // namespace detail

template <class S>
DisplacementPoly<S> poly_add(const DisplacementPoly<S>& p, const DisplacementPoly<S>& q) {
  detail::check_dims(p, q);
  DisplacementPoly<S> out(p.dim(), std::max(p.degree(), q.degree()), detail::merged_center(p.center(), q.center()));
  for (int i = 0; i < p.size(); ++i) out[i] = p[i];
  for (int i = 0; i < q.size(); ++i) out[i] = ScalarOps<S>::add(out[i], q[i]);
  return out;
}

template <class S>
DisplacementPoly<S> poly_sub(const DisplacementPoly<S>& p, const DisplacementPoly<S>& q) {
  detail::check_dims(p, q);
  DisplacementPoly<S> out(p.dim(), std::max(p.degree(), q.degree()), detail::merged_center(p.center(), q.center()));
  for (int i = 0; i < p.size(); ++i) out[i] = p[i];
  for (int i = 0; i < q.size(); ++i) out[i] = ScalarOps<S>::sub(out[i], q[i]);
  return out;
}

template <class S>
DisplacementPoly<S> poly_scale(const DisplacementPoly<S>& p, const S& s) {
  DisplacementPoly<S> out(p.dim(), p.degree(), p.center());
  if (ScalarOps<S>::is_zero(s)) return out;
  for (int i = 0; i < p.size(); ++i)
    if (!ScalarOps<S>::is_zero(p[i])) out[i] = ScalarOps<S>::mul(s, p[i]);
  return out;
}

template <class S>
DisplacementPoly<S> poly_scale(const DisplacementPoly<S>& p, double s)
  requires(!std::is_same_v<S, double>)
{
  return poly_scale(p, ScalarOps<S>::from(s));
}

// out += p * q, keeping terms of order <= out.degree().
template <class S>
void poly_mul_accumulate(DisplacementPoly<S>& out, const DisplacementPoly<S>& p, const DisplacementPoly<S>& q) {
  detail::check_dims(p, q);
  const MonomialBasis& basis = out.basis();
  const int J = out.degree();
  const int np = std::min(p.size(), basis.size());
  for (int a = 0; a < np; ++a) {
    if (ScalarOps<S>::is_zero(p[a])) continue;
    const int nb = std::min(q.size(), basis.count_upto(J - basis.order_of(a)));
    for (int b = 0; b < nb; ++b) {
      if (ScalarOps<S>::is_zero(q[b])) continue;
      const int idx = basis.product(a, b);
      out[idx] = ScalarOps<S>::add(out[idx], ScalarOps<S>::mul(p[a], q[b]));
    }
  }
}

template <class S>
DisplacementPoly<S> poly_mul_trunc(const DisplacementPoly<S>& p, const DisplacementPoly<S>& q, int degree) {
  detail::check_dims(p, q);
  DisplacementPoly<S> out(p.dim(), degree, detail::merged_center(p.center(), q.center()));
  poly_mul_accumulate(out, p, q);
  return out;
}

// d/dx_j acts through d_j only: beta_i -> (i_j + 1) beta_{i + e_j}.  The
// degree bound drops by one (floored at zero).
template <class S>
DisplacementPoly<S> poly_partial(const DisplacementPoly<S>& p, int j) {
  if (j < 0 || j >= p.dim()) throw Error("poly_partial: variable index out of range");
  DisplacementPoly<S> out(p.dim(), std::max(p.degree() - 1, 0), p.center());
  const MonomialBasis& src = p.basis();
  for (int i = 0; i < out.size(); ++i) {
    const int up = src.raise(i, j);
    if (up < 0 || ScalarOps<S>::is_zero(p[up])) continue;
    const double factor = src.monomial(i)[j] + 1;
    out[i] = ScalarOps<S>::mul(ScalarOps<S>::from(factor), p[up]);
  }
  return out;
}

// Exact radial weight: beta_i -> k beta_i / (k + tr[i]), the coefficient map of
// k * int_0^1 P(u d) u^(k-1) du.
template <class S>
DisplacementPoly<S> radial_integrate(const DisplacementPoly<S>& p, int k) {
  if (k < 1) throw Error("radial_integrate: k must be >= 1");
  DisplacementPoly<S> out(p.dim(), p.degree(), p.center());
  for (int i = 0; i < p.size(); ++i) {
    if (ScalarOps<S>::is_zero(p[i])) continue;
    const int r = p.basis().order_of(i);
    if (r == 0) {
      out[i] = p[i];
    } else {
      out[i] = ScalarOps<S>::mul(ScalarOps<S>::from(static_cast<double>(k) / (k + r)), p[i]);
    }
  }
  return out;
}

// Multiplies by d_j (degree bound grows by one).
template <class S>
DisplacementPoly<S> poly_times_displacement(const DisplacementPoly<S>& p, int j) {
  DisplacementPoly<S> out(p.dim(), p.degree() + 1, p.center());
  for (int i = 0; i < p.size(); ++i)
    if (!ScalarOps<S>::is_zero(p[i])) out[out.basis().raise(i, j)] = p[i];
  return out;
}

inline double evaluate(const NumericPoly& p, std::span<const double> d) {
  const MonomialBasis& basis = p.basis();
  double sum = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    double term = p[i];
    const MultiIndex& mi = basis.monomial(i);
    for (int j = 0; j < p.dim(); ++j)
      for (int e = 0; e < mi[j]; ++e) term *= d[j];
    sum += term;
  }
  return sum;
}

// Evaluates a polynomial and its gradient and Hessian at d (dense, row-major
// m x m for the Hessian).
void evaluate_with_derivatives(const NumericPoly& p, std::span<const double> d, double& value,
                               std::span<double> gradient, std::span<double> hessian);

template <class S>
DisplacementPoly<S> operator+(const DisplacementPoly<S>& p, const DisplacementPoly<S>& q) { return poly_add(p, q); }
template <class S>
DisplacementPoly<S> operator-(const DisplacementPoly<S>& p, const DisplacementPoly<S>& q) { return poly_sub(p, q); }

}  // namespace difflik

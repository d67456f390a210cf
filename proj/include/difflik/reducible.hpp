// Log-density expansion for unit-diffusion (reduced) models:
//
//   l_Y(y|y0, D) = -(m/2) ln(2 pi D) + C^(-1)/D + sum_k C^(k) D^k / k!
//
// with every C^(k) a polynomial in d = y - y0.
#pragma once

#include <memory>
#include <vector>

#include "difflik/displacement_poly.hpp"
#include "difflik/model.hpp"

namespace difflik {

constexpr int kMaxOrder = 12;

// -1/2 |d|^2
template <class S>
DisplacementPoly<S> coeff_leading(int dim, int degree = 2, Center center = {});

// sum_i d_i int_0^1 mu_i(y0 + u d) du
template <class S>
DisplacementPoly<S> coeff_C0(const std::vector<DisplacementPoly<S>>& mu, int degree);

// G^(k) for k >= 1 from C = {C^(-1), C^(0), ..., C^(k-1)} (at least k+1
// entries).  The divergence term enters only at k = 1.
template <class S>
DisplacementPoly<S> compute_G(int k, const std::vector<DisplacementPoly<S>>& C,
                              const std::vector<DisplacementPoly<S>>& mu, int degree);

// k int_0^1 G(y0 + u d) u^(k-1) du
template <class S>
DisplacementPoly<S> coeff_Ck(int k, const DisplacementPoly<S>& G);

// Working degree that makes the symbolic recursion exact for drift of total
// degree p.
int reducible_exact_degree(int p, int K);

enum class ExpansionMode { Symbolic, Numeric };

struct ReducibleExpansion {
  int K = 2;
  int dim = 0;
  ExpansionMode mode = ExpansionMode::Symbolic;
  bool truncated = false;              // Taylor-mode build (non-polynomial drift)
  std::vector<SymbolicPoly> symbolic;  // C^(-1) .. C^(K), coefficients in (y0, theta)
  std::vector<NumericPoly> numeric;    // same, at (y0, theta)
  std::vector<double> y0;
  std::vector<double> theta;
};

// Symbolic build; requires a drift polynomial in y.
ReducibleExpansion build_reducible_symbolic(const ReducedModel& model, int K);
// Numeric build at (y0, theta).  Exact for polynomial drift; otherwise the
// drift is Taylor-expanded at y0 and C^(k) truncated at order 2(K+1-k).
ReducibleExpansion build_reducible_numeric(const ReducedModel& model, int K, std::span<const double> y0,
                                           std::span<const double> theta);

// Reusable evaluator for l_Y and its lift to X:
//   l_X(x|x0, D) = -D_v(x) + l_Y(gamma(x) | gamma(x0), D).
class ReducibleEvaluator {
 public:
  ReducibleEvaluator(std::shared_ptr<const ReducedModel> model, int K);

  int K() const { return K_; }
  int dim() const { return model_->dim; }
  bool polynomial_drift() const { return polynomial_; }
  const ReducedModel& model() const { return *model_; }

  // C^(-1) .. C^(K) at (y0, theta).
  std::vector<NumericPoly> coefficients(std::span<const double> y0, std::span<const double> theta) const;
  double log_density_y(std::span<const double> y, std::span<const double> y0, double delta,
                       std::span<const double> theta) const;
  double log_density_x(std::span<const double> x, std::span<const double> x0, double delta,
                       std::span<const double> theta) const;
  // gamma(x)
  std::vector<double> to_y(std::span<const double> x, std::span<const double> theta) const;
  double Dv(std::span<const double> x, std::span<const double> theta) const;

 private:
  std::shared_ptr<const ReducedModel> model_;
  int K_;
  bool polynomial_ = false;
  std::vector<SymbolicPoly> symbolic_;
  // compiled_[k+1][idx]; empty program for identically zero coefficients
  std::vector<std::vector<std::unique_ptr<CompiledExpression>>> compiled_;
  std::vector<CompiledExpression> gamma_;
  CompiledExpression Dv_;
};

// l_Y from numeric coefficients at displacement d.
double assemble_log_density(const std::vector<NumericPoly>& C, std::span<const double> d, double delta, int dim);

}  // namespace difflik

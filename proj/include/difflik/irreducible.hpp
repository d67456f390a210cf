// Double expansion (in D and in d = x - x0) of the log-density for general
// multivariate diffusions:
//
//   l(x|x0, D) = -(m/2) ln(2 pi D) - D_v(x) + C^(-1)/D + sum_k C^(k) D^k / k!
//
// where each C^(k) is a polynomial in d of order j_k = 2(K + 1 - k), computed
// numerically at a fixed (x0, theta) by solving the forward equation order by
// order, one total-degree level at a time.
#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "difflik/displacement_poly.hpp"
#include "difflik/model.hpp"
#include "difflik/taylor.hpp"

namespace difflik {

// j_k for k = -1..K, stored at index k + 1.
std::vector<int> order_schedule(int K);

// Taylor polynomials about x0 of everything the recursion consumes, all to
// order J = j_{-1}.
struct Ingredients {
  int dim = 0;
  int J = 0;
  std::vector<NumericPoly> mu;  // m
  std::vector<NumericPoly> v;   // m*m row-major
  NumericPoly Dv;
  // derived: b_j = -mu_j + sum_i dv_ij/dx_i,  A = -sum_i dmu_i/dx_i + 1/2 sum_ij d2 v_ij/dx_i dx_j
  std::vector<NumericPoly> b;
  NumericPoly A;
};

// -1/2 d' v0^-1 d (throws on singular v0).  Off-diagonal monomials carry both
// symmetric halves.
NumericPoly leading_quadratic(const Eigen::MatrixXd& v0, int degree, Center center = {});

// f^(k-1) truncated at order j_k, for C = {C^(-1), ..., C^(k)} (k + 2 entries).
// Every C^(k) is a polynomial in d with D_v kept outside C^(0).
NumericPoly assemble_f(int k, const std::vector<NumericPoly>& C, const Ingredients& ing, int K);

// Diagonal value of the level-r block of the map C^(k) -> f^(k-1): the level
// system is always this scalar times the identity.
double level_scale(int k, int r);

// Solves the level-r coefficients of C[k+1] (levels below r already final,
// level r overwritten) by probing assemble_f with unit vectors and LU.
// Returns the reciprocal condition estimate of the level matrix.
double solve_level(int k, int r, std::vector<NumericPoly>& C, const Ingredients& ing, int K);

enum class LevelSolver { Direct, Probing };

struct IrreducibleExpansion {
  int K = 2;
  int dim = 0;
  std::vector<int> j;          // schedule, index k + 1
  std::vector<double> x0;
  std::vector<double> theta;
  std::vector<NumericPoly> C;  // C^(-1) .. C^(K)
  double max_residual = 0.0;   // largest |f^(k-1)| coefficient after solving, scaled
};

// Everything but the -D_v(x) term.
double expansion_log_density(const IrreducibleExpansion& e, std::span<const double> x, double delta);

// Per-model builder.  Symbolic derivatives of mu, v and D_v are produced once;
// each build is numeric at its (x0, theta).
class IrreducibleBuilder {
 public:
  IrreducibleBuilder(std::shared_ptr<const DiffusionModel> model, int K);

  int K() const { return K_; }
  int dim() const { return model_->dim(); }
  const DiffusionModel& model() const { return *model_; }
  // v and D_v free of parameters, so C^(-1) depends on x0 only.
  bool diffusion_param_free() const { return diffusion_param_free_; }

  // `memo`, when given, must be a TaylorMemo at (x0, j_{-1}, dim).
  Ingredients ingredients(std::span<const double> x0, std::span<const double> theta,
                          TaylorMemo* memo = nullptr) const;

  // C^(-1) only (levels 0..j_{-1}).
  NumericPoly solve_leading(const Ingredients& ing, LevelSolver solver = LevelSolver::Direct) const;

  // Full build.  `leading`, when given, must be solve_leading for the same x0.
  IrreducibleExpansion build(std::span<const double> x0, std::span<const double> theta,
                             LevelSolver solver = LevelSolver::Direct, const NumericPoly* leading = nullptr,
                             TaylorMemo* memo = nullptr) const;

  double Dv(std::span<const double> x, std::span<const double> theta) const;
  double log_density(std::span<const double> x, std::span<const double> x0, double delta,
                     std::span<const double> theta) const;

 private:
  std::shared_ptr<const DiffusionModel> model_;
  int K_;
  std::vector<Expression> v_;
  Expression Dv_;
  CompiledExpression Dv_compiled_;
  bool diffusion_param_free_ = false;
};

}  // namespace difflik

// Multivariate diffusion models dX = mu(X) dt + sigma(X) dW, their
// validation, and reduction to unit diffusion.
#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "difflik/expression.hpp"

namespace difflik {

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double x) const { return x > lo && x < hi; }
};

struct DiffusionModel {
  SymbolTable symbols;                 // state and parameter names
  std::vector<Expression> mu;          // m drift entries
  std::vector<Expression> sigma;       // m*m, row-major
  std::vector<Interval> domain;        // one open interval per coordinate
  std::vector<Expression> gamma;       // optional, in x
  std::vector<Expression> gamma_inv;   // optional, in y (state j means y_j)
  std::vector<Expression> mu_y;        // optional reduced drift, in y

  int dim() const { return symbols.dim(); }
  int num_params() const { return static_cast<int>(symbols.params.size()); }
  const Expression& sigma_at(int i, int j) const { return sigma[i * dim() + j]; }
  bool in_domain(std::span<const double> x) const;
  // theta in declared order from a name map; missing names throw.
  std::vector<double> theta_from(const std::map<std::string, double>& values) const;
};

// Reads the line-oriented "key = value" model format.  Statements are separated
// by newlines or ';', and '#' starts a comment.
DiffusionModel load_model(const std::string& path);
DiffusionModel parse_model(const std::string& text);

// v = sigma sigma^T, symbolic and simplified (row-major m*m, exactly symmetric).
std::vector<Expression> compute_v(const DiffusionModel& model);
// D_v = 1/2 ln det v.
Expression compute_Dv(const DiffusionModel& model);
// Symbolic determinant of a row-major n*n matrix by cofactor expansion.
Expression determinant(std::span<const Expression> a, int n);

struct ValidationIssue {
  std::string check;
  std::vector<double> point;
  std::string detail;
  bool hard = false;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  std::vector<std::string> unchecked;
  int probes = 0;
  bool passed() const;
};

// Probes random interior points (plus a few anchor points) for: v symmetric
// positive definite (hard), finite mu, sigma and their first two derivatives,
// and gamma_inv(gamma(x)) = x when both maps are given.
ValidationReport validate_model(const DiffusionModel& model, std::span<const double> theta, int probes = 64,
                                std::uint64_t seed = 1);

struct ReducibilityReport {
  bool reducible = false;
  double max_residual = 0.0;
  std::vector<double> witness;  // point of the largest scaled residual
  int probes = 0;
};

// Randomized test of the commutativity condition
//   sum_l d sigma_ik/dx_l sigma_lj = sum_l d sigma_ij/dx_l sigma_lk,  k > j.
ReducibilityReport check_reducibility(const DiffusionModel& model, std::span<const double> theta, int probes = 64,
                                      std::uint64_t seed = 1);

enum class ReductionSource { UserSupplied, ConstantSigma, Lamperti };

struct ReducedModel {
  int dim = 0;
  SymbolTable symbols;             // states y1..ym, parent's params
  std::vector<Expression> mu_y;    // in y
  std::vector<Expression> gamma;   // in x
  std::vector<Expression> gamma_inv;
  Expression Dv;                   // parent's D_v, in x
  ReductionSource source = ReductionSource::UserSupplied;
  std::shared_ptr<const DiffusionModel> parent;
};

// Builds gamma / gamma_inv (user-supplied, constant sigma, or per-coordinate
// Lamperti transform) and the unit-diffusion drift.  Throws Error when no map
// can be constructed.  `theta` is only used to confirm pattern matches.
ReducedModel derive_reduced_model(const DiffusionModel& model, std::span<const double> theta);

// Deterministic interior sample for probing: coordinate-wise, N(0,1)-scaled on
// R, lo + exp(N) on half-lines, uniform on bounded intervals.
class DomainSampler {
 public:
  DomainSampler(const std::vector<Interval>& domain, std::uint64_t seed);
  std::vector<double> next();
  // Anchor point: 0 where interior, else 1 above a lower bound, else midpoint.
  std::vector<double> anchor() const;

 private:
  std::vector<Interval> domain_;
  std::mt19937_64 rng_;
};

}  // namespace difflik

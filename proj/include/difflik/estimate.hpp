// Maximum likelihood: optimizer, fits, numeric Hessians, Fisher information.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "difflik/likelihood.hpp"
#include "difflik/simulate.hpp"

namespace difflik {

// Open interval; infinite ends are unbounded.
struct Bound {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct MaximizeOptions {
  double simplex_tol = 1e-8;  // simplex diameter, relative to 1 + |u|
  double grad_tol = 1e-6;     // max |grad|, relative to max(1, |f|)
  int max_simplex_iter = 2000;
  int max_newton_iter = 500;
  double initial_step = 0.1;  // simplex edge, relative to 1 + |u|
};

using Objective = std::function<double(std::span<const double>)>;

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> theta;
  double loglik = 0.0;
  int iterations = 0;  // simplex + quasi-Newton
  int evaluations = 0;
  bool converged = false;
  std::string message;
  Eigen::MatrixXd hessian;                  // of the objective at theta
  std::optional<Eigen::VectorXd> std_errors;  // sqrt diag (-H)^-1 when -H is PD

  std::map<std::string, double> named() const;
};

// Nelder-Mead, then BFGS with central-difference gradients, both on the
// unconstrained scale u: theta = lo + (hi - lo) logistic(u), lo + e^u, hi - e^u
// or u.  Non-finite or throwing evaluations count as -inf; the best point
// ever evaluated is returned.  Throws when the objective is not finite at theta0.
FitResult maximize(const Objective& f, std::span<const double> theta0, std::span<const Bound> bounds = {},
                   const MaximizeOptions& options = {});

// Central-difference Hessian with steps 1e-4 (|theta_i| + 1), pulled inside bounds.
Eigen::MatrixXd numeric_hessian(const Objective& f, std::span<const double> theta, std::span<const Bound> bounds = {});

// maximize(path_loglik) plus Hessian and standard errors; parameter names from the model.
FitResult fit(const LikelihoodEvaluator& ev, const Path& data, double delta, std::span<const double> theta0,
              std::span<const Bound> bounds = {}, const MaximizeOptions& options = {});

using TransitionDensity =
    std::function<double(std::span<const double> x, std::span<const double> x0, std::span<const double> theta)>;

struct FisherInfo {
  Eigen::MatrixXd info;       // per observation, symmetrized
  Eigen::MatrixXd entry_se;   // Monte Carlo standard error of each entry
  bool positive_definite = false;
  int draws = 0;

  // sqrt of diag(info^-1 / n)
  Eigen::VectorXd asymptotic_stdev(int n) const;
};

// E[-d2 l / dtheta dtheta'] over x0 from the stationary law of `law` and x one
// exact step later; the density is differentiated numerically.  Draw i uses
// stream i, so the estimate is a pure function of (seed, draws).
FisherInfo fisher_info(const TransitionDensity& l, const OUSpec& law, double delta, std::span<const double> theta,
                       int draws, std::uint64_t seed);

}  // namespace difflik

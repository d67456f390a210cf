// Simulation and exact Ornstein-Uhlenbeck oracles.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "difflik/model.hpp"

namespace difflik {

// Counter-based stream (Philox4x32-10).  Every variate is a pure function of
// (seed, stream, position), so replication r can use stream r regardless of
// how work is scheduled.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  double uniform();  // in (0, 1)
  double normal();   // inverse-CDF transform of uniform()
  std::uint64_t position() const { return counter_ * 4 - (4 - lane_); }

 private:
  std::array<std::uint32_t, 4> block() const;

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  int lane_ = 4;
  std::array<std::uint32_t, 4> buffer_{};
};

// One Philox4x32-10 block.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

// Standard normal quantile, accurate to a few ulps on (0, 1).
double normal_quantile(double p);

// dX = beta (alpha - X) dt + sigma dW
struct OUSpec {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd beta;
  Eigen::MatrixXd sigma;

  int dim() const { return static_cast<int>(alpha.size()); }
  bool stationary() const;
};

// The benchmark parameterization: alpha = eta, beta = [[k11, k12], [0, k22]],
// sigma = I; theta = (eta1, eta2, k11, k12, k22).
OUSpec ou_from_theta(std::span<const double> theta);

// Solves beta L + L beta' = sigma sigma' over the m(m+1)/2 free entries.
Eigen::MatrixXd stationary_cov(const OUSpec& spec);
// Closed form for m = 2:
//   (det(b) S + (b - tr(b)) S (b - tr(b))') / (2 tr(b) det(b)),  S = sigma sigma'
Eigen::MatrixXd stationary_cov_2d(const OUSpec& spec);

// exp(A t), scaling and squaring with a Pade core.
Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& A, double t);

struct GaussianLaw {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// m(D, x0) = alpha + exp(-beta D)(x0 - alpha),  Omega(D) = L - exp(-beta D) L exp(-beta' D)
GaussianLaw ou_transition(const OUSpec& spec, std::span<const double> x0, double delta);
Eigen::VectorXd ou_exact_step(const OUSpec& spec, std::span<const double> x0, double delta, RngStream& rng);
double ou_exact_logdensity(const OUSpec& spec, std::span<const double> x, std::span<const double> x0, double delta);
double gaussian_logdensity(const GaussianLaw& law, std::span<const double> x);

// Observations in rows; row 0 is the starting point.
using Path = std::vector<std::vector<double>>;

// Exact OU log-likelihood of a path (initial density left out); one matrix
// exponential and one factorization for the whole path.
double ou_exact_path_loglik(const OUSpec& spec, const Path& path, double delta);

// Exact OU path of n steps from x0.
Path ou_path(const OUSpec& spec, std::span<const double> x0, double delta, int n, RngStream& rng);
// X = exp(Y) with Y the OU path above started at ln(x0).
Path exp_ou_path(const OUSpec& spec, std::span<const double> x0, double delta, int n, RngStream& rng);
// Euler-Maruyama with step delta/substeps, recorded every delta.  Throws when
// the path leaves the model domain.
Path euler_path(const DiffusionModel& model, std::span<const double> theta, std::span<const double> x0, double delta,
                int substeps, int n, RngStream& rng);

// CSV: header of state names, one observation per row.
void write_csv(std::ostream& out, const std::vector<std::string>& names, const Path& path);
// Columns are matched to `names` by header; throws on missing columns or bad rows.
Path read_csv(std::istream& in, const std::vector<std::string>& names);

}  // namespace difflik

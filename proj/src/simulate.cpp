#include "difflik/simulate.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

namespace difflik {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

Eigen::Map<const Eigen::VectorXd> as_vec(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

std::array<std::uint32_t, 4> RngStream::block() const {
  return philox4x32({static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                     static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                    key_);
}

double RngStream::uniform() {
  // 53 bits from two lanes
  std::uint32_t w[2];
  for (auto& x : w) {
    if (lane_ == 4) {
      buffer_ = block();
      ++counter_;
      lane_ = 0;
    }
    x = buffer_[lane_++];
  }
  const std::uint64_t bits = (static_cast<std::uint64_t>(w[0] >> 5) << 26) | (w[1] >> 6);
  return (static_cast<double>(bits) + 0.5) * 0x1p-53;
}

double RngStream::normal() { return normal_quantile(uniform()); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  // Acklam's rational approximation, then one Halley step on erfc.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  if (p > 0.5) return -normal_quantile(1.0 - p);  // 1 - p is exact here
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1 + 0.5 * x * u);
}

bool OUSpec::stationary() const {
  const Eigen::VectorXcd ev = beta.eigenvalues();
  return (ev.real().array() > 0.0).all();
}

OUSpec ou_from_theta(std::span<const double> theta) {
  if (theta.size() != 5) throw Error("OU parameter vector must be (eta1, eta2, k11, k12, k22)");
  OUSpec s;
  s.alpha = Eigen::Vector2d(theta[0], theta[1]);
  s.beta = Eigen::Matrix2d{{theta[2], theta[3]}, {0.0, theta[4]}};
  s.sigma = Eigen::Matrix2d::Identity();
  return s;
}

Eigen::MatrixXd stationary_cov(const OUSpec& spec) {
  const int m = spec.dim();
  const Eigen::MatrixXd S = spec.sigma * spec.sigma.transpose();
  // unknown u(i, j), i <= j
  std::vector<std::pair<int, int>> idx;
  Eigen::MatrixXi pos(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      pos(i, j) = pos(j, i) = static_cast<int>(idx.size());
      idx.emplace_back(i, j);
    }
  const int n = static_cast<int>(idx.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs(n);
  for (int e = 0; e < n; ++e) {
    const auto [i, j] = idx[e];
    for (int k = 0; k < m; ++k) {
      A(e, pos(k, j)) += spec.beta(i, k);
      A(e, pos(i, k)) += spec.beta(j, k);
    }
    rhs(e) = S(i, j);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw Error("stationary_cov: singular Lyapunov operator");
  const Eigen::VectorXd u = lu.solve(rhs);
  Eigen::MatrixXd L(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) L(i, j) = u(pos(i, j));
  return L;
}

Eigen::MatrixXd stationary_cov_2d(const OUSpec& spec) {
  if (spec.dim() != 2) throw Error("stationary_cov_2d: m must be 2");
  const double tr = spec.beta.trace(), det = spec.beta.determinant();
  if (tr == 0.0 || det == 0.0) throw Error("stationary_cov_2d: needs tr(beta) != 0 and det(beta) != 0");
  const Eigen::Matrix2d S = spec.sigma * spec.sigma.transpose();
  const Eigen::Matrix2d B = spec.beta - tr * Eigen::Matrix2d::Identity();
  return (det * S + B * S * B.transpose()) / (2 * tr * det);
}

Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& A, double t) { return (A * t).exp(); }

GaussianLaw ou_transition(const OUSpec& spec, std::span<const double> x0, double delta) {
  const Eigen::MatrixXd L = stationary_cov(spec);
  const Eigen::MatrixXd E = matrix_exp(-spec.beta, delta);
  GaussianLaw g;
  g.mean = spec.alpha + E * (as_vec(x0) - spec.alpha);
  const Eigen::MatrixXd omega = L - E * L * E.transpose();
  g.cov = 0.5 * (omega + omega.transpose());
  return g;
}

double gaussian_logdensity(const GaussianLaw& law, std::span<const double> x) {
  const int m = static_cast<int>(law.mean.size());
  Eigen::LLT<Eigen::MatrixXd> llt(law.cov);
  if (llt.info() != Eigen::Success) throw Error("gaussian_logdensity: covariance not positive definite");
  const Eigen::VectorXd z = llt.matrixL().solve(as_vec(x) - law.mean);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * m * std::log(2 * std::numbers::pi) - 0.5 * logdet - 0.5 * z.squaredNorm();
}

double ou_exact_logdensity(const OUSpec& spec, std::span<const double> x, std::span<const double> x0, double delta) {
  return gaussian_logdensity(ou_transition(spec, x0, delta), x);
}

double ou_exact_path_loglik(const OUSpec& spec, const Path& path, double delta) {
  if (path.size() < 2) throw Error("need at least two observations");
  const int m = spec.dim();
  const Eigen::MatrixXd L = stationary_cov(spec);
  const Eigen::MatrixXd E = matrix_exp(-spec.beta, delta);
  const Eigen::MatrixXd omega = L - E * L * E.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (omega + omega.transpose()));
  if (llt.info() != Eigen::Success) throw Error("OU transition covariance not positive definite");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double c = -0.5 * m * std::log(2 * std::numbers::pi) - 0.5 * logdet;
  double sum = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Eigen::VectorXd r = as_vec(path[i]) - spec.alpha - E * (as_vec(path[i - 1]) - spec.alpha);
    sum += c - 0.5 * llt.matrixL().solve(r).squaredNorm();
  }
  return sum;
}

namespace {

Eigen::VectorXd draw(const GaussianLaw& g, RngStream& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw Error("OU transition covariance not positive definite");
  Eigen::VectorXd z(g.mean.size());
  for (auto& v : z) v = rng.normal();
  return g.mean + llt.matrixL() * z;
}

}  // namespace

Eigen::VectorXd ou_exact_step(const OUSpec& spec, std::span<const double> x0, double delta, RngStream& rng) {
  return draw(ou_transition(spec, x0, delta), rng);
}

Path ou_path(const OUSpec& spec, std::span<const double> x0, double delta, int n, RngStream& rng) {
  const int m = spec.dim();
  const Eigen::MatrixXd E = matrix_exp(-spec.beta, delta);
  const Eigen::MatrixXd L = stationary_cov(spec);
  Eigen::LLT<Eigen::MatrixXd> llt(L - E * L * E.transpose());
  if (llt.info() != Eigen::Success) throw Error("OU transition covariance not positive definite");
  const Eigen::MatrixXd chol = llt.matrixL();
  Path path{std::vector<double>(x0.begin(), x0.end())};
  Eigen::VectorXd x = as_vec(x0), z(m);
  for (int t = 0; t < n; ++t) {
    for (auto& v : z) v = rng.normal();
    x = spec.alpha + E * (x - spec.alpha) + chol * z;
    path.emplace_back(x.data(), x.data() + m);
  }
  return path;
}

Path exp_ou_path(const OUSpec& spec, std::span<const double> x0, double delta, int n, RngStream& rng) {
  std::vector<double> y0;
  for (double v : x0) {
    if (!(v > 0.0)) throw Error("exp_ou_path: starting point must be positive");
    y0.push_back(std::log(v));
  }
  Path path = ou_path(spec, y0, delta, n, rng);
  for (auto& row : path)
    for (auto& v : row) v = std::exp(v);
  path[0].assign(x0.begin(), x0.end());
  return path;
}

Path euler_path(const DiffusionModel& model, std::span<const double> theta, std::span<const double> x0, double delta,
                int substeps, int n, RngStream& rng) {
  if (substeps < 1) throw Error("euler_path: substeps must be >= 1");
  const int m = model.dim();
  std::vector<CompiledExpression> mu, sigma;
  for (const auto& e : model.mu) mu.emplace_back(e);
  for (const auto& e : model.sigma) sigma.emplace_back(e);
  const double h = delta / substeps, sh = std::sqrt(h);
  std::vector<double> x(x0.begin(), x0.end()), drift(m), z(m), sg(m * m);
  Path path{x};
  for (int t = 0; t < n; ++t) {
    for (int s = 0; s < substeps; ++s) {
      for (int i = 0; i < m; ++i) drift[i] = mu[i](x, theta);
      for (int i = 0; i < m * m; ++i) sg[i] = model.sigma[i].is_zero() ? 0.0 : sigma[i](x, theta);
      for (auto& v : z) v = rng.normal();
      for (int i = 0; i < m; ++i) {
        double dx = drift[i] * h;
        for (int j = 0; j < m; ++j) dx += sg[i * m + j] * sh * z[j];
        x[i] += dx;
      }
      if (!model.in_domain(x))
        throw Error("euler_path: path left the domain at step " + std::to_string(t * substeps + s + 1));
    }
    path.push_back(x);
  }
  return path;
}

void write_csv(std::ostream& out, const std::vector<std::string>& names, const Path& path) {
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& row : path) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  out.precision(old);
}

Path read_csv(std::istream& in, const std::vector<std::string>& names) {
  std::string line;
  if (!std::getline(in, line)) throw Error("CSV: missing header");
  const auto header = split_csv(line);
  std::vector<int> col;
  for (const auto& n : names) {
    int c = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == n) c = static_cast<int>(i);
    if (c < 0) throw Error("CSV: no column named '" + n + "'");
    col.push_back(c);
  }
  Path path;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    std::vector<double> row;
    for (int c : col) {
      if (c >= static_cast<int>(cells.size())) throw Error("CSV line " + std::to_string(lineno) + ": too few columns");
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size() || used == 0)
        throw Error("CSV line " + std::to_string(lineno) + ": bad number '" + cells[c] + "'");
      row.push_back(v);
    }
    path.push_back(std::move(row));
  }
  return path;
}

}  // namespace difflik

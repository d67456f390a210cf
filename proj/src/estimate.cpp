#include "difflik/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace difflik {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Bound bound_at(std::span<const Bound> b, std::size_t i) { return i < b.size() ? b[i] : Bound{}; }

double to_theta(double u, const Bound& b) {
  const bool lo = std::isfinite(b.lo), hi = std::isfinite(b.hi);
  if (lo && hi) return b.lo + (b.hi - b.lo) / (1.0 + std::exp(-u));
  if (lo) return b.lo + std::exp(u);
  if (hi) return b.hi - std::exp(u);
  return u;
}

double to_u(double t, const Bound& b) {
  const bool lo = std::isfinite(b.lo), hi = std::isfinite(b.hi);
  if ((lo && !(t > b.lo)) || (hi && !(t < b.hi))) throw Error("starting point outside bounds");
  if (lo && hi) {
    const double p = (t - b.lo) / (b.hi - b.lo);
    return std::log(p / (1.0 - p));
  }
  if (lo) return std::log(t - b.lo);
  if (hi) return std::log(b.hi - t);
  return t;
}

// objective on the u scale, tracking the best point seen
class Wrapped {
 public:
  Wrapped(const Objective& f, std::span<const Bound> bounds, int n) : f_(f), bounds_(bounds), n_(n) {}

  double operator()(const Eigen::VectorXd& u) {
    std::vector<double> t(n_);
    for (int i = 0; i < n_; ++i) t[i] = to_theta(u[i], bound_at(bounds_, i));
    double v;
    try {
      v = f_(t);
    } catch (const Error&) {
      v = kNegInf;
    }
    if (!std::isfinite(v)) v = kNegInf;
    ++evals;
    if (v > best_f) {
      best_f = v;
      best_u = u;
    }
    return v;
  }

  std::vector<double> theta(const Eigen::VectorXd& u) const {
    std::vector<double> t(n_);
    for (int i = 0; i < n_; ++i) t[i] = to_theta(u[i], bound_at(bounds_, i));
    return t;
  }

  double best_f = kNegInf;
  Eigen::VectorXd best_u;
  int evals = 0;

 private:
  const Objective& f_;
  std::span<const Bound> bounds_;
  int n_;
};

struct SimplexOutcome {
  int iterations = 0;
  bool converged = false;
};

// maximizes; standard coefficients 1, 2, 1/2, 1/2
SimplexOutcome nelder_mead(Wrapped& f, const Eigen::VectorXd& u0, const MaximizeOptions& opt) {
  const int n = static_cast<int>(u0.size());
  std::vector<Eigen::VectorXd> x(n + 1, u0);
  std::vector<double> fx(n + 1);
  for (int i = 0; i < n; ++i) x[i + 1][i] += opt.initial_step * (1.0 + std::abs(u0[i]));
  for (int i = 0; i <= n; ++i) fx[i] = f(x[i]);

  std::vector<int> order(n + 1);
  SimplexOutcome out;
  for (; out.iterations < opt.max_simplex_iter; ++out.iterations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fx[a] > fx[b]; });
    const Eigen::VectorXd& best = x[order[0]];
    double diam = 0.0;
    for (int i = 1; i <= n; ++i)
      diam = std::max(diam, ((x[order[i]] - best).cwiseAbs().array() / (1.0 + best.cwiseAbs().array())).maxCoeff());
    if (diam < opt.simplex_tol && std::isfinite(fx[order[0]])) {
      out.converged = true;
      break;
    }

    const int worst = order[n];
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += x[order[i]];
    centroid /= n;

    const Eigen::VectorXd xr = centroid + (centroid - x[worst]);
    const double fr = f(xr);
    if (fr > fx[order[0]]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - x[worst]);
      const double fe = f(xe);
      if (fe > fr) x[worst] = xe, fx[worst] = fe;
      else x[worst] = xr, fx[worst] = fr;
      continue;
    }
    if (fr > fx[order[n - 1]]) {
      x[worst] = xr, fx[worst] = fr;
      continue;
    }
    const bool outside = fr > fx[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (x[worst] - centroid));
    const double fc = f(xc);
    if (fc > (outside ? fr : fx[worst])) {
      x[worst] = xc, fx[worst] = fc;
      continue;
    }
    for (int i = 1; i <= n; ++i) {
      x[order[i]] = x[order[0]] + 0.5 * (x[order[i]] - x[order[0]]);
      fx[order[i]] = f(x[order[i]]);
    }
  }
  return out;
}

Eigen::VectorXd fd_gradient(Wrapped& f, const Eigen::VectorXd& u) {
  Eigen::VectorXd g(u.size());
  for (int i = 0; i < u.size(); ++i) {
    const double h = 6e-6 * (1.0 + std::abs(u[i]));
    Eigen::VectorXd a = u, b = u;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

struct NewtonOutcome {
  int iterations = 0;
  bool converged = false;
};

bool grad_small(const Eigen::VectorXd& g, double fv, double tol) {
  return g.allFinite() && g.cwiseAbs().maxCoeff() <= tol * std::max(1.0, std::abs(fv));
}

// BFGS on -f from the current best point, backtracking Armijo steps
NewtonOutcome bfgs(Wrapped& f, const MaximizeOptions& opt) {
  const int n = static_cast<int>(f.best_u.size());
  Eigen::VectorXd u = f.best_u;
  double fu = f.best_f;
  Eigen::VectorXd g = fd_gradient(f, u);
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  NewtonOutcome out;
  for (; out.iterations < opt.max_newton_iter; ++out.iterations) {
    if (grad_small(g, fu, opt.grad_tol)) {
      out.converged = true;
      break;
    }
    if (!g.allFinite()) break;
    Eigen::VectorXd p = Hinv * g;  // ascent direction
    if (p.dot(g) <= 0) {
      Hinv.setIdentity();
      p = g;
    }
    // keep the first trial step moderate on the u scale
    const double pmax = p.cwiseAbs().maxCoeff();
    double step = pmax > 1.0 ? 1.0 / pmax : 1.0;
    Eigen::VectorXd un;
    double fn = kNegInf;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, step *= 0.5) {
      un = u + step * p;
      fn = f(un);
      if (fn >= fu + 1e-4 * step * p.dot(g)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (Hinv.isIdentity()) break;
      Hinv.setIdentity();
      continue;
    }
    const Eigen::VectorXd gn = fd_gradient(f, un);
    const Eigen::VectorXd s = un - u;
    const Eigen::VectorXd y = g - gn;  // gradient of -f
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    u = un, fu = fn, g = gn;
  }
  // the best point may be a gradient probe; test it too
  if (f.best_f > fu) {
    out.converged = grad_small(fd_gradient(f, f.best_u), f.best_f, opt.grad_tol);
  }
  return out;
}

}  // namespace

std::map<std::string, double> FitResult::named() const {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < theta.size(); ++i)
    out[i < names.size() ? names[i] : "theta" + std::to_string(i + 1)] = theta[i];
  return out;
}

FitResult maximize(const Objective& f, std::span<const double> theta0, std::span<const Bound> bounds,
                   const MaximizeOptions& options) {
  const int n = static_cast<int>(theta0.size());
  if (n == 0) throw Error("maximize: no parameters");
  Eigen::VectorXd u0(n);
  for (int i = 0; i < n; ++i) u0[i] = to_u(theta0[i], bound_at(bounds, i));

  Wrapped w(f, bounds, n);
  if (!std::isfinite(w(u0))) throw Error("objective is not finite at the starting point");

  const SimplexOutcome nm = nelder_mead(w, u0, options);
  const NewtonOutcome qn = bfgs(w, options);

  FitResult r;
  r.theta = w.theta(w.best_u);
  r.loglik = w.best_f;
  r.iterations = nm.iterations + qn.iterations;
  r.evaluations = w.evals;
  r.converged = nm.converged && qn.converged;
  if (r.converged) r.message = "converged";
  else if (!nm.converged) r.message = "simplex iteration cap reached";
  else r.message = "gradient criterion not met";
  return r;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, std::span<const double> theta, std::span<const Bound> bounds) {
  const int n = static_cast<int>(theta.size());
  std::vector<double> h(n);
  for (int i = 0; i < n; ++i) {
    const Bound b = bound_at(bounds, i);
    h[i] = 1e-4 * (std::abs(theta[i]) + 1.0);
    h[i] = std::min({h[i], 0.5 * (theta[i] - b.lo), 0.5 * (b.hi - theta[i])});
  }
  std::vector<double> t(theta.begin(), theta.end());
  auto at = [&](int i, double di, int j, double dj) {
    t[i] += di;
    t[j] += dj;
    const double v = f(t);
    t[i] -= di;
    t[j] -= dj;
    return v;
  };
  const double f0 = f(t);
  Eigen::MatrixXd H(n, n);
  for (int i = 0; i < n; ++i) {
    H(i, i) = (at(i, h[i], i, 0) - 2 * f0 + at(i, -h[i], i, 0)) / (h[i] * h[i]);
    for (int j = 0; j < i; ++j) {
      const double v = (at(i, h[i], j, h[j]) - at(i, h[i], j, -h[j]) - at(i, -h[i], j, h[j]) +
                        at(i, -h[i], j, -h[j])) /
                       (4 * h[i] * h[j]);
      H(i, j) = H(j, i) = v;
    }
  }
  return H;
}

FitResult fit(const LikelihoodEvaluator& ev, const Path& data, double delta, std::span<const double> theta0,
              std::span<const Bound> bounds, const MaximizeOptions& options) {
  const Objective f = [&](std::span<const double> th) { return ev.path_loglik(data, delta, th); };
  FitResult r = maximize(f, theta0, bounds, options);
  r.names = ev.model().symbols.params;
  const Objective safe = [&](std::span<const double> th) {
    try {
      return f(th);
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  r.hessian = numeric_hessian(safe, r.theta, bounds);
  if (r.hessian.allFinite()) {
    Eigen::LLT<Eigen::MatrixXd> llt(-r.hessian);
    if (llt.info() == Eigen::Success) {
      const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(r.hessian.rows(), r.hessian.cols()));
      r.std_errors = inv.diagonal().cwiseSqrt();
    }
  }
  return r;
}

Eigen::VectorXd FisherInfo::asymptotic_stdev(int n) const {
  const Eigen::MatrixXd inv = info.inverse();
  return (inv.diagonal() / static_cast<double>(n)).cwiseSqrt();
}

FisherInfo fisher_info(const TransitionDensity& l, const OUSpec& law, double delta, std::span<const double> theta,
                       int draws, std::uint64_t seed) {
  if (draws < 2) throw Error("fisher_info: need at least two draws");
  const int p = static_cast<int>(theta.size());
  const Eigen::MatrixXd L = stationary_cov(law).llt().matrixL();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(p, p), sum2 = Eigen::MatrixXd::Zero(p, p);
  for (int d = 0; d < draws; ++d) {
    RngStream rng(seed, static_cast<std::uint64_t>(d));
    Eigen::VectorXd z(law.dim());
    for (auto& v : z) v = rng.normal();
    const Eigen::VectorXd x0v = law.alpha + L * z;
    const std::vector<double> x0(x0v.data(), x0v.data() + x0v.size());
    const Eigen::VectorXd xv = ou_exact_step(law, x0, delta, rng);
    const std::vector<double> x(xv.data(), xv.data() + xv.size());
    const Eigen::MatrixXd H = -numeric_hessian([&](std::span<const double> th) { return l(x, x0, th); }, theta);
    sum += H;
    sum2 += H.cwiseProduct(H);
  }
  FisherInfo out;
  out.draws = draws;
  const Eigen::MatrixXd mean = sum / draws;
  out.info = 0.5 * (mean + mean.transpose());
  const Eigen::MatrixXd var = (sum2 / draws - mean.cwiseProduct(mean)) * (draws / (draws - 1.0));
  out.entry_se = (var.cwiseMax(0.0) / draws).cwiseSqrt();
  out.positive_definite = Eigen::LLT<Eigen::MatrixXd>(out.info).info() == Eigen::Success;
  return out;
}

}  // namespace difflik

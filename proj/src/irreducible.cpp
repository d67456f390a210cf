#include "difflik/irreducible.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "difflik/reducible.hpp"
#include "difflik/taylor.hpp"

namespace difflik {

namespace {

long long binomial(int n, int k) {
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

void axpy(NumericPoly& dst, const NumericPoly& src, double a) {
  const int n = std::min(dst.size(), src.size());
  for (int i = 0; i < n; ++i) dst[i] += a * src[i];
}

std::vector<NumericPoly> gradient(const NumericPoly& p) {
  std::vector<NumericPoly> g;
  for (int i = 0; i < p.dim(); ++i) g.push_back(poly_partial(p, i));
  return g;
}

// s_j = sum_i v_ij dP/dx_i
std::vector<NumericPoly> v_times(const Ingredients& ing, const std::vector<NumericPoly>& gP, int deg) {
  const int m = ing.dim;
  std::vector<NumericPoly> s;
  for (int j = 0; j < m; ++j) {
    NumericPoly sj(m, std::max(deg, 0), ing.Dv.center());
    for (int i = 0; i < m; ++i) poly_mul_accumulate(sj, ing.v[i * m + j], gP[i]);
    s.push_back(std::move(sj));
  }
  return s;
}

// out += a * sum_j s_j dQ/dx_j
void dot_into(NumericPoly& out, const std::vector<NumericPoly>& s, const std::vector<NumericPoly>& gQ, double a) {
  NumericPoly t(out.dim(), out.degree(), out.center());
  for (std::size_t j = 0; j < s.size(); ++j) poly_mul_accumulate(t, s[j], gQ[j]);
  axpy(out, t, a);
}

// out += a * (sum_j b_j dP/dx_j + 1/2 sum_ij v_ij d2P/dx_i dx_j)
void generator_into(NumericPoly& out, const Ingredients& ing, const NumericPoly& P, double a) {
  const int m = ing.dim;
  NumericPoly t(m, out.degree(), out.center());
  const auto g = gradient(P);
  for (int j = 0; j < m; ++j) {
    poly_mul_accumulate(t, ing.b[j], g[j]);
    const NumericPoly half = poly_scale(g[j], 0.5);
    for (int i = 0; i < m; ++i) poly_mul_accumulate(t, ing.v[i * m + j], poly_partial(half, i));
  }
  axpy(out, t, a);
}

// C-hat: C^(0) carries -D_v inside the forward equation.
NumericPoly hat(const std::vector<NumericPoly>& C, int a, const Ingredients& ing) {
  if (a != 0) return C[a + 1];
  NumericPoly h = C[1];
  axpy(h, ing.Dv, -1.0);
  return h;
}

// G^(k), k >= 1, at order deg.
NumericPoly compute_Gx(int k, const std::vector<NumericPoly>& C, const Ingredients& ing, int deg) {
  const int m = ing.dim;
  NumericPoly G(m, deg, ing.Dv.center());
  if (k == 1) axpy(G, ing.A, 1.0);
  std::vector<NumericPoly> Ch;
  for (int a = 0; a < k; ++a) Ch.push_back(hat(C, a, ing));
  generator_into(G, ing, Ch[k - 1], 1.0);
  std::vector<std::vector<NumericPoly>> grads;
  for (int a = 0; a < k; ++a) grads.push_back(gradient(Ch[a]));
  for (int a = 0; a < k; ++a) {
    const int a2 = k - 1 - a;
    if (a2 < a) break;
    const double w = 0.5 * static_cast<double>(binomial(k - 1, a)) * (a == a2 ? 1.0 : 2.0);
    dot_into(G, v_times(ing, grads[a], deg), grads[a2], w);
  }
  return G;
}

// level r of sum_j w_j dP/dx_j from the levels of P below r, added into T
void level_dot(NumericPoly& T, const std::vector<NumericPoly>& w, const NumericPoly& P, int r) {
  const MonomialBasis& B = T.basis();
  const int m = T.dim();
  for (int s = 1; s < r; ++s)
    for (int idx = B.level_begin(s); idx < B.level_end(s); ++idx) {
      if (P[idx] == 0.0) continue;
      const MultiIndex& mi = B.monomial(idx);
      for (int j = 0; j < m; ++j) {
        if (mi[j] == 0) continue;
        const double c = P[idx] * mi[j];
        const int low = B.lower(idx, j);
        const NumericPoly& wj = w[j];
        const int t = r - s + 1;
        const int end = std::min(B.level_end(t), wj.size());
        for (int a = B.level_begin(t); a < end; ++a)
          if (wj[a] != 0.0) T[B.product(a, low)] += wj[a] * c;
      }
    }
}

double level_max(const NumericPoly& p, int r) {
  const auto& B = p.basis();
  double s = 0.0;
  for (int i = B.level_begin(r); i < std::min(B.level_end(r), p.size()); ++i) s = std::max(s, std::abs(p[i]));
  return s;
}

double max_abs(const NumericPoly& p) {
  double s = 0.0;
  for (int i = 0; i < p.size(); ++i) s = std::max(s, std::abs(p[i]));
  return s;
}

constexpr double kResidualTol = 1e-9;

void check_residual(int k, const NumericPoly& f, double scale, double& worst) {
  const double r = max_abs(f) / std::max(1.0, scale);
  worst = std::max(worst, r);
  if (!(r < kResidualTol))
    throw Error("irreducible expansion: residual check failed at k = " + std::to_string(k) + " (scaled residual " +
                std::to_string(r) + ")");
}

}  // namespace

std::vector<int> order_schedule(int K) {
  if (K < 0 || K > kMaxOrder) throw Error("expansion order K must be in 0.." + std::to_string(kMaxOrder));
  std::vector<int> j;
  for (int k = -1; k <= K; ++k) j.push_back(2 * (K + 1 - k));
  return j;
}

NumericPoly leading_quadratic(const Eigen::MatrixXd& v0, int degree, Center center) {
  const int m = static_cast<int>(v0.rows());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(v0);
  if (!lu.isInvertible()) throw Error("leading_quadratic: v(x0) is singular");
  const Eigen::MatrixXd V = lu.inverse();
  NumericPoly c(m, std::max(degree, 2), std::move(center));
  MultiIndex i(m, 0);
  for (int a = 0; a < m; ++a)
    for (int b = a; b < m; ++b) {
      ++i[a];
      ++i[b];
      c.set_coefficient(i, a == b ? -0.5 * V(a, a) : -0.5 * (V(a, b) + V(b, a)));
      --i[a];
      --i[b];
    }
  return c;
}

double level_scale(int k, int r) {
  if (k == -1) return 2.0 * r - 2.0;
  if (k == 0) return r;
  return 1.0 + static_cast<double>(r) / k;
}

NumericPoly assemble_f(int k, const std::vector<NumericPoly>& C, const Ingredients& ing, int K) {
  if (static_cast<int>(C.size()) < k + 2) throw Error("assemble_f: missing coefficient");
  const int deg = order_schedule(K)[k + 1];
  const int m = ing.dim;
  NumericPoly f(m, deg, ing.Dv.center());
  const auto g1 = gradient(C[0]);
  if (k == -1) {
    axpy(f, C[0], -2.0);
    dot_into(f, v_times(ing, g1, deg), g1, -1.0);
    return f;
  }
  const auto w = v_times(ing, g1, deg);
  if (k == 0) {
    f[0] = -0.5 * m;
    generator_into(f, ing, C[0], -1.0);
    dot_into(f, w, gradient(hat(C, 0, ing)), -1.0);
    return f;
  }
  axpy(f, C[k + 1], 1.0);
  dot_into(f, w, gradient(C[k + 1]), -1.0 / k);
  axpy(f, compute_Gx(k, C, ing, deg), -1.0);
  return f;
}

double solve_level(int k, int r, std::vector<NumericPoly>& C, const Ingredients& ing, int K) {
  NumericPoly& P = C[k + 1];
  const auto& B = P.basis();
  const int lo = B.level_begin(r), hi = B.level_end(r), n = hi - lo;
  for (int i = lo; i < hi; ++i) P[i] = 0.0;
  const NumericPoly f0 = assemble_f(k, C, ing, K);
  Eigen::MatrixXd M(n, n);
  Eigen::VectorXd rhs(n);
  for (int c = 0; c < n; ++c) {
    P[lo + c] = 1.0;
    const NumericPoly fc = assemble_f(k, C, ing, K);
    P[lo + c] = 0.0;
    for (int e = 0; e < n; ++e) M(e, c) = fc[lo + e] - f0[lo + e];
    rhs(c) = -f0[lo + c];
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-12))
    throw Error("irreducible expansion: singular level system (k = " + std::to_string(k) + ", level " +
                std::to_string(r) + ", rcond " + std::to_string(rcond) + ")");
  const Eigen::VectorXd beta = lu.solve(rhs);
  for (int c = 0; c < n; ++c) P[lo + c] = beta(c);
  return rcond;
}

double expansion_log_density(const IrreducibleExpansion& e, std::span<const double> x, double delta) {
  std::vector<double> d(e.dim);
  for (int i = 0; i < e.dim; ++i) d[i] = x[i] - e.x0[i];
  return assemble_log_density(e.C, d, delta, e.dim);
}

IrreducibleBuilder::IrreducibleBuilder(std::shared_ptr<const DiffusionModel> model, int K)
    : model_(std::move(model)), K_(K) {
  order_schedule(K);
  v_ = compute_v(*model_);
  Dv_ = compute_Dv(*model_);
  Dv_compiled_ = CompiledExpression(Dv_);
  diffusion_param_free_ = referenced_params(Dv_).empty();
  for (const auto& e : v_) diffusion_param_free_ = diffusion_param_free_ && referenced_params(e).empty();
}

Ingredients IrreducibleBuilder::ingredients(std::span<const double> x0, std::span<const double> theta,
                                            TaylorMemo* memo) const {
  const int m = dim();
  Ingredients ing;
  ing.dim = m;
  ing.J = order_schedule(K_)[0];
  const Center center = make_center(x0);
  auto expand = [&](const Expression& e) {
    NumericPoly p = propagate_taylor(e, x0, theta, ing.J, m, memo);
    p.set_center(center);
    return p;
  };
  for (const auto& e : model_->mu) ing.mu.push_back(expand(e));
  ing.v.resize(m * m);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      ing.v[i * m + j] = expand(v_[i * m + j]);
      if (j != i) ing.v[j * m + i] = ing.v[i * m + j];
    }
  ing.Dv = expand(Dv_);
  ing.A = NumericPoly(m, std::max(ing.J - 2, 0), center);
  for (int j = 0; j < m; ++j) {
    NumericPoly bj = poly_scale(ing.mu[j], -1.0).truncated(ing.J - 1);
    for (int i = 0; i < m; ++i) {
      const NumericPoly dv = poly_partial(ing.v[i * m + j], i);
      axpy(bj, dv, 1.0);
      axpy(ing.A, poly_partial(dv, j), 0.5);
    }
    axpy(ing.A, poly_partial(ing.mu[j], j), -1.0);
    ing.b.push_back(std::move(bj));
  }
  return ing;
}

NumericPoly IrreducibleBuilder::solve_leading(const Ingredients& ing, LevelSolver solver) const {
  const int m = ing.dim;
  const int J = ing.J;
  Eigen::MatrixXd v0(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) v0(i, j) = ing.v[i * m + j][0];
  std::vector<NumericPoly> C{leading_quadratic(v0, J, ing.Dv.center())};
  double scale = 0.0;
  for (int r = 3; r <= J; ++r) {
    if (solver == LevelSolver::Probing) {
      solve_level(-1, r, C, ing, K_);
    } else {
      // f_r = (2r - 2) beta_r - [grad C' v grad C]_r with level r of C still zero
      const auto g = gradient(C[0].truncated(r - 1));
      NumericPoly Q(m, r, ing.Dv.center());
      dot_into(Q, v_times(ing, g, r - 1), g, 1.0);
      const auto& B = Q.basis();
      for (int i = B.level_begin(r); i < B.level_end(r); ++i) C[0][i] = Q[i] / level_scale(-1, r);
    }
    scale = std::max(scale, level_scale(-1, r) * level_max(C[0], r));
  }
  double worst = 0.0;
  check_residual(-1, assemble_f(-1, C, ing, K_), scale, worst);
  return C[0];
}

IrreducibleExpansion IrreducibleBuilder::build(std::span<const double> x0, std::span<const double> theta,
                                               LevelSolver solver, const NumericPoly* leading,
                                               TaylorMemo* memo) const {
  const int m = dim();
  const Ingredients ing = ingredients(x0, theta, memo);
  const std::vector<int> j = order_schedule(K_);
  IrreducibleExpansion out;
  out.K = K_;
  out.dim = m;
  out.j = j;
  out.x0.assign(x0.begin(), x0.end());
  out.theta.assign(theta.begin(), theta.end());
  auto& C = out.C;
  if (leading) {
    C.push_back(*leading);
    C[0].set_center(ing.Dv.center());
  } else {
    C.push_back(solve_leading(ing, solver));
  }

  const auto g1 = gradient(C[0]);
  const auto w = v_times(ing, g1, j[1]);  // v grad C^(-1)
  for (int k = 0; k <= K_; ++k) {
    const int deg = j[k + 1];
    C.emplace_back(m, deg, ing.Dv.center());
    NumericPoly& P = C.back();
    // f = inhom - c * sum_j w_j dP/dx_j  (+ P for k >= 1)
    NumericPoly inhom(m, deg, ing.Dv.center());
    double c;
    if (k == 0) {
      inhom[0] = -0.5 * m;
      generator_into(inhom, ing, C[0], -1.0);
      dot_into(inhom, w, gradient(ing.Dv), 1.0);
      c = 1.0;
    } else {
      axpy(inhom, compute_Gx(k, C, ing, deg), -1.0);
      c = 1.0 / k;
    }
    double scale = max_abs(inhom);
    const int r0 = k == 0 ? 1 : 0;
    NumericPoly T(m, deg, ing.Dv.center());
    for (int r = r0; r <= deg; ++r) {
      if (solver == LevelSolver::Probing) {
        solve_level(k, r, C, ing, K_);
        continue;
      }
      level_dot(T, w, P, r);
      const auto& B = P.basis();
      for (int i = B.level_begin(r); i < B.level_end(r); ++i)
        P[i] = -(inhom[i] - c * T[i]) / level_scale(k, r);
    }
    scale = std::max(scale, max_abs(P));
    check_residual(k, assemble_f(k, C, ing, K_), scale, out.max_residual);
  }
  return out;
}

double IrreducibleBuilder::Dv(std::span<const double> x, std::span<const double> theta) const {
  return Dv_compiled_(x, theta);
}

double IrreducibleBuilder::log_density(std::span<const double> x, std::span<const double> x0, double delta,
                                       std::span<const double> theta) const {
  const IrreducibleExpansion e = build(x0, theta);
  return expansion_log_density(e, x, delta) - Dv(x, theta);
}

}  // namespace difflik

#include "difflik/reducible.hpp"

#include <cmath>
#include <numbers>

#include "difflik/taylor.hpp"

namespace difflik {

namespace {

long long binomial(int n, int k) {
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// dst += scale * src over the indices dst can hold.
template <class S>
void add_into(DisplacementPoly<S>& dst, const DisplacementPoly<S>& src, double scale) {
  using Ops = ScalarOps<S>;
  const int n = std::min(dst.size(), src.size());
  for (int i = 0; i < n; ++i) {
    if (Ops::is_zero(src[i])) continue;
    const S term = scale == 1.0 ? src[i] : Ops::mul(Ops::from(scale), src[i]);
    dst[i] = Ops::add(dst[i], term);
  }
}

void check_order(int K) {
  if (K < 0 || K > kMaxOrder) throw Error("expansion order K must be in 0.." + std::to_string(kMaxOrder));
}

std::optional<int> drift_degree(const ReducedModel& model) {
  int p = 0;
  for (const auto& e : model.mu_y) {
    const auto d = polynomial_degree(e);
    if (!d) return std::nullopt;
    p = std::max(p, *d);
  }
  return p;
}

}  // namespace

template <class S>
DisplacementPoly<S> coeff_leading(int dim, int degree, Center center) {
  DisplacementPoly<S> c(dim, std::max(degree, 2), std::move(center));
  MultiIndex i(dim, 0);
  for (int j = 0; j < dim; ++j) {
    i[j] = 2;
    c.set_coefficient(i, ScalarOps<S>::from(-0.5));
    i[j] = 0;
  }
  return c;
}

template <class S>
DisplacementPoly<S> coeff_C0(const std::vector<DisplacementPoly<S>>& mu, int degree) {
  const int m = static_cast<int>(mu.size());
  Center center;
  for (const auto& p : mu) center = detail::merged_center(center, p.center());
  DisplacementPoly<S> out(m, degree, center);
  if (degree < 1) return out;
  for (int i = 0; i < m; ++i) {
    const DisplacementPoly<S> avg = radial_integrate(mu[i].truncated(degree - 1), 1);
    add_into(out, poly_times_displacement(avg, i), 1.0);
  }
  return out;
}

template <class S>
DisplacementPoly<S> compute_G(int k, const std::vector<DisplacementPoly<S>>& C,
                              const std::vector<DisplacementPoly<S>>& mu, int degree) {
  if (k < 1) throw Error("compute_G: k must be >= 1");
  if (static_cast<int>(C.size()) < k + 1) throw Error("compute_G: missing lower-order coefficient");
  const int m = static_cast<int>(mu.size());
  const DisplacementPoly<S>& prev = C[k];  // C^(k-1)
  DisplacementPoly<S> G(m, degree, prev.center());

  std::vector<std::vector<DisplacementPoly<S>>> grad(k);  // grad[h][i] = d C^(h) / d y_i
  for (int h = 0; h < k; ++h)
    for (int i = 0; i < m; ++i) grad[h].push_back(poly_partial(C[h + 1], i));

  for (int i = 0; i < m; ++i) {
    if (k == 1) add_into(G, poly_partial(mu[i], i), -1.0);
    poly_mul_accumulate(G, poly_scale(mu[i], -1.0), grad[k - 1][i]);
    add_into(G, poly_partial(grad[k - 1][i], i), 0.5);
    for (int h = 0; h < k; ++h) {
      const int h2 = k - 1 - h;
      if (h2 < h) break;
      // pairs (h, h2) and (h2, h) together
      const double w = 0.5 * static_cast<double>(binomial(k - 1, h)) * (h == h2 ? 1.0 : 2.0);
      poly_mul_accumulate(G, poly_scale(grad[h][i], w), grad[h2][i]);
    }
  }
  return G;
}

template <class S>
DisplacementPoly<S> coeff_Ck(int k, const DisplacementPoly<S>& G) {
  return radial_integrate(G, k);
}

#define DIFFLIK_INSTANTIATE(S)                                                                                   \
  template DisplacementPoly<S> coeff_leading<S>(int, int, Center);                                               \
  template DisplacementPoly<S> coeff_C0<S>(const std::vector<DisplacementPoly<S>>&, int);                        \
  template DisplacementPoly<S> compute_G<S>(int, const std::vector<DisplacementPoly<S>>&,                        \
                                            const std::vector<DisplacementPoly<S>>&, int);                       \
  template DisplacementPoly<S> coeff_Ck<S>(int, const DisplacementPoly<S>&);
DIFFLIK_INSTANTIATE(double)
DIFFLIK_INSTANTIATE(Expression)
#undef DIFFLIK_INSTANTIATE

int reducible_exact_degree(int p, int K) {
  return std::max({p * (K + 1), p + 1 + K * std::max(p - 1, 0), 2 * (K + 2)});
}

ReducibleExpansion build_reducible_symbolic(const ReducedModel& model, int K) {
  check_order(K);
  const auto p = drift_degree(model);
  if (!p) throw Error("symbolic reducible expansion requires a drift polynomial in y; use numeric mode");
  const int m = model.dim;
  const int J = reducible_exact_degree(*p, K);
  std::vector<SymbolicPoly> mu;
  for (const auto& e : model.mu_y) mu.push_back(taylor_symbolic(e, *p, m).truncated(J));

  std::vector<SymbolicPoly> C;
  C.push_back(coeff_leading<Expression>(m));
  C.push_back(coeff_C0(mu, J));
  for (int k = 1; k <= K; ++k) C.push_back(coeff_Ck(k, compute_G(k, C, mu, J)));
  for (auto& c : C) c = c.truncated(std::max(c.effective_degree(), 0));

  ReducibleExpansion out;
  out.K = K;
  out.dim = m;
  out.mode = ExpansionMode::Symbolic;
  out.symbolic = std::move(C);
  return out;
}

ReducibleExpansion build_reducible_numeric(const ReducedModel& model, int K, std::span<const double> y0,
                                           std::span<const double> theta) {
  check_order(K);
  const int m = model.dim;
  const Center center = make_center(y0);
  const auto p = drift_degree(model);
  std::vector<NumericPoly> C;
  ReducibleExpansion out;
  if (p) {
    const int J = reducible_exact_degree(*p, K);
    std::vector<NumericPoly> mu;
    for (const auto& e : model.mu_y) mu.push_back(taylor(e, y0, theta, *p, m).truncated(J));
    C.push_back(coeff_leading<double>(m, 2, center));
    C.push_back(coeff_C0(mu, J));
    for (int k = 1; k <= K; ++k) C.push_back(coeff_Ck(k, compute_G(k, C, mu, J)));
  } else {
    const int Jmu = 2 * (K + 2);
    std::vector<NumericPoly> mu;
    for (const auto& e : model.mu_y) mu.push_back(propagate_taylor(e, y0, theta, Jmu, m));
    C.push_back(coeff_leading<double>(m, 2, center));
    C.push_back(coeff_C0(mu, 2 * (K + 1)));
    for (int k = 1; k <= K; ++k) C.push_back(coeff_Ck(k, compute_G(k, C, mu, 2 * (K + 1 - k))));
    out.truncated = true;
  }
  out.K = K;
  out.dim = m;
  out.mode = ExpansionMode::Numeric;
  out.numeric = std::move(C);
  out.y0.assign(y0.begin(), y0.end());
  out.theta.assign(theta.begin(), theta.end());
  return out;
}

double assemble_log_density(const std::vector<NumericPoly>& C, std::span<const double> d, double delta, int dim) {
  if (!(delta > 0.0)) throw Error("time step must be positive");
  double l = -0.5 * dim * std::log(2.0 * std::numbers::pi * delta) + evaluate(C[0], d) / delta;
  double dk = 1.0;
  for (std::size_t k = 1; k < C.size(); ++k) {
    l += evaluate(C[k], d) * dk;
    dk *= delta / static_cast<double>(k);
  }
  return l;
}

ReducibleEvaluator::ReducibleEvaluator(std::shared_ptr<const ReducedModel> model, int K)
    : model_(std::move(model)), K_(K) {
  check_order(K);
  polynomial_ = drift_degree(*model_).has_value();
  if (polynomial_) {
    symbolic_ = build_reducible_symbolic(*model_, K).symbolic;
    for (const auto& c : symbolic_) {
      std::vector<std::unique_ptr<CompiledExpression>> row;
      for (int i = 0; i < c.size(); ++i)
        row.push_back(c[i].is_zero() ? nullptr : std::make_unique<CompiledExpression>(c[i]));
      compiled_.push_back(std::move(row));
    }
  }
  for (const auto& g : model_->gamma) gamma_.emplace_back(g);
  Dv_ = CompiledExpression(model_->Dv);
}

std::vector<NumericPoly> ReducibleEvaluator::coefficients(std::span<const double> y0,
                                                          std::span<const double> theta) const {
  if (!polynomial_) return build_reducible_numeric(*model_, K_, y0, theta).numeric;
  const Center center = make_center(y0);
  std::vector<NumericPoly> C;
  C.reserve(symbolic_.size());
  for (std::size_t k = 0; k < symbolic_.size(); ++k) {
    NumericPoly p(dim(), symbolic_[k].degree(), center);
    for (int i = 0; i < p.size(); ++i)
      if (compiled_[k][i]) p[i] = (*compiled_[k][i])(y0, theta);
    C.push_back(std::move(p));
  }
  return C;
}

double ReducibleEvaluator::log_density_y(std::span<const double> y, std::span<const double> y0, double delta,
                                         std::span<const double> theta) const {
  const int m = dim();
  std::vector<double> d(m);
  for (int i = 0; i < m; ++i) d[i] = y[i] - y0[i];
  return assemble_log_density(coefficients(y0, theta), d, delta, m);
}

std::vector<double> ReducibleEvaluator::to_y(std::span<const double> x, std::span<const double> theta) const {
  std::vector<double> y(gamma_.size());
  for (std::size_t i = 0; i < gamma_.size(); ++i) y[i] = gamma_[i](x, theta);
  return y;
}

double ReducibleEvaluator::Dv(std::span<const double> x, std::span<const double> theta) const {
  return Dv_(x, theta);
}

double ReducibleEvaluator::log_density_x(std::span<const double> x, std::span<const double> x0, double delta,
                                         std::span<const double> theta) const {
  const std::vector<double> y = to_y(x, theta);
  const std::vector<double> y0 = to_y(x0, theta);
  return -Dv(x, theta) + log_density_y(y, y0, delta, theta);
}

}  // namespace difflik

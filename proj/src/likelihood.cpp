#include "difflik/likelihood.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "difflik/taylor.hpp"

namespace difflik {

namespace {

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

bool same_bits(const std::vector<double>& a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

std::vector<std::uint64_t> bit_key(std::span<const double> x) {
  std::vector<std::uint64_t> k(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) k[i] = std::bit_cast<std::uint64_t>(x[i]);
  return k;
}

// value, gradient and Hessian of e at x from its second-order Taylor polynomial
struct Local2 {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> hess;
};

Local2 local2(const Expression& e, std::span<const double> x, std::span<const double> theta, int m) {
  const NumericPoly p = propagate_taylor(e, x, theta, 2, m);
  Local2 out;
  out.grad.assign(m, 0.0);
  out.hess.assign(m * m, 0.0);
  const std::vector<double> zero(m, 0.0);
  evaluate_with_derivatives(p, zero, out.value, out.grad, out.hess);
  return out;
}

}  // namespace

PathKind parse_path_kind(const std::string& s) {
  if (s == "reducible") return PathKind::Reducible;
  if (s == "irreducible") return PathKind::Irreducible;
  if (s == "auto") return PathKind::Auto;
  throw Error("unknown mode '" + s + "' (expected reducible, irreducible or auto)");
}

std::string to_string(PathKind k) {
  switch (k) {
    case PathKind::Reducible: return "reducible";
    case PathKind::Irreducible: return "irreducible";
    case PathKind::Auto: return "auto";
  }
  return "?";
}

LikelihoodEvaluator::LikelihoodEvaluator(std::shared_ptr<const DiffusionModel> model, int K, PathKind kind,
                                         std::span<const double> theta)
    : model_(std::move(model)), K_(K), kind_(kind) {
  irreducible_ = std::make_unique<IrreducibleBuilder>(model_, K);
  Dv_expr_ = compute_Dv(*model_);
  v_expr_ = compute_v(*model_);
  Dv_ = CompiledExpression(Dv_expr_);
  std::vector<double> th = theta.empty() ? std::vector<double>(model_->num_params(), 1.0) : to_vec(theta);

  if (kind_ == PathKind::Irreducible) {
    note_ = "irreducible (requested)";
    return;
  }
  const ReducibilityReport rep = check_reducibility(*model_, th);
  std::string why;
  if (rep.reducible) {
    try {
      auto reduced = std::make_shared<ReducedModel>(derive_reduced_model(*model_, th));
      reducible_ = std::make_unique<ReducibleEvaluator>(std::move(reduced), K);
    } catch (const Error& e) {
      why = e.what();
    }
  } else {
    why = "reducibility residual " + std::to_string(rep.max_residual);
  }
  if (reducible_) {
    note_ = kind_ == PathKind::Auto ? "reducible (auto)" : "reducible (requested)";
    kind_ = PathKind::Reducible;
  } else if (kind_ == PathKind::Reducible) {
    throw Error("reducible path unavailable: " + why);
  } else {
    note_ = "irreducible (auto: " + why + ")";
    kind_ = PathKind::Irreducible;
  }
}

std::shared_ptr<const IrreducibleExpansion> LikelihoodEvaluator::irreducible_at(std::span<const double> x0,
                                                                              std::span<const double> theta) const {
  const auto key = bit_key(x0);
  PointCache point;
  {
    std::lock_guard lock(mutex_);
    if (!same_bits(cached_theta_, theta)) {
      cache_.clear();
      cached_theta_ = to_vec(theta);
    }
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    auto& slot = point_cache_[key];
    if (!slot.memo) slot.memo = std::make_shared<TaylorMemo>(x0, order_schedule(K_)[0], model_->dim());
    point = slot;
  }
  if (!point.leading && irreducible_->diffusion_param_free()) {
    point.leading = std::make_shared<const NumericPoly>(
        irreducible_->solve_leading(irreducible_->ingredients(x0, theta, point.memo.get())));
    std::lock_guard lock(mutex_);
    point_cache_[key].leading = point.leading;
  }
  auto e = std::make_shared<const IrreducibleExpansion>(
      irreducible_->build(x0, theta, LevelSolver::Direct, point.leading.get(), point.memo.get()));
  std::lock_guard lock(mutex_);
  if (same_bits(cached_theta_, theta)) cache_.emplace(key, e);
  return e;
}

double LikelihoodEvaluator::log_transition(std::span<const double> x, std::span<const double> x0, double delta,
                                           std::span<const double> theta) const {
  if (!(delta > 0.0)) throw Error("time step must be positive");
  if (!model_->in_domain(x0)) throw Error("x0 outside the model domain");
  if (!model_->in_domain(x)) throw Error("x outside the model domain");
  if (kind_ == PathKind::Reducible) return reducible_->log_density_x(x, x0, delta, theta);
  const auto e = irreducible_at(x0, theta);
  const double dv = Dv_(x, theta);
  if (!std::isfinite(dv)) throw EvaluationError("non-finite value", "D_v(x)");
  return expansion_log_density(*e, x, delta) - dv;
}

double LikelihoodEvaluator::path_loglik(const Path& data, double delta, std::span<const double> theta) const {
  if (data.size() < 2) throw Error("need at least two observations");
  double sum = 0.0;
  for (std::size_t i = 1; i < data.size(); ++i) {
    try {
      sum += log_transition(data[i], data[i - 1], delta, theta);
    } catch (const Error& e) {
      throw Error("transition " + std::to_string(i) + ": " + e.what());
    }
  }
  return sum;
}

double LikelihoodEvaluator::pde_residual(std::span<const double> x, std::span<const double> x0, double delta,
                                         std::span<const double> theta) const {
  if (!(delta > 0.0)) throw Error("time step must be positive");
  const int m = model_->dim();
  const auto e = irreducible_at(x0, theta);
  std::vector<double> d(m);
  for (int i = 0; i < m; ++i) d[i] = x[i] - x0[i];

  // l and its derivatives; dl/dD term by term
  const Local2 dv = local2(Dv_expr_, x, theta, m);
  Eigen::VectorXd g = -Eigen::Map<const Eigen::VectorXd>(dv.grad.data(), m);
  Eigen::MatrixXd H = -Eigen::Map<const Eigen::MatrixXd>(dv.hess.data(), m, m);
  double lt = -0.5 * m / delta;
  std::vector<double> cg(m), ch(m * m);
  double fact = 1.0;  // (k-1)!
  for (int k = -1; k <= K_; ++k) {
    double c = 0.0;
    evaluate_with_derivatives(e->C[k + 1], d, c, cg, ch);
    double w;  // D-weight of C^(k) in l
    if (k == -1) {
      w = 1.0 / delta;
      lt -= c / (delta * delta);
    } else if (k == 0) {
      w = 1.0;
    } else {
      if (k > 1) fact *= (k - 1);
      w = std::pow(delta, k) / (fact * k);
      lt += c * std::pow(delta, k - 1) / fact;
    }
    g += w * Eigen::Map<const Eigen::VectorXd>(cg.data(), m);
    H += w * Eigen::Map<const Eigen::MatrixXd>(ch.data(), m, m);
  }

  Eigen::MatrixXd v(m, m);
  Eigen::VectorXd b(m);
  double A = 0.0;
  for (int j = 0; j < m; ++j) {
    const Local2 mu = local2(model_->mu[j], x, theta, m);
    b[j] = -mu.value;
    A -= mu.grad[j];
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const Local2 vij = local2(v_expr_[i * m + j], x, theta, m);
      v(i, j) = vij.value;
      b[j] += vij.grad[i];
      A += 0.5 * vij.hess[i * m + j];
    }
  const double rhs = A + b.dot(g) + 0.5 * (v.cwiseProduct(H)).sum() + 0.5 * g.dot(v * g);
  return lt - rhs;
}

}  // namespace difflik

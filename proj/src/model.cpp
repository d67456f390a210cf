#include "difflik/model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <sstream>

namespace difflik {

namespace {

constexpr int kMaxRetries = 50;

std::string point_string(std::span<const double> x) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

Expression c(double v) { return Expression::constant(v); }
Expression S(ExprKind k, const Expression& a, const Expression& b = {}) { return make_simplified(k, a, b); }

std::vector<Expression> identity_replacements(int m) {
  std::vector<Expression> r;
  for (int j = 0; j < m; ++j) r.push_back(Expression::state(j));
  return r;
}

// e with state `var` replaced by `value`.
Expression substitute_one(const Expression& e, int m, int var, const Expression& value) {
  auto r = identity_replacements(m);
  r[var] = value;
  return simplify(substitute(e, r));
}

}  // namespace

bool DiffusionModel::in_domain(std::span<const double> x) const {
  for (int i = 0; i < dim(); ++i)
    if (!domain[i].contains(x[i])) return false;
  return true;
}

std::vector<double> DiffusionModel::theta_from(const std::map<std::string, double>& values) const {
  std::vector<double> theta;
  for (const auto& name : symbols.params) {
    auto it = values.find(name);
    if (it == values.end()) throw Error("missing value for parameter " + name);
    theta.push_back(it->second);
  }
  for (const auto& [name, v] : values)
    if (!symbols.param_index(name)) throw Error("unknown parameter " + name);
  return theta;
}

DomainSampler::DomainSampler(const std::vector<Interval>& domain, std::uint64_t seed)
    : domain_(domain), rng_(seed) {}

std::vector<double> DomainSampler::next() {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(domain_.size());
  for (std::size_t i = 0; i < domain_.size(); ++i) {
    const Interval& d = domain_[i];
    const bool lo = std::isfinite(d.lo), hi = std::isfinite(d.hi);
    if (lo && hi) {
      x[i] = d.lo + (d.hi - d.lo) * (0.02 + 0.96 * u(rng_));
    } else if (lo) {
      x[i] = d.lo + std::exp(n(rng_));
    } else if (hi) {
      x[i] = d.hi - std::exp(n(rng_));
    } else {
      x[i] = 2.0 * n(rng_);
    }
  }
  return x;
}

std::vector<double> DomainSampler::anchor() const {
  std::vector<double> x(domain_.size());
  for (std::size_t i = 0; i < domain_.size(); ++i) {
    const Interval& d = domain_[i];
    if (d.contains(0.0)) x[i] = 0.0;
    else if (std::isfinite(d.lo) && !std::isfinite(d.hi)) x[i] = d.lo + 1.0;
    else if (std::isfinite(d.hi) && !std::isfinite(d.lo)) x[i] = d.hi - 1.0;
    else x[i] = 0.5 * (d.lo + d.hi);
  }
  return x;
}

Expression determinant(std::span<const Expression> a, int n) {
  if (n == 1) return a[0];
  if (n == 2) return S(ExprKind::Sub, S(ExprKind::Mul, a[0], a[3]), S(ExprKind::Mul, a[1], a[2]));
  Expression det = c(0.0);
  std::vector<Expression> minor(static_cast<std::size_t>(n - 1) * (n - 1));
  for (int col = 0; col < n; ++col) {
    if (a[col].is_zero()) continue;
    for (int r = 1; r < n; ++r) {
      int k = 0;
      for (int cc = 0; cc < n; ++cc)
        if (cc != col) minor[(r - 1) * (n - 1) + k++] = a[r * n + cc];
    }
    const Expression term = S(ExprKind::Mul, a[col], determinant(minor, n - 1));
    det = (col % 2 == 0) ? S(ExprKind::Add, det, term) : S(ExprKind::Sub, det, term);
  }
  return det;
}

std::vector<Expression> compute_v(const DiffusionModel& model) {
  const int m = model.dim();
  std::vector<Expression> v(static_cast<std::size_t>(m) * m);
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      Expression sum = c(0.0);
      for (int k = 0; k < m; ++k)
        sum = S(ExprKind::Add, sum, S(ExprKind::Mul, model.sigma_at(i, k), model.sigma_at(j, k)));
      v[i * m + j] = sum;
      v[j * m + i] = sum;
    }
  }
  return v;
}

Expression compute_Dv(const DiffusionModel& model) {
  const std::vector<Expression> v = compute_v(model);
  return S(ExprKind::Mul, c(0.5), S(ExprKind::Ln, determinant(v, model.dim())));
}

bool ValidationReport::passed() const {
  for (const auto& issue : issues)
    if (issue.hard) return false;
  return true;
}

ValidationReport validate_model(const DiffusionModel& model, std::span<const double> theta, int probes,
                                std::uint64_t seed) {
  const int m = model.dim();
  ValidationReport report;
  report.unchecked.push_back("growth conditions on mu and sigma (not checkable by sampling)");
  report.unchecked.push_back("boundary behavior");

  const std::vector<Expression> v = compute_v(model);
  std::vector<CompiledExpression> vc;
  for (const auto& e : v) vc.emplace_back(e);

  // entries and their first two derivatives
  struct Checked {
    std::string label;
    CompiledExpression f;
  };
  std::vector<Checked> smooth;
  auto add_smooth = [&](const std::string& label, const Expression& e) {
    smooth.push_back({label, CompiledExpression(e)});
    for (int a = 0; a < m; ++a) {
      const Expression da = differentiate(e, a);
      smooth.push_back({"d/d" + model.symbols.states[a] + " " + label, CompiledExpression(da)});
      for (int b = a; b < m; ++b)
        smooth.push_back({"d2/d" + model.symbols.states[a] + "d" + model.symbols.states[b] + " " + label,
                          CompiledExpression(differentiate(da, b))});
    }
  };
  for (int i = 0; i < m; ++i) add_smooth("mu." + std::to_string(i + 1), model.mu[i]);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      add_smooth("sigma." + std::to_string(i + 1) + "." + std::to_string(j + 1), model.sigma_at(i, j));

  const bool has_maps = !model.gamma.empty() && !model.gamma_inv.empty();
  std::vector<CompiledExpression> gc, gic;
  if (has_maps) {
    for (const auto& e : model.gamma) gc.emplace_back(e);
    for (const auto& e : model.gamma_inv) gic.emplace_back(e);
  }

  DomainSampler sampler(model.domain, seed);
  std::vector<std::vector<double>> points;
  points.push_back(sampler.anchor());
  for (int p = 0; p < probes; ++p) points.push_back(sampler.next());

  bool reported_pd = false, reported_smooth = false, reported_maps = false;
  for (const auto& x : points) {
    ++report.probes;
    // positive definiteness
    Eigen::MatrixXd vm(m, m);
    bool finite = true;
    try {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) vm(i, j) = vc[i * m + j](x, theta);
    } catch (const EvaluationError& err) {
      finite = false;
      if (!reported_pd) report.issues.push_back({"v finite", x, err.what(), true});
      reported_pd = true;
    }
    if (finite && !reported_pd) {
      if ((vm - vm.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + vm.cwiseAbs().maxCoeff())) {
        report.issues.push_back({"v symmetric", x, "asymmetric at " + point_string(x), true});
        reported_pd = true;
      } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(vm, Eigen::EigenvaluesOnly);
        const double lmin = eig.eigenvalues().minCoeff();
        const double lmax = eig.eigenvalues().cwiseAbs().maxCoeff();
        if (!(lmin > 1e-12 * std::max(1.0, lmax))) {
          std::ostringstream os;
          os << "smallest eigenvalue " << lmin << " at " << point_string(x);
          report.issues.push_back({"v positive definite", x, os.str(), true});
          reported_pd = true;
        }
      }
    }
    if (!reported_smooth) {
      for (const auto& s : smooth) {
        try {
          s.f(x, theta);
        } catch (const EvaluationError& err) {
          report.issues.push_back({"smoothness", x, s.label + ": " + err.what(), false});
          reported_smooth = true;
          break;
        }
      }
    }
    if (has_maps && !reported_maps) {
      try {
        std::vector<double> y(m), back(m);
        for (int i = 0; i < m; ++i) y[i] = gc[i](x, theta);
        for (int i = 0; i < m; ++i) back[i] = gic[i](y, theta);
        for (int i = 0; i < m; ++i) {
          if (std::abs(back[i] - x[i]) > 1e-8 * std::max(1.0, std::abs(x[i]))) {
            report.issues.push_back(
                {"gamma_inv(gamma(x)) = x", x, "mismatch in coordinate " + std::to_string(i + 1), true});
            reported_maps = true;
            break;
          }
        }
      } catch (const EvaluationError& err) {
        report.issues.push_back({"gamma evaluation", x, err.what(), false});
        reported_maps = true;
      }
    }
  }
  return report;
}

ReducibilityReport check_reducibility(const DiffusionModel& model, std::span<const double> theta, int probes,
                                      std::uint64_t seed) {
  const int m = model.dim();
  std::vector<CompiledExpression> sig, dsig;  // dsig[(i*m + j)*m + l] = d sigma_ij / dx_l
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      sig.emplace_back(model.sigma_at(i, j));
      for (int l = 0; l < m; ++l) dsig.emplace_back(differentiate(model.sigma_at(i, j), l));
    }

  ReducibilityReport report;
  double worst_scaled = 0.0;
  DomainSampler sampler(model.domain, seed);
  std::vector<double> s(m * m), ds(m * m * m);
  for (int p = 0; p < probes; ++p) {
    std::vector<double> x;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
      x = sampler.next();
      try {
        for (int q = 0; q < m * m; ++q) s[q] = sig[q](x, theta);
        for (int q = 0; q < m * m * m; ++q) ds[q] = dsig[q](x, theta);
        ok = true;
      } catch (const EvaluationError&) {
      }
    }
    if (!ok) throw Error("check_reducibility: sigma could not be evaluated at any sampled point");
    ++report.probes;
    double smax = 0.0;
    for (double val : s) smax = std::max(smax, std::abs(val));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int k = j + 1; k < m; ++k) {
          double r = 0.0;
          for (int l = 0; l < m; ++l)
            r += ds[(i * m + k) * m + l] * s[l * m + j] - ds[(i * m + j) * m + l] * s[l * m + k];
          const double scaled = std::abs(r) / (1.0 + smax);
          report.max_residual = std::max(report.max_residual, std::abs(r));
          if (scaled > worst_scaled || report.witness.empty()) {
            worst_scaled = std::max(worst_scaled, scaled);
            report.witness = x;
          }
        }
  }
  report.reducible = worst_scaled < 1e-9;
  return report;
}

namespace {

// One-dimensional antiderivative F of 1/s and its inverse, for the supported
// shapes of s.
struct Antiderivative {
  std::function<Expression(const Expression&)> F;
  std::function<Expression(const Expression&)> Finv;
};

bool same_function(const Expression& a, const Expression& b, int m, int var, const Interval& dom,
                   std::span<const double> theta) {
  DomainSampler sampler(std::vector<Interval>(m, dom), 17);
  int compared = 0;
  for (int t = 0; t < 24; ++t) {
    const std::vector<double> x = sampler.next();
    double va, vb;
    try {
      va = evaluate(a, x, theta);
    } catch (const EvaluationError&) {
      continue;
    }
    try {
      vb = evaluate(b, x, theta);
    } catch (const EvaluationError&) {
      return false;
    }
    if (std::abs(va - vb) > 1e-9 * (1.0 + std::abs(va))) return false;
    ++compared;
  }
  (void)var;
  return compared >= 8;
}

// A state-free expression that takes the same value for every theta (such as
// s/s) is replaced by that value.
Expression fold_if_constant(const Expression& e, std::span<const double> theta) {
  if (e.is_constant() || depends_on_any_state(e)) return e;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const std::vector<double> none;
  double first = 0.0;
  for (int t = 0; t < 4; ++t) {
    std::vector<double> th(theta.begin(), theta.end());
    if (t > 0)
      for (double& v : th) v = (v == 0.0 ? 1.0 : v) * u(rng);
    double val;
    try {
      val = evaluate(e, none, th);
    } catch (const EvaluationError&) {
      return e;
    }
    if (t == 0) first = val;
    else if (std::abs(val - first) > 1e-14 * std::max(1.0, std::abs(first))) return e;
  }
  return c(first);
}

std::optional<Antiderivative> match_lamperti(const Expression& s, int m, int var, const Interval& dom,
                                             std::span<const double> theta) {
  using K = ExprKind;
  const Expression x = Expression::state(var);
  if (!depends_on_any_state(s)) {
    return Antiderivative{[s](const Expression& u) { return S(K::Div, u, s); },
                          [s](const Expression& z) { return S(K::Mul, s, z); }};
  }
  const Expression ds = differentiate(s, var);
  // power: s = c x^p
  {
    const Expression cc = substitute_one(s, m, var, c(1.0));
    const Expression p = fold_if_constant(simplify(S(K::Div, substitute_one(ds, m, var, c(1.0)), cc)), theta);
    const Expression candidate = S(K::Mul, cc, S(K::Pow, x, p));
    if (!depends_on_any_state(cc) && !depends_on_any_state(p) && same_function(s, candidate, m, var, dom, theta)) {
      if (p.is_constant(1.0)) {
        return Antiderivative{[cc](const Expression& u) { return S(K::Div, S(K::Ln, u), cc); },
                              [cc](const Expression& z) { return S(K::Exp, S(K::Mul, cc, z)); }};
      }
      const Expression q = S(K::Sub, c(1.0), p);
      return Antiderivative{
          [cc, q](const Expression& u) { return S(K::Div, S(K::Pow, u, q), S(K::Mul, cc, q)); },
          [cc, q](const Expression& z) { return S(K::Pow, S(K::Mul, S(K::Mul, cc, q), z), S(K::Div, c(1.0), q)); }};
    }
  }
  // affine: s = a + b x
  {
    const Expression a = substitute_one(s, m, var, c(0.0));
    const Expression b = substitute_one(ds, m, var, c(0.0));
    const Expression candidate = S(K::Add, a, S(K::Mul, b, x));
    if (!depends_on_any_state(a) && !depends_on_any_state(b) && same_function(s, candidate, m, var, dom, theta)) {
      return Antiderivative{
          [a, b](const Expression& u) { return S(K::Div, S(K::Ln, S(K::Add, a, S(K::Mul, b, u))), b); },
          [a, b](const Expression& z) { return S(K::Div, S(K::Sub, S(K::Exp, S(K::Mul, b, z)), a), b); }};
    }
  }
  // exponential: s = c exp(b x)
  {
    const Expression cc = substitute_one(s, m, var, c(0.0));
    const Expression b = simplify(S(K::Div, substitute_one(ds, m, var, c(0.0)), cc));
    const Expression candidate = S(K::Mul, cc, S(K::Exp, S(K::Mul, b, x)));
    if (!depends_on_any_state(cc) && !depends_on_any_state(b) && same_function(s, candidate, m, var, dom, theta)) {
      return Antiderivative{
          [cc, b](const Expression& u) {
            return S(K::Neg, S(K::Div, S(K::Exp, S(K::Neg, S(K::Mul, b, u))), S(K::Mul, cc, b)));
          },
          [cc, b](const Expression& z) {
            return S(K::Neg, S(K::Div, S(K::Ln, S(K::Neg, S(K::Mul, S(K::Mul, cc, b), z))), b));
          }};
    }
  }
  return std::nullopt;
}

double lower_bound_for(const Interval& d) {
  const bool lo = std::isfinite(d.lo), hi = std::isfinite(d.hi);
  if (lo && hi) return 0.5 * (d.lo + d.hi);
  if (lo) return d.lo + 1.0;
  if (hi) return d.hi - 1.0;
  return 0.0;
}

}  // namespace

ReducedModel derive_reduced_model(const DiffusionModel& model, std::span<const double> theta) {
  using K = ExprKind;
  const int m = model.dim();
  ReducedModel out;
  out.dim = m;
  for (int i = 1; i <= m; ++i) out.symbols.states.push_back("y" + std::to_string(i));
  out.symbols.params = model.symbols.params;
  out.Dv = compute_Dv(model);
  out.parent = std::make_shared<const DiffusionModel>(model);

  bool constant_sigma = true;
  for (const auto& e : model.sigma) constant_sigma = constant_sigma && !depends_on_any_state(e);

  if (!model.gamma.empty() && !model.gamma_inv.empty()) {
    out.gamma = model.gamma;
    out.gamma_inv = model.gamma_inv;
    out.source = ReductionSource::UserSupplied;
  } else if (!model.gamma.empty() || !model.gamma_inv.empty()) {
    throw Error("both gamma and gamma_inv must be supplied");
  } else if (constant_sigma) {
    // gamma(x) = sigma^-1 x via the adjugate
    const Expression det = determinant(model.sigma, m);
    std::vector<Expression> minor(static_cast<std::size_t>(std::max(m - 1, 1)) * std::max(m - 1, 1));
    for (int i = 0; i < m; ++i) {
      Expression gi = c(0.0), gii = c(0.0);
      for (int j = 0; j < m; ++j) {
        // inverse_ij = (-1)^(i+j) M_ji / det
        Expression cof;
        if (m == 1) {
          cof = c(1.0);
        } else {
          int k = 0;
          for (int r = 0; r < m; ++r)
            for (int cc = 0; cc < m; ++cc)
              if (r != j && cc != i) minor[k++] = model.sigma[r * m + cc];
          cof = determinant(minor, m - 1);
          if ((i + j) % 2) cof = S(K::Neg, cof);
        }
        const Expression inv_ij = S(K::Div, cof, det);
        gi = S(K::Add, gi, S(K::Mul, inv_ij, Expression::state(j)));
        gii = S(K::Add, gii, S(K::Mul, model.sigma_at(i, j), Expression::state(j)));
      }
      out.gamma.push_back(gi);
      out.gamma_inv.push_back(gii);
    }
    out.source = ReductionSource::ConstantSigma;
  } else {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        if (i != j && !model.sigma_at(i, j).is_zero())
          throw Error("no reduction map available for a non-diagonal state-dependent sigma; supply gamma and "
                      "gamma_inv or use the irreducible path");
    for (int i = 0; i < m; ++i) {
      const Expression& s = model.sigma_at(i, i);
      for (int j = 0; j < m; ++j)
        if (j != i && depends_on_state(s, j))
          throw Error("sigma." + std::to_string(i + 1) + "." + std::to_string(i + 1) + " depends on " +
                      model.symbols.states[j] + ": the model is not reducible; use the irreducible path");
      const auto anti = match_lamperti(s, m, i, model.domain[i], theta);
      if (!anti)
        throw Error("no closed-form Lamperti transform for sigma." + std::to_string(i + 1) + "." +
                    std::to_string(i + 1) + "; supply gamma and gamma_inv or use the irreducible path");
      const Expression L = c(lower_bound_for(model.domain[i]));
      Expression shift = simplify(anti->F(L));
      if (!shift.is_constant() || !std::isfinite(shift.value())) {
        try {
          if (!std::isfinite(evaluate(shift, std::vector<double>(m, 0.0), theta))) shift = c(0.0);
        } catch (const EvaluationError&) {
          shift = c(0.0);
        }
      }
      out.gamma.push_back(S(K::Sub, anti->F(Expression::state(i)), shift));
      out.gamma_inv.push_back(anti->Finv(S(K::Add, Expression::state(i), shift)));
    }
    out.source = ReductionSource::Lamperti;
  }

  if (!model.mu_y.empty()) {
    out.mu_y = model.mu_y;
    return out;
  }
  // Ito: mu_Y,i = sum_j dgamma_i/dx_j mu_j + 1/2 sum_jk v_jk d2gamma_i/dx_j dx_k, at x = gamma_inv(y)
  const std::vector<Expression> v = compute_v(model);
  for (int i = 0; i < m; ++i) {
    Expression drift = c(0.0);
    for (int j = 0; j < m; ++j) {
      const Expression gj = differentiate(out.gamma[i], j);
      drift = S(K::Add, drift, S(K::Mul, gj, model.mu[j]));
      for (int k = 0; k < m; ++k) {
        const Expression gjk = differentiate(gj, k);
        if (gjk.is_zero() || v[j * m + k].is_zero()) continue;
        drift = S(K::Add, drift, S(K::Mul, c(0.5), S(K::Mul, v[j * m + k], gjk)));
      }
    }
    out.mu_y.push_back(simplify(substitute(drift, out.gamma_inv)));
  }
  return out;
}

}  // namespace difflik

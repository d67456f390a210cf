#include "difflik/taylor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <unordered_map>

namespace difflik {

namespace {

struct DerivativeEntry {
  Expression expr;
  std::unique_ptr<CompiledExpression> compiled;
};

// Per-root memo of mixed partials.  The root expression is held so node
// identity stays valid as a key.
struct DerivativeTable {
  Expression root;
  std::map<MultiIndex, DerivativeEntry> entries;
};

class DerivativeCache {
 public:
  static DerivativeCache& instance() {
    static DerivativeCache cache;
    return cache;
  }

  const DerivativeEntry& get(const Expression& e, const MultiIndex& i) {
    {
      std::lock_guard lock(mutex_);
      DerivativeTable& table = table_for(e);
      auto it = table.entries.find(i);
      if (it != table.entries.end()) return it->second;
    }
    // Build from the predecessor with the first nonzero exponent lowered.
    Expression value;
    if (order(i) == 0) {
      value = e;
    } else {
      MultiIndex parent = i;
      int var = 0;
      while (parent[var] == 0) ++var;
      --parent[var];
      value = differentiate(get(e, parent).expr, var);
    }
    auto compiled = std::make_unique<CompiledExpression>(value);
    std::lock_guard lock(mutex_);
    DerivativeTable& table = table_for(e);
    auto [it, inserted] = table.entries.try_emplace(i, DerivativeEntry{value, std::move(compiled)});
    return it->second;
  }

 private:
  DerivativeTable& table_for(const Expression& e) {
    auto& table = tables_[e.id()];
    if (!table) {
      table = std::make_unique<DerivativeTable>();
      table->root = e;
    }
    return *table;
  }

  std::mutex mutex_;
  std::unordered_map<const Expression::Node*, std::unique_ptr<DerivativeTable>> tables_;
};

}  // namespace

const Expression& derivative(const Expression& e, const MultiIndex& i) {
  return DerivativeCache::instance().get(e, i).expr;
}

const CompiledExpression& compiled_derivative(const Expression& e, const MultiIndex& i) {
  return *DerivativeCache::instance().get(e, i).compiled;
}

NumericPoly taylor(const Expression& e, std::span<const double> x0, std::span<const double> theta, int J, int dim) {
  NumericPoly out(dim, J, make_center(x0));
  const MonomialBasis& basis = out.basis();
  for (int idx = 0; idx < basis.size(); ++idx) {
    const double v = compiled_derivative(e, basis.monomial(idx))(x0, theta);
    out[idx] = v / basis.factorial(idx);
  }
  return out;
}

SymbolicPoly taylor_symbolic(const Expression& e, int J, int dim) {
  SymbolicPoly out(dim, J);
  const MonomialBasis& basis = out.basis();
  for (int idx = 0; idx < basis.size(); ++idx) {
    const Expression& d = derivative(e, basis.monomial(idx));
    if (d.is_zero()) continue;
    out[idx] = basis.factorial(idx) == 1.0 ? d
                                           : make_simplified(ExprKind::Div, d, Expression::constant(basis.factorial(idx)));
  }
  return out;
}

namespace {

// sum_n a[n] * t^n with t having no constant term, by Horner's rule.
NumericPoly horner(const std::vector<double>& a, const NumericPoly& t) {
  const int J = t.degree();
  NumericPoly acc = NumericPoly::constant(t.dim(), J, a.back(), t.center());
  for (int n = static_cast<int>(a.size()) - 2; n >= 0; --n) {
    acc = poly_mul_trunc(acc, t, J);
    acc[0] += a[n];
  }
  return acc;
}

NumericPoly tail(const NumericPoly& p) {
  NumericPoly t = p;
  t[0] = 0.0;
  return t;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw EvaluationError("non-finite Taylor coefficient", what);
}

}  // namespace

NumericPoly series_ln(const NumericPoly& p) {
  const double c = p[0];
  if (!(c > 0.0)) throw EvaluationError("non-finite value", "ln of nonpositive center value");
  std::vector<double> a(p.degree() + 1);
  a[0] = std::log(c);
  double cpow = 1.0;
  for (int n = 1; n <= p.degree(); ++n) {
    cpow *= c;
    a[n] = (n % 2 == 1 ? 1.0 : -1.0) / (n * cpow);
  }
  return horner(a, tail(p));
}

NumericPoly series_exp(const NumericPoly& p) {
  const double ec = std::exp(p[0]);
  require_finite(ec, "exp");
  std::vector<double> a(p.degree() + 1);
  double fact = 1.0;
  for (int n = 0; n <= p.degree(); ++n) {
    if (n > 0) fact *= n;
    a[n] = ec / fact;
  }
  return horner(a, tail(p));
}

NumericPoly series_pow(const NumericPoly& p, double exponent) {
  const double c = p[0];
  const bool nonneg_integer = exponent >= 0 && exponent == std::floor(exponent);
  if (nonneg_integer && exponent <= 64) {
    const int n = static_cast<int>(exponent);
    NumericPoly result = NumericPoly::constant(p.dim(), p.degree(), 1.0, p.center());
    NumericPoly base = p;
    for (int k = n; k > 0; k >>= 1) {
      if (k & 1) result = poly_mul_trunc(result, base, p.degree());
      if (k > 1) base = poly_mul_trunc(base, base, p.degree());
    }
    return result;
  }
  if (c == 0.0 || (c < 0.0 && exponent != std::floor(exponent)))
    throw EvaluationError("non-finite value", "power series about a singular point");
  // (c + t)^a = sum_n binom(a, n) c^(a-n) t^n
  std::vector<double> a(p.degree() + 1);
  double binom = 1.0;
  for (int n = 0; n <= p.degree(); ++n) {
    if (n > 0) binom *= (exponent - (n - 1)) / n;
    a[n] = binom * std::pow(c, exponent - n);
    require_finite(a[n], "pow");
  }
  return horner(a, tail(p));
}

NumericPoly series_reciprocal(const NumericPoly& p) {
  if (p[0] == 0.0) throw EvaluationError("non-finite value", "division by a series vanishing at the center");
  return series_pow(p, -1.0);
}

NumericPoly series_sin(const NumericPoly& p) {
  const double s = std::sin(p[0]);
  const double c = std::cos(p[0]);
  const double cycle[4] = {s, c, -s, -c};
  std::vector<double> a(p.degree() + 1);
  double fact = 1.0;
  for (int n = 0; n <= p.degree(); ++n) {
    if (n > 0) fact *= n;
    a[n] = cycle[n % 4] / fact;
  }
  return horner(a, tail(p));
}

NumericPoly series_cos(const NumericPoly& p) {
  const double s = std::sin(p[0]);
  const double c = std::cos(p[0]);
  const double cycle[4] = {c, -s, -c, s};
  std::vector<double> a(p.degree() + 1);
  double fact = 1.0;
  for (int n = 0; n <= p.degree(); ++n) {
    if (n > 0) fact *= n;
    a[n] = cycle[n % 4] / fact;
  }
  return horner(a, tail(p));
}

TaylorMemo::TaylorMemo(std::span<const double> x0, int J, int dim) : x0_(x0.begin(), x0.end()), J_(J), dim_(dim) {}

bool TaylorMemo::matches(std::span<const double> x0, int J, int dim) const {
  return J == J_ && dim == dim_ && std::equal(x0.begin(), x0.end(), x0_.begin(), x0_.end());
}

std::size_t TaylorMemo::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

struct TaylorMemoAccess {
  static const NumericPoly* find(TaylorMemo& m, const Expression& e, bool& param_free) {
    std::lock_guard lock(m.mutex_);
    auto [it, fresh] = m.entries_.try_emplace(e.id());
    if (fresh) {
      it->second.pin = e;
      it->second.param_free = referenced_params(e).empty();
    }
    param_free = it->second.param_free;
    return it->second.series.get();
  }
  static void store(TaylorMemo& m, const Expression& e, const NumericPoly& p) {
    std::lock_guard lock(m.mutex_);
    auto& slot = m.entries_[e.id()].series;
    if (!slot) slot = std::make_unique<NumericPoly>(p);
  }
};

namespace {

NumericPoly propagate_node(const Expression& e, std::span<const double> x0, std::span<const double> theta, int J,
                           int dim, const Center& center, TaylorMemo* memo);

NumericPoly propagate(const Expression& e, std::span<const double> x0, std::span<const double> theta, int J, int dim,
                      const Center& center, TaylorMemo* memo) {
  if (!memo || e.kind() == ExprKind::Constant || e.kind() == ExprKind::Param || e.kind() == ExprKind::State)
    return propagate_node(e, x0, theta, J, dim, center, memo);
  bool param_free = false;
  if (const NumericPoly* hit = TaylorMemoAccess::find(*memo, e, param_free)) {
    NumericPoly p = *hit;
    p.set_center(center);
    return p;
  }
  NumericPoly p = propagate_node(e, x0, theta, J, dim, center, memo);
  if (param_free) TaylorMemoAccess::store(*memo, e, p);
  return p;
}

NumericPoly propagate_node(const Expression& e, std::span<const double> x0, std::span<const double> theta, int J,
                           int dim, const Center& center, TaylorMemo* memo) {
  switch (e.kind()) {
    case ExprKind::Constant:
      return NumericPoly::constant(dim, J, e.value(), center);
    case ExprKind::Param:
      if (e.index() >= static_cast<int>(theta.size())) throw Error("propagate_taylor: unresolved parameter " + e.name());
      return NumericPoly::constant(dim, J, theta[e.index()], center);
    case ExprKind::State: {
      if (e.index() >= dim) throw Error("propagate_taylor: state index out of range");
      NumericPoly p = NumericPoly::constant(dim, J, x0[e.index()], center);
      if (J >= 1) {
        MultiIndex unit(dim, 0);
        unit[e.index()] = 1;
        p.set_coefficient(unit, 1.0);
      }
      return p;
    }
    default:
      break;
  }
  if (!depends_on_any_state(e)) return NumericPoly::constant(dim, J, evaluate(e, x0, theta), center);
  const NumericPoly a = propagate(e.arg(0), x0, theta, J, dim, center, memo);
  switch (e.kind()) {
    case ExprKind::Neg: return poly_scale(a, -1.0);
    case ExprKind::Ln: return series_ln(a);
    case ExprKind::Exp: return series_exp(a);
    case ExprKind::Sqrt: return series_pow(a, 0.5);
    case ExprKind::Sin: return series_sin(a);
    case ExprKind::Cos: return series_cos(a);
    default: break;
  }
  const Expression& rhs = e.arg(1);
  if (e.kind() == ExprKind::Pow && !depends_on_any_state(rhs)) return series_pow(a, evaluate(rhs, x0, theta));
  const NumericPoly b = propagate(rhs, x0, theta, J, dim, center, memo);
  switch (e.kind()) {
    case ExprKind::Add: return poly_add(a, b);
    case ExprKind::Sub: return poly_sub(a, b);
    case ExprKind::Mul: return poly_mul_trunc(a, b, J);
    case ExprKind::Div: return poly_mul_trunc(a, series_reciprocal(b), J);
    case ExprKind::Pow: return series_exp(poly_mul_trunc(b, series_ln(a), J));
    default: break;
  }
  throw Error("propagate_taylor: unsupported node");
}

}  // namespace

NumericPoly propagate_taylor(const Expression& e, std::span<const double> x0, std::span<const double> theta, int J,
                             int dim) {
  return propagate_taylor(e, x0, theta, J, dim, nullptr);
}

NumericPoly propagate_taylor(const Expression& e, std::span<const double> x0, std::span<const double> theta, int J,
                             int dim, TaylorMemo* memo) {
  if (memo && !memo->matches(x0, J, dim)) throw Error("propagate_taylor: memo built for another point");
  const Center center = make_center(x0);
  NumericPoly out = propagate(e, x0, theta, J, dim, center, memo);
  for (int i = 0; i < out.size(); ++i)
    if (!std::isfinite(out[i])) throw EvaluationError("non-finite Taylor coefficient", "propagate_taylor");
  return out;
}

void evaluate_with_derivatives(const NumericPoly& p, std::span<const double> d, double& value,
                               std::span<double> gradient, std::span<double> hessian) {
  const int m = p.dim();
  const int J = p.degree();
  // powers[j][e] = d_j^e
  std::vector<double> powers(static_cast<std::size_t>(m) * (J + 1));
  for (int j = 0; j < m; ++j) {
    powers[j * (J + 1)] = 1.0;
    for (int e = 1; e <= J; ++e) powers[j * (J + 1) + e] = powers[j * (J + 1) + e - 1] * d[j];
  }
  auto pw = [&](int j, int e) { return e < 0 ? 0.0 : powers[j * (J + 1) + e]; };
  value = 0.0;
  std::fill(gradient.begin(), gradient.end(), 0.0);
  std::fill(hessian.begin(), hessian.end(), 0.0);
  const MonomialBasis& basis = p.basis();
  for (int idx = 0; idx < p.size(); ++idx) {
    const double c = p[idx];
    if (c == 0.0) continue;
    const MultiIndex& mi = basis.monomial(idx);
    double full = c;
    for (int j = 0; j < m; ++j) full *= pw(j, mi[j]);
    value += full;
    for (int a = 0; a < m; ++a) {
      if (mi[a] == 0) continue;
      double g = c * mi[a];
      for (int j = 0; j < m; ++j) g *= pw(j, j == a ? mi[j] - 1 : mi[j]);
      gradient[a] += g;
      for (int b = 0; b < m; ++b) {
        const int eb = (b == a) ? mi[b] - 1 : mi[b];
        if (eb == 0) continue;
        double h = c * mi[a] * eb;
        for (int j = 0; j < m; ++j) {
          int ej = mi[j] - (j == a) - (j == b);
          h *= pw(j, ej);
        }
        hessian[a * m + b] += h;
      }
    }
  }
}

}  // namespace difflik

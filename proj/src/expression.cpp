#include "difflik/expression.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>

namespace difflik {

std::optional<int> SymbolTable::state_index(const std::string& name) const {
  auto it = std::find(states.begin(), states.end(), name);
  if (it == states.end()) return std::nullopt;
  return static_cast<int>(it - states.begin());
}

std::optional<int> SymbolTable::param_index(const std::string& name) const {
  auto it = std::find(params.begin(), params.end(), name);
  if (it == params.end()) return std::nullopt;
  return static_cast<int>(it - params.begin());
}

// The default-constructed expression shares one zero node; children of leaf
// nodes are default-constructed, so this must not recurse.
Expression::Expression() {
  static const std::shared_ptr<const Node> zero = [] {
    auto n = std::shared_ptr<Node>(new Node{ExprKind::Constant, 0.0, -1, {}, Expression(nullptr), Expression(nullptr)});
    return std::shared_ptr<const Node>(n);
  }();
  node_ = zero;
}

Expression Expression::constant(double value) {
  auto n = std::make_shared<Node>();
  n->kind = ExprKind::Constant;
  n->value = value;
  return Expression(std::move(n));
}

Expression Expression::state(int index) {
  auto n = std::make_shared<Node>();
  n->kind = ExprKind::State;
  n->index = index;
  return Expression(std::move(n));
}

Expression Expression::param(int index, std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = ExprKind::Param;
  n->index = index;
  n->name = std::move(name);
  return Expression(std::move(n));
}

Expression Expression::unary(ExprKind kind, Expression arg) {
  if (!is_unary(kind)) throw Error("unary: not a unary kind");
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->a = std::move(arg);
  return Expression(std::move(n));
}

Expression Expression::binary(ExprKind kind, Expression lhs, Expression rhs) {
  if (!is_binary(kind)) throw Error("binary: not a binary kind");
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->a = std::move(lhs);
  n->b = std::move(rhs);
  return Expression(std::move(n));
}

ExprKind Expression::kind() const { return node_->kind; }
double Expression::value() const { return node_->value; }
int Expression::index() const { return node_->index; }
const std::string& Expression::name() const { return node_->name; }
const Expression& Expression::arg(int i) const { return i == 0 ? node_->a : node_->b; }

Expression operator+(const Expression& a, const Expression& b) { return Expression::binary(ExprKind::Add, a, b); }
Expression operator-(const Expression& a, const Expression& b) { return Expression::binary(ExprKind::Sub, a, b); }
Expression operator*(const Expression& a, const Expression& b) { return Expression::binary(ExprKind::Mul, a, b); }
Expression operator/(const Expression& a, const Expression& b) { return Expression::binary(ExprKind::Div, a, b); }
Expression operator-(const Expression& a) { return Expression::unary(ExprKind::Neg, a); }
Expression pow(const Expression& a, const Expression& b) { return Expression::binary(ExprKind::Pow, a, b); }
Expression ln(const Expression& a) { return Expression::unary(ExprKind::Ln, a); }
Expression exp(const Expression& a) { return Expression::unary(ExprKind::Exp, a); }
Expression sqrt(const Expression& a) { return Expression::unary(ExprKind::Sqrt, a); }
Expression sin(const Expression& a) { return Expression::unary(ExprKind::Sin, a); }
Expression cos(const Expression& a) { return Expression::unary(ExprKind::Cos, a); }

bool structurally_equal(const Expression& a, const Expression& b) {
  if (a.id() == b.id()) return true;
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case ExprKind::Constant:
      return a.value() == b.value();
    case ExprKind::State:
    case ExprKind::Param:
      return a.index() == b.index();
    default:
      break;
  }
  if (!structurally_equal(a.arg(0), b.arg(0))) return false;
  return !is_binary(a.kind()) || structurally_equal(a.arg(1), b.arg(1));
}

std::size_t node_count(const Expression& e) {
  if (is_unary(e.kind())) return 1 + node_count(e.arg(0));
  if (is_binary(e.kind())) return 1 + node_count(e.arg(0)) + node_count(e.arg(1));
  return 1;
}

namespace {

double apply_unary(ExprKind k, double a) {
  switch (k) {
    case ExprKind::Neg: return -a;
    case ExprKind::Ln: return std::log(a);
    case ExprKind::Exp: return std::exp(a);
    case ExprKind::Sqrt: return std::sqrt(a);
    case ExprKind::Sin: return std::sin(a);
    case ExprKind::Cos: return std::cos(a);
    default: return std::nan("");
  }
}

double apply_binary(ExprKind k, double a, double b) {
  switch (k) {
    case ExprKind::Add: return a + b;
    case ExprKind::Sub: return a - b;
    case ExprKind::Mul: return a * b;
    case ExprKind::Div: return a / b;
    case ExprKind::Pow: return std::pow(a, b);
    default: return std::nan("");
  }
}

bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

}  // namespace

Expression make_simplified(ExprKind kind, const Expression& a, const Expression& b) {
  if (is_unary(kind)) {
    if (a.is_constant()) {
      const double v = apply_unary(kind, a.value());
      if (std::isfinite(v)) return Expression::constant(v);
    }
    if (kind == ExprKind::Neg && a.kind() == ExprKind::Neg) return a.arg(0);
    if (kind == ExprKind::Ln && a.kind() == ExprKind::Exp) return a.arg(0);
    if (kind == ExprKind::Exp && a.kind() == ExprKind::Ln) return a.arg(0);
    return Expression::unary(kind, a);
  }
  if (a.is_constant() && b.is_constant()) {
    const double v = apply_binary(kind, a.value(), b.value());
    if (std::isfinite(v)) return Expression::constant(v);
  }
  switch (kind) {
    case ExprKind::Add:
      if (b.is_zero()) return a;
      if (a.is_zero()) return b;
      break;
    case ExprKind::Sub:
      if (b.is_zero()) return a;
      if (a.is_zero()) return make_simplified(ExprKind::Neg, b);
      break;
    case ExprKind::Mul:
      if (a.is_zero() || b.is_zero()) return Expression::constant(0.0);
      if (a.is_constant(1.0)) return b;
      if (b.is_constant(1.0)) return a;
      break;
    case ExprKind::Div:
      if (a.is_zero()) return Expression::constant(0.0);
      if (b.is_constant(1.0)) return a;
      break;
    case ExprKind::Pow:
      if (b.is_constant(1.0)) return a;
      if (b.is_zero()) return Expression::constant(1.0);
      break;
    default:
      break;
  }
  return Expression::binary(kind, a, b);
}

Expression simplify(const Expression& e) {
  if (is_unary(e.kind())) return make_simplified(e.kind(), simplify(e.arg(0)));
  if (is_binary(e.kind())) return make_simplified(e.kind(), simplify(e.arg(0)), simplify(e.arg(1)));
  return e;
}

bool depends_on_state(const Expression& e, int var) {
  switch (e.kind()) {
    case ExprKind::State: return e.index() == var;
    case ExprKind::Constant:
    case ExprKind::Param: return false;
    default: break;
  }
  if (depends_on_state(e.arg(0), var)) return true;
  return is_binary(e.kind()) && depends_on_state(e.arg(1), var);
}

int state_extent(const Expression& e) {
  switch (e.kind()) {
    case ExprKind::State: return e.index() + 1;
    case ExprKind::Constant:
    case ExprKind::Param: return 0;
    default: break;
  }
  int n = state_extent(e.arg(0));
  if (is_binary(e.kind())) n = std::max(n, state_extent(e.arg(1)));
  return n;
}

bool depends_on_any_state(const Expression& e) { return state_extent(e) > 0; }

std::vector<int> referenced_params(const Expression& e) {
  std::set<int> out;
  std::function<void(const Expression&)> walk = [&](const Expression& n) {
    if (n.kind() == ExprKind::Param) out.insert(n.index());
    if (is_unary(n.kind())) walk(n.arg(0));
    if (is_binary(n.kind())) {
      walk(n.arg(0));
      walk(n.arg(1));
    }
  };
  walk(e);
  return {out.begin(), out.end()};
}

Expression differentiate(const Expression& e, int var) {
  const Expression zero = Expression::constant(0.0);
  const Expression one = Expression::constant(1.0);
  auto d = [var](const Expression& x) { return differentiate(x, var); };
  switch (e.kind()) {
    case ExprKind::Constant:
    case ExprKind::Param:
      return zero;
    case ExprKind::State:
      return e.index() == var ? one : zero;
    default:
      break;
  }
  if (!depends_on_state(e, var)) return zero;
  const Expression& a = e.arg(0);
  const Expression& b = e.arg(1);
  Expression r;
  switch (e.kind()) {
    case ExprKind::Neg: r = -d(a); break;
    case ExprKind::Ln: r = d(a) / a; break;
    case ExprKind::Exp: r = exp(a) * d(a); break;
    case ExprKind::Sqrt: r = d(a) / (Expression::constant(2.0) * sqrt(a)); break;
    case ExprKind::Sin: r = cos(a) * d(a); break;
    case ExprKind::Cos: r = -(sin(a) * d(a)); break;
    case ExprKind::Add: r = d(a) + d(b); break;
    case ExprKind::Sub: r = d(a) - d(b); break;
    case ExprKind::Mul: r = d(a) * b + a * d(b); break;
    case ExprKind::Div: r = d(a) / b - a * d(b) / (b * b); break;
    case ExprKind::Pow:
      if (!depends_on_state(b, var)) {
        r = b * pow(a, b - one) * d(a);
      } else {
        // a^b = exp(b ln a)
        r = pow(a, b) * (d(b) * ln(a) + b * d(a) / a);
      }
      break;
    default:
      break;
  }
  return simplify(r);
}

Expression substitute(const Expression& e, std::span<const Expression> replacements) {
  switch (e.kind()) {
    case ExprKind::State:
      if (e.index() < 0 || e.index() >= static_cast<int>(replacements.size()))
        throw Error("substitute: state index out of range");
      return replacements[e.index()];
    case ExprKind::Constant:
    case ExprKind::Param:
      return e;
    default:
      break;
  }
  if (is_unary(e.kind())) return Expression::unary(e.kind(), substitute(e.arg(0), replacements));
  return Expression::binary(e.kind(), substitute(e.arg(0), replacements), substitute(e.arg(1), replacements));
}

std::optional<int> polynomial_degree(const Expression& e) {
  switch (e.kind()) {
    case ExprKind::Constant:
    case ExprKind::Param:
      return 0;
    case ExprKind::State:
      return 1;
    default:
      break;
  }
  if (!depends_on_any_state(e)) return 0;
  switch (e.kind()) {
    case ExprKind::Neg:
      return polynomial_degree(e.arg(0));
    case ExprKind::Add:
    case ExprKind::Sub:
    case ExprKind::Mul: {
      auto a = polynomial_degree(e.arg(0));
      auto b = polynomial_degree(e.arg(1));
      if (!a || !b) return std::nullopt;
      return e.kind() == ExprKind::Mul ? *a + *b : std::max(*a, *b);
    }
    case ExprKind::Div:
      if (depends_on_any_state(e.arg(1))) return std::nullopt;
      return polynomial_degree(e.arg(0));
    case ExprKind::Pow: {
      const Expression& b = e.arg(1);
      if (!b.is_constant() || !is_integer(b.value()) || b.value() < 0) return std::nullopt;
      auto a = polynomial_degree(e.arg(0));
      if (!a) return std::nullopt;
      return *a * static_cast<int>(b.value());
    }
    default:
      return std::nullopt;
  }
}

namespace {

std::string default_state_name(int index) { return "x" + std::to_string(index + 1); }

double eval_checked(const Expression& e, std::span<const double> x, std::span<const double> theta,
                    const Expression* (&bad)) {
  double v = 0.0;
  switch (e.kind()) {
    case ExprKind::Constant:
      v = e.value();
      break;
    case ExprKind::State:
      if (e.index() >= static_cast<int>(x.size())) throw Error("evaluate: state index out of range");
      v = x[e.index()];
      break;
    case ExprKind::Param:
      if (e.index() >= static_cast<int>(theta.size()))
        throw Error("evaluate: unresolved parameter '" + e.name() + "'");
      v = theta[e.index()];
      break;
    default: {
      const double a = eval_checked(e.arg(0), x, theta, bad);
      if (bad) return a;
      if (is_unary(e.kind())) {
        v = apply_unary(e.kind(), a);
      } else {
        const double b = eval_checked(e.arg(1), x, theta, bad);
        if (bad) return b;
        v = apply_binary(e.kind(), a, b);
      }
    }
  }
  if (!std::isfinite(v)) bad = &e;
  return v;
}

}  // namespace

double evaluate(const Expression& e, std::span<const double> x, std::span<const double> theta) {
  const Expression* bad = nullptr;
  const double v = eval_checked(e, x, theta, bad);
  if (bad) {
    SymbolTable names;
    for (int i = 0; i < std::max<int>(state_extent(e), static_cast<int>(x.size())); ++i)
      names.states.push_back(default_state_name(i));
    std::string where;
    try {
      where = format(*bad, names);
    } catch (const Error&) {
      where = "<unprintable>";
    }
    throw EvaluationError("non-finite value", where);
  }
  return v;
}

double evaluate(const Expression& e, std::span<const double> x, const std::map<std::string, double>& theta,
                const SymbolTable& symbols) {
  std::vector<double> values(symbols.params.size(), std::nan(""));
  for (std::size_t i = 0; i < symbols.params.size(); ++i) {
    auto it = theta.find(symbols.params[i]);
    if (it != theta.end()) values[i] = it->second;
  }
  for (int p : referenced_params(e)) {
    if (p >= static_cast<int>(values.size()) || std::isnan(values[p]))
      throw Error("evaluate: no value for parameter index " + std::to_string(p));
  }
  return evaluate(e, x, values);
}

CompiledExpression::CompiledExpression(const Expression& e) : expr_(e) {
  int depth = 0;
  std::function<void(const Expression&)> emit = [&](const Expression& n) {
    if (is_unary(n.kind())) {
      emit(n.arg(0));
    } else if (is_binary(n.kind())) {
      emit(n.arg(0));
      emit(n.arg(1));
      --depth;
    } else {
      ++depth;
      max_stack_ = std::max(max_stack_, depth);
    }
    program_.push_back({n.kind(), n.index(), n.value()});
  };
  emit(e);
}

double CompiledExpression::operator()(std::span<const double> x, std::span<const double> theta) const {
  if (program_.empty()) return 0.0;
  constexpr int kInline = 64;
  double inline_stack[kInline];
  std::vector<double> heap;
  double* stack = inline_stack;
  if (max_stack_ > kInline) {
    heap.resize(max_stack_);
    stack = heap.data();
  }
  int top = -1;
  for (const Instr& in : program_) {
    switch (in.kind) {
      case ExprKind::Constant: stack[++top] = in.value; break;
      case ExprKind::State: stack[++top] = x[in.index]; break;
      case ExprKind::Param: stack[++top] = theta[in.index]; break;
      case ExprKind::Neg: stack[top] = -stack[top]; break;
      case ExprKind::Ln: stack[top] = std::log(stack[top]); break;
      case ExprKind::Exp: stack[top] = std::exp(stack[top]); break;
      case ExprKind::Sqrt: stack[top] = std::sqrt(stack[top]); break;
      case ExprKind::Sin: stack[top] = std::sin(stack[top]); break;
      case ExprKind::Cos: stack[top] = std::cos(stack[top]); break;
      case ExprKind::Add: --top; stack[top] += stack[top + 1]; break;
      case ExprKind::Sub: --top; stack[top] -= stack[top + 1]; break;
      case ExprKind::Mul: --top; stack[top] *= stack[top + 1]; break;
      case ExprKind::Div: --top; stack[top] /= stack[top + 1]; break;
      case ExprKind::Pow: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
    }
  }
  const double v = stack[0];
  if (!std::isfinite(v)) return evaluate(expr_, x, theta);  // throws with location
  return v;
}

}  // namespace difflik

// Expression grammar:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | identifier | function '(' expr ')' | '(' expr ')'
// A minus sign applied directly to a bare numeric literal yields a negative
// constant, so formatted negative constants parse back to the same node.
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "difflik/expression.hpp"

namespace difflik {

namespace {

struct Parsed {
  Expression expr;
  bool bare_literal = false;
};

class Parser {
 public:
  Parser(const std::string& text, const SymbolTable& symbols) : s_(text), sym_(symbols) {}

  Expression run() {
    Expression e = expr();
    skip_ws();
    if (pos_ != s_.size()) fail(std::string("unexpected '") + s_[pos_] + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError("syntax error: " + msg, pos_); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expression expr() {
    Expression lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = lhs + term();
      } else if (accept('-')) {
        lhs = lhs - term();
      } else {
        return lhs;
      }
    }
  }

  Expression term() {
    Expression lhs = unary().expr;
    for (;;) {
      if (accept('*')) {
        lhs = lhs * unary().expr;
      } else if (accept('/')) {
        lhs = lhs / unary().expr;
      } else {
        return lhs;
      }
    }
  }

  Parsed unary() {
    if (accept('-')) {
      Parsed inner = unary();
      if (inner.bare_literal) return {Expression::constant(-inner.expr.value()), false};
      return {-inner.expr, false};
    }
    return power();
  }

  Parsed power() {
    Parsed base = primary();
    if (accept('^')) {
      Expression exponent = unary().expr;
      return {pow(base.expr, exponent), false};
    }
    return base;
  }

  Parsed primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expression e = expr();
      if (!accept(')')) fail("expected ')'");
      return {e, false};
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return {number(), true};
    if (std::isalpha(static_cast<unsigned char>(c))) return {identifier(), false};
    fail(std::string("unexpected '") + c + "'");
  }

  Expression number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t n = digits();
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) {
      pos_ = start;
      fail("malformed number");
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      const std::size_t mark = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (digits() == 0) {
        pos_ = mark;
        fail("malformed exponent");
      }
    }
    const std::string lit = s_.substr(start, pos_ - start);
    const double v = std::strtod(lit.c_str(), nullptr);
    if (!std::isfinite(v)) {
      pos_ = start;
      fail("numeric literal out of range");
    }
    return Expression::constant(v);
  }

  Expression identifier() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    const std::string name = s_.substr(start, pos_ - start);

    static const std::pair<const char*, ExprKind> kFunctions[] = {
        {"ln", ExprKind::Ln}, {"exp", ExprKind::Exp}, {"sqrt", ExprKind::Sqrt},
        {"sin", ExprKind::Sin}, {"cos", ExprKind::Cos}};
    for (const auto& [fname, kind] : kFunctions) {
      if (name != fname) continue;
      if (!accept('(')) fail("function '" + name + "' requires an argument list");
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ')') throw ParseError("arity mismatch: '" + name + "' takes 1 argument, got 0", pos_);
      Expression arg = expr();
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',')
        throw ParseError("arity mismatch: '" + name + "' takes 1 argument", pos_);
      if (!accept(')')) fail("expected ')'");
      return Expression::unary(kind, arg);
    }

    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '(') throw ParseError("unknown function '" + name + "'", start);
    if (auto i = sym_.state_index(name)) return Expression::state(*i);
    if (auto p = sym_.param_index(name)) return Expression::param(*p, name);
    throw ParseError("unknown identifier '" + name + "'", start);
  }

  const std::string& s_;
  const SymbolTable& sym_;
  std::size_t pos_ = 0;
};

// Shortest decimal form that round-trips through strtod.
std::string format_number(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

int precedence(const Expression& e) {
  switch (e.kind()) {
    case ExprKind::Add:
    case ExprKind::Sub: return 1;
    case ExprKind::Mul:
    case ExprKind::Div: return 2;
    case ExprKind::Neg: return 3;
    case ExprKind::Pow: return 4;
    case ExprKind::Constant: return (e.value() < 0 || std::signbit(e.value())) ? 3 : 5;
    default: return 5;
  }
}

void format_into(const Expression& e, const SymbolTable& sym, std::string& out) {
  auto wrap = [&](const Expression& child, bool parens) {
    if (parens) out += '(';
    format_into(child, sym, out);
    if (parens) out += ')';
  };
  switch (e.kind()) {
    case ExprKind::Constant:
      if (!std::isfinite(e.value())) throw Error("format: non-finite constant");
      out += format_number(e.value());
      return;
    case ExprKind::State:
      if (e.index() < static_cast<int>(sym.states.size())) {
        out += sym.states[e.index()];
      } else {
        out += "x" + std::to_string(e.index() + 1);
      }
      return;
    case ExprKind::Param:
      out += e.index() < static_cast<int>(sym.params.size()) ? sym.params[e.index()] : e.name();
      return;
    case ExprKind::Neg:
      out += '-';
      wrap(e.arg(0), e.arg(0).is_constant() || precedence(e.arg(0)) < 3);
      return;
    case ExprKind::Ln: out += "ln("; break;
    case ExprKind::Exp: out += "exp("; break;
    case ExprKind::Sqrt: out += "sqrt("; break;
    case ExprKind::Sin: out += "sin("; break;
    case ExprKind::Cos: out += "cos("; break;
    case ExprKind::Pow:
      wrap(e.arg(0), precedence(e.arg(0)) <= 4);
      out += '^';
      wrap(e.arg(1), precedence(e.arg(1)) < 3);
      return;
    default: {
      const int p = precedence(e);
      const char op = e.kind() == ExprKind::Add ? '+' : e.kind() == ExprKind::Sub ? '-' : e.kind() == ExprKind::Mul ? '*' : '/';
      wrap(e.arg(0), precedence(e.arg(0)) < p);
      out += op;
      wrap(e.arg(1), precedence(e.arg(1)) <= p);
      return;
    }
  }
  format_into(e.arg(0), sym, out);
  out += ')';
}

}  // namespace

Expression parse_expression(const std::string& text, const SymbolTable& symbols) {
  return Parser(text, symbols).run();
}

std::string format(const Expression& e, const SymbolTable& symbols) {
  std::string out;
  format_into(e, symbols, out);
  return out;
}

}  // namespace difflik

// Symbolic scalar expressions over state variables and named parameters.
//
// Expressions are immutable trees with shared structure.  Simplification is an
// explicit pass (simplify); the arithmetic operators below build raw nodes.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace difflik {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// Raised when a numeric evaluation produces NaN or +-inf.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::string subexpression)
      : Error(what + ": " + subexpression), subexpression_(std::move(subexpression)) {}
  const std::string& subexpression() const { return subexpression_; }

 private:
  std::string subexpression_;
};

enum class ExprKind : std::uint8_t {
  Constant,
  State,
  Param,
  Neg,
  Ln,
  Exp,
  Sqrt,
  Sin,
  Cos,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
};

inline bool is_unary(ExprKind k) { return k >= ExprKind::Neg && k <= ExprKind::Cos; }
inline bool is_binary(ExprKind k) { return k >= ExprKind::Add; }

// Names visible to the parser and formatter.  State i (0-based) is states[i].
struct SymbolTable {
  std::vector<std::string> states;
  std::vector<std::string> params;

  std::optional<int> state_index(const std::string& name) const;
  std::optional<int> param_index(const std::string& name) const;
  int dim() const { return static_cast<int>(states.size()); }
};

class Expression {
 public:
  struct Node;

  Expression();  // the constant 0

  static Expression constant(double value);
  static Expression state(int index);
  static Expression param(int index, std::string name);
  static Expression unary(ExprKind kind, Expression arg);
  static Expression binary(ExprKind kind, Expression lhs, Expression rhs);

  ExprKind kind() const;
  double value() const;  // Constant only
  int index() const;     // State / Param
  const std::string& name() const;  // Param
  const Expression& arg(int i = 0) const;

  bool is_constant() const { return kind() == ExprKind::Constant; }
  bool is_constant(double v) const { return is_constant() && value() == v; }
  bool is_zero() const { return is_constant(0.0); }

  // Node identity, stable for the lifetime of any copy of this expression.
  const Node* id() const { return node_.get(); }

 private:
  explicit Expression(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct Expression::Node {
  ExprKind kind = ExprKind::Constant;
  double value = 0.0;
  int index = -1;
  std::string name;
  Expression a;
  Expression b;
};

// Raw node construction; no simplification.
Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);
Expression pow(const Expression& a, const Expression& b);
Expression ln(const Expression& a);
Expression exp(const Expression& a);
Expression sqrt(const Expression& a);
Expression sin(const Expression& a);
Expression cos(const Expression& a);

bool structurally_equal(const Expression& a, const Expression& b);
std::size_t node_count(const Expression& e);

Expression parse_expression(const std::string& text, const SymbolTable& symbols);
std::string format(const Expression& e, const SymbolTable& symbols);

// Constant folding and 0/1 identity elimination, applied bottom-up.  Idempotent.
Expression simplify(const Expression& e);
// Builds one node applying the local simplification rules; children are assumed
// already simplified.
Expression make_simplified(ExprKind kind, const Expression& a, const Expression& b = {});

// Exact partial derivative with respect to state `var` (0-based), simplified.
Expression differentiate(const Expression& e, int var);

// Replaces every State(j) by replacements[j].
Expression substitute(const Expression& e, std::span<const Expression> replacements);

bool depends_on_state(const Expression& e, int var);
bool depends_on_any_state(const Expression& e);
// Largest state index referenced plus one (0 when state-free).
int state_extent(const Expression& e);
// Sorted distinct parameter indices referenced.
std::vector<int> referenced_params(const Expression& e);

// Total degree in the state variables when `e` is structurally a polynomial in
// them (coefficients may involve parameters and state-free functions).
std::optional<int> polynomial_degree(const Expression& e);

// Double-precision evaluation.  Throws EvaluationError naming the first
// subexpression whose value is non-finite.
double evaluate(const Expression& e, std::span<const double> x, std::span<const double> theta);
double evaluate(const Expression& e, std::span<const double> x,
                const std::map<std::string, double>& theta, const SymbolTable& symbols);

// Flattened postfix program for repeated evaluation of one expression.
class CompiledExpression {
 public:
  CompiledExpression() = default;
  explicit CompiledExpression(const Expression& e);

  // Evaluates without per-node checks; a non-finite result is re-evaluated on
  // the tree to locate the offending subexpression and reported.
  double operator()(std::span<const double> x, std::span<const double> theta) const;
  const Expression& expression() const { return expr_; }

 private:
  struct Instr {
    ExprKind kind;
    int index;
    double value;
  };
  Expression expr_;
  std::vector<Instr> program_;
  int max_stack_ = 0;
};

}  // namespace difflik

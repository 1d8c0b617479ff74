#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "srlab/errors.hpp"

namespace srlab {

// Immutable symbolic expression in variables x0..x{d-1}.  Nodes are shared;
// all "mutating" operations return new values.  The node set is deliberately
// small: constants, variables, +, -, *, /, integer powers, sin, cos, sqrt,
// abs.  That is enough to express every field and density this tool handles
// while keeping differentiation exact.
class Expr {
 public:
  enum class Kind {
    kConstant,
    kVar,
    kAdd,   // n-ary, >= 2 children
    kSub,   // binary
    kMul,   // n-ary, >= 2 children
    kDiv,   // binary
    kPow,   // one child, integer exponent >= 0
    kSin,
    kCos,
    kSqrt,
    kAbs,
  };

  // Default-constructed expression is the constant 0.
  Expr();

  static Expr constant(double c);
  static Expr var(int index);
  static Expr add(std::vector<Expr> terms);
  static Expr sub(Expr a, Expr b);
  static Expr mul(std::vector<Expr> factors);
  static Expr div(Expr a, Expr b);
  static Expr pow(Expr base, int exponent);  // exponent >= 0
  static Expr sin(Expr a);
  static Expr cos(Expr a);
  static Expr sqrt(Expr a);
  static Expr abs(Expr a);

  Kind kind() const;
  double constant_value() const;     // kConstant only
  int var_index() const;             // kVar only
  int exponent() const;              // kPow only
  int child_count() const;
  const Expr& child(int i) const;

  // Evaluates at x (size must cover every variable used).  Throws EvalError
  // on division by zero, sqrt of a negative number, or a non-finite result.
  double eval(std::span<const double> x) const;

  // Exact partial derivative with respect to x{index}, simplified.
  // d|u| is represented as (|u|/u)*du, so evaluating it at u == 0 raises the
  // usual division error instead of silently picking a sign.
  Expr diff(int index) const;

  // Constant folding, 0/1 identities and flattening of nested sums/products.
  // Idempotent: simplified().simplified() is structurally the same node.
  Expr simplified() const;

  bool is_constant(double c) const;
  bool is_zero() const { return is_constant(0.0); }

  // Structural equality (same tree after accounting for shared nodes).
  bool same_as(const Expr& other) const;

  // Largest variable index used, or -1 for closed expressions.
  int max_var_index() const;

  bool uses_abs() const;

  // Parenthesised infix form, e.g. "x0^2/2" or "sin(x0)*x1".
  std::string str() const;

  struct Node;
  // Wraps an existing node; used by the factories, not meant for clients.
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<const Node> node_;
};

inline Expr operator+(const Expr& a, const Expr& b) { return Expr::add({a, b}); }
inline Expr operator-(const Expr& a, const Expr& b) { return Expr::sub(a, b); }
inline Expr operator*(const Expr& a, const Expr& b) { return Expr::mul({a, b}); }
inline Expr operator/(const Expr& a, const Expr& b) { return Expr::div(a, b); }
inline Expr operator-(const Expr& a) { return Expr::mul({Expr::constant(-1.0), a}); }

// Parses one infix expression.  `dim` bounds the allowed variable indices;
// pass -1 to accept any x<k>.  `line` is used in diagnostics, which always
// carry 1-based line:column positions.
Expr parse_expr(const std::string& text, int dim, int line = 1);

}  // namespace srlab

#include "srlab/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <utility>

namespace srlab {

struct Expr::Node {
  Kind kind = Kind::kConstant;
  double value = 0.0;               // kConstant
  int index = 0;                    // kVar: variable index, kPow: exponent
  std::vector<Expr> kids;
};

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Trim a trailing ".0"-free shortest form: %.17g already picks one, but
  // re-print small integers compactly for readable labels.
  if (v == static_cast<long long>(v) && std::abs(v) < 1e15)
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
  return buf;
}

}  // namespace

Expr::Expr() : node_(std::make_shared<const Node>()) {}

static Expr make_node(Expr::Kind kind, double value, int index, std::vector<Expr> kids) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = kind;
  n->value = value;
  n->index = index;
  n->kids = std::move(kids);
  return Expr(std::shared_ptr<const Expr::Node>(std::move(n)));
}

Expr Expr::constant(double c) { return make_node(Kind::kConstant, c, 0, {}); }

Expr Expr::var(int index) {
  if (index < 0) throw DomainError("variable index must be >= 0");
  return make_node(Kind::kVar, 0.0, index, {});
}

Expr Expr::add(std::vector<Expr> terms) {
  if (terms.empty()) return constant(0.0);
  if (terms.size() == 1) return terms[0];
  return make_node(Kind::kAdd, 0.0, 0, std::move(terms));
}

Expr Expr::sub(Expr a, Expr b) { return make_node(Kind::kSub, 0.0, 0, {std::move(a), std::move(b)}); }

Expr Expr::mul(std::vector<Expr> factors) {
  if (factors.empty()) return constant(1.0);
  if (factors.size() == 1) return factors[0];
  return make_node(Kind::kMul, 0.0, 0, std::move(factors));
}

Expr Expr::div(Expr a, Expr b) { return make_node(Kind::kDiv, 0.0, 0, {std::move(a), std::move(b)}); }

Expr Expr::pow(Expr base, int exponent) {
  if (exponent < 0) throw DomainError("integer exponents must be >= 0; use division instead");
  return make_node(Kind::kPow, 0.0, exponent, {std::move(base)});
}

Expr Expr::sin(Expr a) { return make_node(Kind::kSin, 0.0, 0, {std::move(a)}); }
Expr Expr::cos(Expr a) { return make_node(Kind::kCos, 0.0, 0, {std::move(a)}); }
Expr Expr::sqrt(Expr a) { return make_node(Kind::kSqrt, 0.0, 0, {std::move(a)}); }
Expr Expr::abs(Expr a) { return make_node(Kind::kAbs, 0.0, 0, {std::move(a)}); }

Expr::Kind Expr::kind() const { return node_->kind; }
double Expr::constant_value() const { return node_->value; }
int Expr::var_index() const { return node_->index; }
int Expr::exponent() const { return node_->index; }
int Expr::child_count() const { return static_cast<int>(node_->kids.size()); }
const Expr& Expr::child(int i) const { return node_->kids[static_cast<size_t>(i)]; }

bool Expr::is_constant(double c) const {
  return node_->kind == Kind::kConstant && node_->value == c;
}

bool Expr::same_as(const Expr& other) const {
  if (node_ == other.node_) return true;
  if (node_->kind != other.node_->kind) return false;
  switch (node_->kind) {
    case Kind::kConstant:
      return node_->value == other.node_->value;
    case Kind::kVar:
      return node_->index == other.node_->index;
    case Kind::kPow:
      if (node_->index != other.node_->index) return false;
      break;
    default:
      break;
  }
  if (node_->kids.size() != other.node_->kids.size()) return false;
  for (size_t i = 0; i < node_->kids.size(); ++i)
    if (!node_->kids[i].same_as(other.node_->kids[i])) return false;
  return true;
}

int Expr::max_var_index() const {
  int m = node_->kind == Kind::kVar ? node_->index : -1;
  for (const Expr& k : node_->kids) m = std::max(m, k.max_var_index());
  return m;
}

bool Expr::uses_abs() const {
  if (node_->kind == Kind::kAbs) return true;
  for (const Expr& k : node_->kids)
    if (k.uses_abs()) return true;
  return false;
}

double Expr::eval(std::span<const double> x) const {
  double r = 0.0;
  switch (node_->kind) {
    case Kind::kConstant:
      return node_->value;
    case Kind::kVar:
      if (node_->index >= static_cast<int>(x.size()))
        throw DomainError("point has too few coordinates for x" + std::to_string(node_->index));
      return x[static_cast<size_t>(node_->index)];
    case Kind::kAdd:
      for (const Expr& k : node_->kids) r += k.eval(x);
      break;
    case Kind::kSub:
      r = node_->kids[0].eval(x) - node_->kids[1].eval(x);
      break;
    case Kind::kMul:
      r = 1.0;
      for (const Expr& k : node_->kids) r *= k.eval(x);
      break;
    case Kind::kDiv: {
      double den = node_->kids[1].eval(x);
      if (den == 0.0) throw EvalError("division by zero in '" + str() + "'");
      r = node_->kids[0].eval(x) / den;
      break;
    }
    case Kind::kPow: {
      double b = node_->kids[0].eval(x);
      r = 1.0;
      for (int i = 0; i < node_->index; ++i) r *= b;
      break;
    }
    case Kind::kSin:
      r = std::sin(node_->kids[0].eval(x));
      break;
    case Kind::kCos:
      r = std::cos(node_->kids[0].eval(x));
      break;
    case Kind::kSqrt: {
      double a = node_->kids[0].eval(x);
      if (a < 0.0) throw EvalError("sqrt of negative value in '" + str() + "'");
      r = std::sqrt(a);
      break;
    }
    case Kind::kAbs:
      r = std::abs(node_->kids[0].eval(x));
      break;
  }
  if (!std::isfinite(r)) throw EvalError("non-finite value while evaluating '" + str() + "'");
  return r;
}

namespace {

// One bottom-up simplification pass.  Children are assumed simplified, so a
// single pass is a fixed point (covered by a property test).
Expr simplify_node(const Expr& e);

Expr simplify_rec(const Expr& e) {
  bool changed = false;
  std::vector<Expr> kids;
  kids.reserve(static_cast<size_t>(e.child_count()));
  for (int i = 0; i < e.child_count(); ++i) {
    kids.push_back(simplify_rec(e.child(i)));
    if (!kids.back().same_as(e.child(i))) changed = true;
  }
  Expr base = e;
  if (changed) {
    switch (e.kind()) {
      case Expr::Kind::kAdd: base = Expr::add(std::move(kids)); break;
      case Expr::Kind::kSub: base = Expr::sub(kids[0], kids[1]); break;
      case Expr::Kind::kMul: base = Expr::mul(std::move(kids)); break;
      case Expr::Kind::kDiv: base = Expr::div(kids[0], kids[1]); break;
      case Expr::Kind::kPow: base = Expr::pow(kids[0], e.exponent()); break;
      case Expr::Kind::kSin: base = Expr::sin(kids[0]); break;
      case Expr::Kind::kCos: base = Expr::cos(kids[0]); break;
      case Expr::Kind::kSqrt: base = Expr::sqrt(kids[0]); break;
      case Expr::Kind::kAbs: base = Expr::abs(kids[0]); break;
      default: break;
    }
  }
  return simplify_node(base);
}

Expr simplify_node(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::kConstant:
    case Expr::Kind::kVar:
      return e;

    case Expr::Kind::kAdd: {
      std::vector<Expr> terms;
      double c = 0.0;
      for (int i = 0; i < e.child_count(); ++i) {
        const Expr& k = e.child(i);
        if (k.kind() == Expr::Kind::kAdd) {
          // flatten; nested children are already simplified, so at most one
          // level deep and their leading constant folds in here
          for (int j = 0; j < k.child_count(); ++j) {
            const Expr& kk = k.child(j);
            if (kk.kind() == Expr::Kind::kConstant) c += kk.constant_value();
            else terms.push_back(kk);
          }
        } else if (k.kind() == Expr::Kind::kConstant) {
          c += k.constant_value();
        } else {
          terms.push_back(k);
        }
      }
      if (c != 0.0 || terms.empty()) terms.insert(terms.begin(), Expr::constant(c));
      return Expr::add(std::move(terms));
    }

    case Expr::Kind::kSub: {
      const Expr& a = e.child(0);
      const Expr& b = e.child(1);
      if (a.kind() == Expr::Kind::kConstant && b.kind() == Expr::Kind::kConstant)
        return Expr::constant(a.constant_value() - b.constant_value());
      if (b.is_zero()) return a;
      if (a.same_as(b)) return Expr::constant(0.0);
      if (a.is_zero()) return simplify_node(Expr::mul({Expr::constant(-1.0), b}));
      return e;
    }

    case Expr::Kind::kMul: {
      std::vector<Expr> factors;
      double c = 1.0;
      for (int i = 0; i < e.child_count(); ++i) {
        const Expr& k = e.child(i);
        if (k.kind() == Expr::Kind::kMul) {
          for (int j = 0; j < k.child_count(); ++j) {
            const Expr& kk = k.child(j);
            if (kk.kind() == Expr::Kind::kConstant) c *= kk.constant_value();
            else factors.push_back(kk);
          }
        } else if (k.kind() == Expr::Kind::kConstant) {
          c *= k.constant_value();
        } else {
          factors.push_back(k);
        }
      }
      if (c == 0.0) return Expr::constant(0.0);
      if (c != 1.0 || factors.empty()) factors.insert(factors.begin(), Expr::constant(c));
      return Expr::mul(std::move(factors));
    }

    case Expr::Kind::kDiv: {
      const Expr& a = e.child(0);
      const Expr& b = e.child(1);
      if (b.kind() == Expr::Kind::kConstant && b.constant_value() != 0.0) {
        if (a.kind() == Expr::Kind::kConstant)
          return Expr::constant(a.constant_value() / b.constant_value());
        if (a.is_zero()) return Expr::constant(0.0);
        if (b.constant_value() == 1.0) return a;
      }
      // 0/u is left alone for non-constant u: evaluating it still reports the
      // singularity of u at its zeros instead of hiding it.
      return e;
    }

    case Expr::Kind::kPow: {
      if (e.exponent() == 0) return Expr::constant(1.0);
      if (e.exponent() == 1) return e.child(0);
      if (e.child(0).kind() == Expr::Kind::kConstant) {
        double b = e.child(0).constant_value(), r = 1.0;
        for (int i = 0; i < e.exponent(); ++i) r *= b;
        return Expr::constant(r);
      }
      return e;
    }

    case Expr::Kind::kSin:
      if (e.child(0).kind() == Expr::Kind::kConstant)
        return Expr::constant(std::sin(e.child(0).constant_value()));
      return e;
    case Expr::Kind::kCos:
      if (e.child(0).kind() == Expr::Kind::kConstant)
        return Expr::constant(std::cos(e.child(0).constant_value()));
      return e;
    case Expr::Kind::kSqrt:
      if (e.child(0).kind() == Expr::Kind::kConstant && e.child(0).constant_value() >= 0.0)
        return Expr::constant(std::sqrt(e.child(0).constant_value()));
      return e;  // sqrt of a negative constant stays symbolic; eval reports it
    case Expr::Kind::kAbs:
      if (e.child(0).kind() == Expr::Kind::kConstant)
        return Expr::constant(std::abs(e.child(0).constant_value()));
      return e;
  }
  return e;
}

}  // namespace

Expr Expr::simplified() const { return simplify_rec(*this); }

Expr Expr::diff(int index) const {
  Expr d;
  switch (node_->kind) {
    case Kind::kConstant:
      d = constant(0.0);
      break;
    case Kind::kVar:
      d = constant(node_->index == index ? 1.0 : 0.0);
      break;
    case Kind::kAdd: {
      std::vector<Expr> terms;
      for (const Expr& k : node_->kids) terms.push_back(k.diff(index));
      d = add(std::move(terms));
      break;
    }
    case Kind::kSub:
      d = sub(node_->kids[0].diff(index), node_->kids[1].diff(index));
      break;
    case Kind::kMul: {
      std::vector<Expr> terms;
      for (size_t i = 0; i < node_->kids.size(); ++i) {
        std::vector<Expr> factors = node_->kids;
        factors[i] = node_->kids[i].diff(index);
        terms.push_back(mul(std::move(factors)));
      }
      d = add(std::move(terms));
      break;
    }
    case Kind::kDiv: {
      const Expr& a = node_->kids[0];
      const Expr& b = node_->kids[1];
      d = div(sub(a.diff(index) * b, a * b.diff(index)), pow(b, 2));
      break;
    }
    case Kind::kPow: {
      const Expr& a = node_->kids[0];
      d = constant(node_->index) * pow(a, node_->index - 1) * a.diff(index);
      break;
    }
    case Kind::kSin:
      d = cos(node_->kids[0]) * node_->kids[0].diff(index);
      break;
    case Kind::kCos:
      d = constant(-1.0) * sin(node_->kids[0]) * node_->kids[0].diff(index);
      break;
    case Kind::kSqrt:
      d = div(node_->kids[0].diff(index), constant(2.0) * sqrt(node_->kids[0]));
      break;
    case Kind::kAbs:
      // sign(u) written as |u|/u: evaluating the derivative at u == 0 then
      // raises a division error rather than inventing a one-sided value.
      d = div(abs(node_->kids[0]), node_->kids[0]) * node_->kids[0].diff(index);
      break;
  }
  return d.simplified();
}

namespace {

int precedence_of(Expr::Kind k) {
  switch (k) {
    case Expr::Kind::kAdd:
    case Expr::Kind::kSub: return 1;
    case Expr::Kind::kMul:
    case Expr::Kind::kDiv: return 2;
    case Expr::Kind::kPow: return 3;
    default: return 4;  // atoms and function calls never need parentheses
  }
}

void render(const Expr& e, int parent_prec, std::string& out) {
  int prec = precedence_of(e.kind());
  bool parens = prec < parent_prec;
  if (parens) out += '(';
  switch (e.kind()) {
    case Expr::Kind::kConstant: {
      double v = e.constant_value();
      if (v < 0.0 && parent_prec > 1 && !parens) {
        out += '(';
        out += format_double(v);
        out += ')';
      } else {
        out += format_double(v);
      }
      break;
    }
    case Expr::Kind::kVar:
      out += 'x';
      out += std::to_string(e.var_index());
      break;
    case Expr::Kind::kAdd:
      for (int i = 0; i < e.child_count(); ++i) {
        if (i) out += " + ";
        render(e.child(i), prec, out);
      }
      break;
    case Expr::Kind::kSub:
      render(e.child(0), prec, out);
      out += " - ";
      render(e.child(1), prec + 1, out);
      break;
    case Expr::Kind::kMul:
      for (int i = 0; i < e.child_count(); ++i) {
        if (i) out += '*';
        render(e.child(i), prec + (i ? 1 : 0), out);
      }
      break;
    case Expr::Kind::kDiv:
      render(e.child(0), prec, out);
      out += '/';
      render(e.child(1), prec + 1, out);
      break;
    case Expr::Kind::kPow:
      render(e.child(0), prec + 1, out);
      out += '^';
      out += std::to_string(e.exponent());
      break;
    case Expr::Kind::kSin: out += "sin("; render(e.child(0), 0, out); out += ')'; break;
    case Expr::Kind::kCos: out += "cos("; render(e.child(0), 0, out); out += ')'; break;
    case Expr::Kind::kSqrt: out += "sqrt("; render(e.child(0), 0, out); out += ')'; break;
    case Expr::Kind::kAbs: out += "abs("; render(e.child(0), 0, out); out += ')'; break;
  }
  if (parens) out += ')';
}

}  // namespace

std::string Expr::str() const {
  std::string out;
  render(*this, 0, out);
  return out;
}

// ---------------------------------------------------------------------------
// Recursive-descent parser for the infix expression syntax.  Grammar:
//
//   expr    := term (('+'|'-') term)*
//   term    := unary (('*'|'/') unary)*
//   unary   := '-' unary | power
//   power   := atom ('^' integer)?
//   atom    := number | var | func '(' expr ')' | '(' expr ')'
//   func    := 'sin' | 'cos' | 'sqrt' | 'abs'
//   var     := 'x' digits
//
// '^' takes a literal non-negative integer exponent; everything else is a
// real. Errors carry 1-based line:column positions.

namespace {

class ExprParser {
 public:
  ExprParser(const std::string& text, int dim, int line)
      : text_(text), dim_(dim), line_(line) {}

  Expr parse() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(std::to_string(line_) + ":" + std::to_string(pos_ + 1) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  Expr parse_sum() {
    Expr e = parse_term();
    for (;;) {
      if (eat('+')) e = (e + parse_term()).simplified();
      else if (eat('-')) e = (e - parse_term()).simplified();
      else return e;
    }
  }

  Expr parse_term() {
    Expr e = parse_unary();
    for (;;) {
      if (eat('*')) e = (e * parse_unary()).simplified();
      else if (eat('/')) e = (e / parse_unary()).simplified();
      else return e;
    }
  }

  Expr parse_unary() {
    if (eat('-')) return (-parse_unary()).simplified();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (!eat('^')) return base;
    skip_ws();
    size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == start) fail("'^' needs a non-negative integer exponent");
    int exp = std::stoi(text_.substr(start, pos_ - start));
    return Expr::pow(base, exp).simplified();
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("expected a value");
    char c = text_[pos_];

    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();

    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      if (!eat(')')) fail("missing ')'");
      return e;
    }

    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      std::string word = text_.substr(start, pos_ - start);

      if (word.size() >= 2 && word[0] == 'x' &&
          std::all_of(word.begin() + 1, word.end(),
                      [](char d) { return std::isdigit(static_cast<unsigned char>(d)); })) {
        int idx = std::stoi(word.substr(1));
        if (dim_ >= 0 && idx >= dim_) {
          pos_ = start;
          fail("variable " + word + " out of range for dimension " + std::to_string(dim_));
        }
        return Expr::var(idx);
      }

      if (!eat('(')) {
        pos_ = start;
        fail("unknown name '" + word + "' (expected x<k> or a function call)");
      }
      Expr arg = parse_sum();
      if (!eat(')')) fail("missing ')' after " + word);
      if (word == "sin") return Expr::sin(arg);
      if (word == "cos") return Expr::cos(arg);
      if (word == "sqrt") return Expr::sqrt(arg);
      if (word == "abs") return Expr::abs(arg);
      pos_ = start;
      fail("unknown function '" + word + "'");
    }

    fail(std::string("unexpected character '") + c + "'");
  }

  Expr parse_number() {
    size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      size_t mark = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      } else {
        pos_ = mark;  // not an exponent after all
      }
    }
    try {
      return Expr::constant(std::stod(text_.substr(start, pos_ - start)));
    } catch (const std::exception&) {
      pos_ = start;
      fail("bad numeric literal");
    }
  }

  const std::string& text_;
  int dim_;
  int line_;
  size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(const std::string& text, int dim, int line) {
  return ExprParser(text, dim, line).parse().simplified();
}

}  // namespace srlab

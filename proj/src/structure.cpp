#include "srlab/structure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace srlab {

Eigen::VectorXd VectorField::eval(const Eigen::VectorXd& point) const {
  Eigen::VectorXd v(dim());
  std::span<const double> x(point.data(), static_cast<size_t>(point.size()));
  for (int k = 0; k < dim(); ++k) v[k] = components[static_cast<size_t>(k)].eval(x);
  return v;
}

bool VectorField::symbolically_zero() const {
  return std::all_of(components.begin(), components.end(),
                     [](const Expr& e) { return e.simplified().is_zero(); });
}

std::string VectorField::str() const {
  std::string out = "(";
  for (size_t k = 0; k < components.size(); ++k) {
    if (k) out += ", ";
    out += components[k].str();
  }
  return out + ")";
}

namespace {

// Kronecker (golden-ratio style) sequence: equidistributed, deterministic,
// and cheap.  alpha_l = frac(sqrt(p_l)) over distinct primes.
double kronecker_coord(int k, int axis) {
  static const double kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  double a = std::sqrt(kPrimes[axis % 12]) + axis / 12;  // shift repeats apart
  a -= std::floor(a);
  double v = 0.5 + (k + 1) * a;
  return v - std::floor(v);
}

}  // namespace

Eigen::VectorXd Domain::sample(int k) const {
  int n = dim();
  Eigen::VectorXd p(n);
  for (int l = 0; l < n; ++l) {
    double u = kronecker_coord(k, l);
    if (kind == Kind::kBox)
      p[l] = lo[static_cast<size_t>(l)] + u * (hi[static_cast<size_t>(l)] - lo[static_cast<size_t>(l)]);
    else
      p[l] = u * periods[static_cast<size_t>(l)];
  }
  return p;
}

bool Domain::contains(const Eigen::VectorXd& p) const {
  if (p.size() != dim()) return false;
  if (kind == Kind::kTorus) return true;  // coordinates wrap
  for (int l = 0; l < dim(); ++l)
    if (p[l] < lo[static_cast<size_t>(l)] || p[l] > hi[static_cast<size_t>(l)]) return false;
  return true;
}

std::string Domain::str() const {
  std::ostringstream os;
  if (kind == Kind::kTorus) {
    os << "torus";
    for (double p : periods) os << ' ' << p;
  } else {
    os << "box";
    for (size_t l = 0; l < lo.size(); ++l) os << ' ' << lo[l] << ' ' << hi[l];
  }
  return os.str();
}

void SRStructure::validate() const {
  if (d < 1) throw ParseError("dimension must be at least 1");
  if (generators.empty()) throw ParseError("structure needs at least one field");
  if (domain.dim() != d)
    throw ParseError("domain is " + std::to_string(domain.dim()) + "-dimensional but dim is " +
                     std::to_string(d));
  if (r_max < 0) throw ParseError("rmax must be >= 0");
  for (const VectorField& g : generators) {
    if (g.dim() != d)
      throw ParseError("field " + g.label + " has " + std::to_string(g.dim()) +
                       " components, expected " + std::to_string(d));
    for (const Expr& c : g.components) {
      if (c.uses_abs())
        throw ParseError("field " + g.label + " uses abs(), which is not smooth; fields must be");
      if (c.max_var_index() >= d)
        throw ParseError("field " + g.label + " references a variable beyond x" +
                         std::to_string(d - 1));
    }
  }
  if (omega_density.max_var_index() >= d)
    throw ParseError("volume density references a variable beyond x" + std::to_string(d - 1));
  for (int k = 0; k < 64; ++k) {
    Eigen::VectorXd p = domain.sample(k);
    std::span<const double> x(p.data(), static_cast<size_t>(p.size()));
    double w = omega_density.eval(x);
    if (!(w > 0.0))
      throw DomainError("volume density must be positive; got " + std::to_string(w) + " at sample " +
                        std::to_string(k));
  }
}

std::string SRStructure::canonical_text() const {
  std::ostringstream os;
  os << "dim " << d << "\n";
  os << "domain " << domain.str() << "\n";
  os << "rmax " << r_max << "\n";
  for (const VectorField& g : generators) {
    os << "field ";
    for (int k = 0; k < g.dim(); ++k) {
      if (k) os << ", ";
      os << g.components[static_cast<size_t>(k)].str();
    }
    os << "\n";
  }
  os << "volume " << omega_density.str() << "\n";
  return os.str();
}

VectorField lie_bracket(const VectorField& x, const VectorField& y) {
  if (x.dim() != y.dim()) throw DomainError("lie_bracket: fields of different dimensions");
  int d = x.dim();
  VectorField out;
  out.components.reserve(static_cast<size_t>(d));
  for (int k = 0; k < d; ++k) {
    std::vector<Expr> fwd, bwd;
    for (int l = 0; l < d; ++l) {
      fwd.push_back(x.components[static_cast<size_t>(l)] *
                    y.components[static_cast<size_t>(k)].diff(l));
      bwd.push_back(y.components[static_cast<size_t>(l)] *
                    x.components[static_cast<size_t>(k)].diff(l));
    }
    out.components.push_back(
        Expr::sub(Expr::add(std::move(fwd)), Expr::add(std::move(bwd))).simplified());
  }
  out.label = "[" + x.label + ", " + y.label + "]";
  return out;
}

ZeroCheck is_identically_zero(const VectorField& f, const Domain& domain, double tol,
                              int samples) {
  ZeroCheck r;
  if (f.symbolically_zero()) {
    r.zero = true;
    r.symbolic = true;
    return r;
  }
  int usable = 0;
  for (int k = 0; k < samples; ++k) {
    Eigen::VectorXd p = domain.sample(k);
    std::span<const double> x(p.data(), static_cast<size_t>(p.size()));
    try {
      for (const Expr& c : f.components) {
        if (std::abs(c.eval(x)) > tol) {
          r.zero = false;
          return r;
        }
      }
      ++usable;
    } catch (const EvalError&) {
      ++r.skipped_samples;  // singular sample: skip, keep probing
    }
  }
  if (usable == 0)
    throw NumericError("zero test for " + f.label +
                       ": every sample hit an evaluation singularity");
  r.zero = true;
  r.symbolic = false;  // only known zero numerically
  return r;
}

// --------------------------------------------------------------------------
// Structure DSL parsing

namespace {

[[noreturn]] void fail_at(int line, int col, const std::string& what) {
  throw ParseError(std::to_string(line) + ":" + std::to_string(col) + ": " + what);
}

// Splits on commas that are not nested inside parentheses.
std::vector<std::string> split_top_level(const std::string& s) {
  std::vector<std::string> parts;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

double parse_real(const std::string& tok, int line, const std::string& what) {
  try {
    size_t used = 0;
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail_at(line, 1, "bad " + what + " '" + tok + "'");
  }
}

}  // namespace

SRStructure parse_structure(const std::string& text) {
  SRStructure s;
  s.d = -1;
  s.r_max = -1;
  bool have_domain = false, have_volume = false;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('#'));
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;

    if (word == "dim") {
      if (s.d != -1) fail_at(line_no, 1, "duplicate dim");
      if (!(ls >> s.d) || s.d < 1) fail_at(line_no, 1, "dim needs a positive integer");
    } else if (word == "domain") {
      if (s.d == -1) fail_at(line_no, 1, "dim must come before domain");
      if (have_domain) fail_at(line_no, 1, "duplicate domain");
      std::string kind;
      ls >> kind;
      std::vector<double> nums;
      std::string tok;
      while (ls >> tok) nums.push_back(parse_real(tok, line_no, "domain bound"));
      if (kind == "torus") {
        if (static_cast<int>(nums.size()) != s.d)
          fail_at(line_no, 1, "torus domain needs " + std::to_string(s.d) + " periods");
        for (double p : nums)
          if (!(p > 0.0)) fail_at(line_no, 1, "torus periods must be positive");
        s.domain.kind = Domain::Kind::kTorus;
        s.domain.periods = nums;
      } else if (kind == "box") {
        if (static_cast<int>(nums.size()) != 2 * s.d)
          fail_at(line_no, 1, "box domain needs " + std::to_string(2 * s.d) + " bounds (lo hi per axis)");
        for (int l = 0; l < s.d; ++l) {
          double lo = nums[static_cast<size_t>(2 * l)], hi = nums[static_cast<size_t>(2 * l + 1)];
          if (!(lo < hi)) fail_at(line_no, 1, "box bounds must satisfy lo < hi on every axis");
          s.domain.lo.push_back(lo);
          s.domain.hi.push_back(hi);
        }
        s.domain.kind = Domain::Kind::kBox;
      } else {
        fail_at(line_no, 1, "domain kind must be 'torus' or 'box'");
      }
      have_domain = true;
    } else if (word == "rmax") {
      if (s.r_max != -1) fail_at(line_no, 1, "duplicate rmax");
      if (!(ls >> s.r_max) || s.r_max < 0) fail_at(line_no, 1, "rmax needs a non-negative integer");
    } else if (word == "field") {
      if (s.d == -1) fail_at(line_no, 1, "dim must come before field");
      std::string rest;
      std::getline(ls, rest);
      std::vector<std::string> comps = split_top_level(rest);
      if (static_cast<int>(comps.size()) != s.d)
        fail_at(line_no, 1, "field has " + std::to_string(comps.size()) + " components, expected " +
                                std::to_string(s.d));
      VectorField f;
      for (const std::string& c : comps) f.components.push_back(parse_expr(c, s.d, line_no));
      f.label = "X^{0" + std::to_string(s.generators.size() + 1) + "}";
      for (const Expr& c : f.components)
        if (c.uses_abs()) fail_at(line_no, 1, "abs() is not allowed in field components");
      s.generators.push_back(std::move(f));
    } else if (word == "volume") {
      if (s.d == -1) fail_at(line_no, 1, "dim must come before volume");
      if (have_volume) fail_at(line_no, 1, "duplicate volume");
      std::string rest;
      std::getline(ls, rest);
      s.omega_density = parse_expr(rest, s.d, line_no);
      have_volume = true;
    } else {
      fail_at(line_no, 1, "unknown directive '" + word + "'");
    }
  }

  if (s.d == -1) throw ParseError("missing 'dim' line");
  if (!have_domain) throw ParseError("missing 'domain' line");
  if (s.r_max == -1) s.r_max = 1;
  s.validate();
  return s;
}

SRStructure load_structure(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open structure file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_structure(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ":" + e.what());
  }
}

}  // namespace srlab

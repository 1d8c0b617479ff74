#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "srlab/expr.hpp"

namespace srlab {

// Smooth vector field on R^d (or a torus), one coordinate expression per
// component, plus a display label such as "X^{12}".
struct VectorField {
  std::vector<Expr> components;
  std::string label;

  int dim() const { return static_cast<int>(components.size()); }
  Eigen::VectorXd eval(const Eigen::VectorXd& point) const;
  bool symbolically_zero() const;
  std::string str() const;  // "(c0, c1, ...)"
};

// Coordinate chart the structure lives on.  A box is an axis-aligned product
// of closed intervals; a torus identifies x_l with x_l + period_l.
struct Domain {
  enum class Kind { kBox, kTorus };
  Kind kind = Kind::kBox;
  std::vector<double> lo, hi;     // box bounds
  std::vector<double> periods;    // torus periods

  int dim() const {
    return static_cast<int>(kind == Kind::kBox ? lo.size() : periods.size());
  }
  // Low-discrepancy interior point, deterministic in k (Kronecker sequence).
  Eigen::VectorXd sample(int k) const;
  bool contains(const Eigen::VectorXd& p) const;
  std::string str() const;
};

// A set of generating fields with the bookkeeping needed downstream: ambient
// dimension, chart, how deep to explore iterated brackets, and the density
// of the background volume (relative to Lebesgue coordinates).
struct SRStructure {
  int d = 0;
  Domain domain;
  std::vector<VectorField> generators;
  int r_max = 1;
  Expr omega_density = Expr::constant(1.0);

  int generator_count() const { return static_cast<int>(generators.size()); }
  // Checks the declared invariants (dimensions agree, at least one generator,
  // omega positive on a sample grid, no abs() inside field components).
  void validate() const;
  // Canonical plain-text form; also what gets hashed into reports.
  std::string canonical_text() const;
};

// Commutator [X, Y]^k = sum_l (X^l d_l Y^k - Y^l d_l X^k), simplified.
VectorField lie_bracket(const VectorField& x, const VectorField& y);

struct ZeroCheck {
  bool zero = false;
  bool symbolic = false;   // decided structurally, no sampling involved
  int skipped_samples = 0; // samples lost to evaluation singularities
};

// Structural zero test with a sampled fallback: evaluates on `samples`
// low-discrepancy points of the domain and accepts |component| <= tol.
// Samples that hit evaluation singularities are skipped; if every sample is
// lost the check fails with an error.
ZeroCheck is_identically_zero(const VectorField& f, const Domain& domain,
                              double tol = 1e-10, int samples = 200);

// Parses the structure description language:
//
//   # comment
//   dim 3
//   domain torus 6.283185307179586 6.283185307179586 6.283185307179586
//   # or: domain box -2 2 -2 2 -2 2
//   rmax 2
//   field 1, 0, 0
//   field 0, 1, x0
//   volume 1
//
// "dim" must precede any "field"; "volume" defaults to 1.  Diagnostics carry
// line:column positions.
SRStructure parse_structure(const std::string& text);
SRStructure load_structure(const std::string& path);

}  // namespace srlab

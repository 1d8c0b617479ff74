#pragma once

#include <vector>

#include "srlab/brackets.hpp"

namespace srlab {

// Pointwise data of the scaled Riemannian approximations at one base point:
// the coefficient matrices A_i (one row per depth-i bracket field, written in
// the coordinate frame).  The inverse metric matrix is
//
//   Ginv(h) = sum_i h^(2i) A_i^T A_i,
//
// equivalently B(h)^T B(h) for the row-stack B(h) = [A_0; h A_1; ...].
struct GramData {
  Eigen::VectorXd point;
  std::vector<Eigen::MatrixXd> A;  // A[i] is N_i x d

  int d() const { return static_cast<int>(point.size()); }
  int r() const { return static_cast<int>(A.size()) - 1; }
  int total_rows() const;

  Eigen::MatrixXd ginv(double h) const;
  // Row-stack with layer i scaled by h^i; its Gram matrix is ginv(h).
  Eigen::MatrixXd weighted_stack(double h) const;
  // det Ginv(h), computed from a QR factorization of the weighted stack so
  // tiny determinants keep relative accuracy.
  double det_ginv(double h) const;
};

// Evaluates every bracket field at the point.  Requires the spanning
// condition at the point (throws HormanderError otherwise).
GramData assemble(const BracketTable& t, const Eigen::VectorXd& point);

// Quadratic form of the approximating metric: v^T Ginv(h)^{-1} v.  Solved
// with a symmetric factorization; falls back to an SVD pseudo-solve when the
// factorization reports hopeless conditioning (very small h).
double metric_eval(const GramData& g, double h, const Eigen::VectorXd& v);

// Independent route for the same number: minimum of |w|^2 over all layer
// combinations w with sum_i h^i A_i^T w_i = v, via QR of the weighted stack.
// Used to cross-check metric_eval; keep the two implementations separate.
double metric_eval_oracle(const GramData& g, double h, const Eigen::VectorXd& v);

// Horizontal (h -> 0 limit) metric on the span of the layer-0 fields:
// least-norm preimage under A_0^T alone.  Throws DomainError when v is not
// in that span.
double g0_eval(const GramData& g, const Eigen::VectorXd& v);

struct DetExpansion {
  std::vector<double> coeffs;     // det Ginv(h) = sum_k coeffs[k] (h^2)^k
  int vanishing_order = 0;        // 2k for the first non-negligible coeffs[k]
  double leading_coeff = 0.0;     // coeffs at the vanishing order
  std::vector<double> grid_h;     // interpolation nodes actually used
  double amplification = 0.0;     // rough conditioning indicator of the fit
  std::vector<std::string> warnings;
};

// Exact polynomial interpolation of h -> det Ginv(h) in the variable t = h^2
// on a geometric node set.  `h_grid` seeds the nodes; it is extended by
// halving t when it has fewer distinct points than the degree bound needs.
DetExpansion det_expansion(const GramData& g, std::vector<double> h_grid = {});

}  // namespace srlab

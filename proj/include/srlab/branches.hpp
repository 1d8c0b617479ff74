#pragma once

#include <vector>

#include "srlab/gram.hpp"

namespace srlab {

// Output of the nested projection recursion at one point.  Layer j holds the
// nonzero eigenvalues (and eigenvectors) of P_j A_j^T A_j P_j, where P_j
// projects onto the orthogonal complement of everything collected in layers
// < j.  These eigenvalues are the h -> 0 limits of the eigenvalue branches
// of Ginv(h) at order h^(2j).
struct HatLayer {
  int layer = 0;
  std::vector<double> prefactors;  // descending
  Eigen::MatrixXd vectors;         // d x count, orthonormal columns
};

struct NestedHats {
  std::vector<HatLayer> layers;  // only layers that contributed eigenvalues
  std::vector<int> n;            // cumulative dimensions n_0 <= n_1 <= ... = d
  double f = 1.0;                // product of every retained eigenvalue
  int sigma = 0;                 // sum_j j * (count at layer j)
  std::vector<std::string> warnings;
};

// `tol` is relative: the cutoff at layer j is tol * trace(A_j^T A_j), so the
// scale of the unprojected layer decides what counts as zero.  Eigenvalues
// within a factor 10 of the cutoff are kept/dropped as usual but reported in
// `warnings`.
NestedHats nested_hats(const GramData& g, double tol = 1e-9);

// Limit volume data at a point: det Ginv(h) ~ f h^(2 sigma), and the limit
// of h^(Q-d) dvol(g_h) has coordinate density f^(-1/2).  `singular` is set
// when the point's local normalization disagrees with the structure's
// reference stratum (the density then uses the local exponent).
struct LimitDensity {
  double f = 1.0;
  int sigma = 0;          // local exponent
  double density = 1.0;   // f^(-1/2)
  bool singular = false;
  int q_local = 0;
  int q_reference = 0;
  NestedHats hats;
};

LimitDensity limit_density(const BracketTable& t, const Eigen::VectorXd& point,
                           double tol = 1e-9);

// One eigenvalue branch of Ginv(h) traced along a decreasing h grid.
struct Branch {
  std::vector<double> eigenvalues;  // aligned with the grid
  double slope = 0.0;               // fitted d log(lambda) / d log(h)
  int order = 0;                    // slope rounded to the nearest even integer
  bool order_ok = false;            // |slope - order| within 0.2
  double prefactor = 0.0;           // lambda / h^order extrapolated to h = 0
};

struct BranchFit {
  std::vector<double> h_grid;       // descending
  std::vector<Branch> branches;     // sorted by (order, prefactor)
};

// Eigen-decomposes Ginv(h) along the grid (via singular values of the
// weighted stack, which keeps tiny branches accurate), matches branches
// across neighbouring h by nearest log-eigenvalue with eigenvector-overlap
// tiebreak, and fits each branch's order and limit prefactor.
// Default grid: h = 2^-3 .. 2^-10.
BranchFit branch_fit(const GramData& g, std::vector<double> h_grid = {});

// Convenience bundle for reports: growth + both branch computations and
// how well they agree.
struct BranchReport {
  GrowthData growth;
  NestedHats hats;
  BranchFit fit;
  bool counts_match = false;        // fitted orders reproduce the growth jumps
  double max_rel_gap = 0.0;         // fit vs. limit prefactors, sorted match
};

BranchReport branch_report(const BracketTable& t, const Eigen::VectorXd& point,
                           std::vector<double> h_grid = {});

}  // namespace srlab

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "srlab/brackets.hpp"
#include "srlab/structure.hpp"

namespace srlab {

// Uniform periodic grid on a torus domain, nodes indexed row-major with the
// LAST axis fastest: idx = ((j_0 n + j_1) n + ...) n + j_{d-1}.
struct Grid {
  int d = 0;
  int n = 0;  // points per axis, >= 4
  std::vector<double> periods;

  long total() const {
    long t = 1;
    for (int i = 0; i < d; ++i) t *= n;
    return t;
  }
  double dx(int axis) const { return periods[static_cast<size_t>(axis)] / n; }
  Eigen::VectorXd coords(long idx) const;
  long neighbor(long idx, int axis, int shift) const;  // periodic wrap
};

Grid make_grid(const Domain& domain, int n);

// First-order centered-difference operator for one vector field:
// (Du)(p) = sum_l X^l(p) (u(p+e_l) - u(p-e_l)) / (2 dx_l).
// Coefficients must be periodic; violations name the offending axis.
Eigen::SparseMatrix<double> discretize_field(const VectorField& field, const Grid& grid);

enum class VolumeMode { kFixed, kRiemannian };

// Assembled from the quadratic form sum_i h^{2i} <W D_{ij} u, D_{ij} u>, so the
// matrix is symmetric positive semidefinite by construction and eigenvalues
// are taken against the diagonal weight matrix W.
struct DiscreteOperator {
  Grid grid;
  double h = 0.0;
  VolumeMode mode = VolumeMode::kFixed;
  Eigen::SparseMatrix<double> form;
  Eigen::VectorXd weights;  // diagonal of W, strictly positive

  double asymmetry() const;  // max |form - form^T| relative to max |form|
};

// h = 0 keeps only the layer-0 fields.  Fixed mode weights nodes by the
// structure's volume density; riemannian mode weights by
// h^(Q-d) det(Ginv(h))^(-1/2) (for h = 0, by the limit volume density) and
// requires the same growth vector at every grid node.
DiscreteOperator assemble(const BracketTable& t, const Grid& grid, double h, VolumeMode mode);

enum class EigMethod { kAuto, kDense, kIterative };

// k smallest eigenvalues of form u = lambda W u, ascending.  Dense solve below
// a size threshold, otherwise shift-invert subspace iteration (deterministic
// start block).
Eigen::VectorXd lowest_eigs(const DiscreteOperator& op, int k, EigMethod method = EigMethod::kAuto);

struct SpectrumStudy {
  VolumeMode mode = VolumeMode::kFixed;
  int k = 0;
  int grid_n = 0;
  std::vector<double> h;                          // as given, descending
  std::vector<std::vector<double>> lambda;        // fixed-volume eigenvalues per h
  std::vector<std::vector<double>> lambda_tilde;  // riemannian mode only
  std::vector<double> a;                          // riemannian: envelope (1+|Psi-1|)(1+|1/Psi-1|)
  std::vector<double> psi_lo, psi_hi;             // riemannian: grid range of Psi_h

  // diagnostics (positive values are violations)
  double max_monotonicity_violation = 0.0;  // lambda_k increases as h decreases
  double max_barrier_violation = 0.0;       // lambda_k(h) below lambda_k(0); needs an h=0 row
  double max_sandwich_violation = 0.0;      // lambda_tilde outside [a^-1 lambda, a lambda]
  std::vector<double> first_decrement;      // per k: |lambda_k(h_1) - lambda_k(h_0)|
  std::vector<double> last_decrement;       // per k: decrement across the last positive-h pair
};

// Eigenvalue tables over a descending h list, fanned out in parallel over h.
// In riemannian mode each h also gets the fixed-volume eigenvalues, the grid
// range of Psi_h and the envelope a(h) for the two-sided eigenvalue bound.
SpectrumStudy convergence_study(const BracketTable& t, const Grid& grid,
                                const std::vector<double>& h_list, int k, VolumeMode mode);

// Exact eigenvalues of the centered stencil on a flat torus with unit fields:
// sums of sin^2(j dx)/dx^2 over the axes, the lowest `count` of them.
std::vector<double> flat_torus_symbol_eigs(const Grid& grid, int count);

}  // namespace srlab

#pragma once

#include <vector>

#include "srlab/branches.hpp"

namespace srlab {

// Local frame Z_1..Z_d adapted to the bracket flag at `point`: the first n_0
// fields span the layer-0 distribution near the point and are orthonormal at
// it in the horizontal metric, the first n_i fields frame D_i.  Fields are
// symbolic, so they can be bracketed again for structure constants.
struct AdaptedFrame {
  Eigen::VectorXd point;
  std::vector<VectorField> fields;   // size d
  std::vector<int> n;                // cumulative layer dimensions, n.back() == d
  Eigen::MatrixXd frame_matrix;      // column k = Z_{k+1}(point)

  int d() const { return static_cast<int>(fields.size()); }
  int r() const { return static_cast<int>(n.size()) - 1; }
  int layer_of(int k) const;         // 0-based frame index -> layer index
};

// Builds a frame automatically: layer 0 from the eigendecomposition of
// A_0^T A_0 (vectors sqrt(mu) w are exactly orthonormal in the horizontal
// metric), realized as constant-coefficient combinations of the generators;
// higher layers greedily pick bracket fields that most enlarge the span.
// Requires a locally constant growth vector (probed by sampling); otherwise
// throws DomainError suggesting the singular-stratum tooling.
AdaptedFrame adapted_frame(const BracketTable& t, const Eigen::VectorXd& point);

// Wraps a caller-supplied frame after validating adaptedness: invertible at
// the point, layer blocks inside the right distributions, and layer 0
// orthonormal for the horizontal metric.
AdaptedFrame frame_from_fields(const BracketTable& t, const Eigen::VectorXd& point,
                               std::vector<VectorField> fields);

// b[j-1] holds the depth-j constants: row index enumerates the tuple
// (i_1..i_{j+1}) in {1..n_0}^{j+1} row-major, column kappa the coefficient of
// Z_{n_{j-1}+kappa+1} in the iterated bracket [Z_{i_1},[...,[Z_{i_j},
// Z_{i_{j+1}}]]] modulo D^{j-1} (coefficients of earlier layers dropped).
struct StructureConstants {
  std::vector<Eigen::MatrixXd> b;
  double max_overflow = 0.0;  // worst coefficient beyond layer n_j (should be ~0)
};

StructureConstants structure_constants(const AdaptedFrame& fr);

// B_j = sum over tuples of the outer product of the depth-j constants;
// by convention B_0 is the n_0 x n_0 identity.
std::vector<Eigen::MatrixXd> b_matrices(const StructureConstants& sc, const AdaptedFrame& fr);

// Coordinate density of Popp's volume at the point:
// (prod_j det B_j)^(-1/2) / |det frame_matrix|.
double popp_density(const AdaptedFrame& fr);
double popp_density(const AdaptedFrame& fr, const StructureConstants& sc);

// Bracket coefficient matrices re-expressed in the adapted frame.  M[i] is
// the layer-i diagonal block of the barred Gram matrix; M_0 = identity and
// M_i equals B_i.  `det_ratios` tracks det(G~inv(h)) / (h^(2 sigma) prod det
// M_i) along a small h-grid; it must approach 1.
struct MData {
  std::vector<Eigen::MatrixXd> M;
  std::vector<double> ratio_h;
  std::vector<double> det_ratios;
  double max_overflow = 0.0;  // coefficients above a field's own layer
};

MData m_matrices(const BracketTable& t, const AdaptedFrame& fr);

// Both volume pipelines at one equiregular point.
struct VolumeComparison {
  double popp = 0.0;      // structure-constant route
  double limit = 0.0;     // nested-eigenvalue route f^(-1/2)
  double rel_gap = 0.0;
  bool ok = false;
  std::vector<double> b_dets;
  double frame_det = 0.0;
  LimitDensity limit_data;
};

VolumeComparison compare_volumes(const BracketTable& t, const Eigen::VectorXd& point,
                                 double tol = 1e-6);

}  // namespace srlab

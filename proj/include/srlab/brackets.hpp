#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srlab/structure.hpp"

namespace srlab {

// One iterated bracket X_I = [X^{0 i1}, [X^{0 i2}, [... [X^{0 ik}, X^{0 ik+1}]]]]
// together with its multi-index I (1-based generator indices).  Layer-0
// entries are the generators themselves with I = (j).
struct BracketEntry {
  std::vector<int> multiindex;
  VectorField field;
};

// Deterministic table of all iterated brackets that are not identically
// zero, layer by layer (layer i holds multi-indices of length i+1, ordered
// lexicographically).  Trailing all-zero layers are dropped, so `r()` is the
// highest depth that still contributes fields, capped by the structure's
// r_max.
struct BracketTable {
  SRStructure structure;
  std::vector<std::vector<BracketEntry>> layers;
  // Multi-indices whose fields vanished only under sampling (not provably
  // zero); recorded so reports can flag the weaker evidence.
  std::vector<std::string> sampled_zero_drops;

  int r() const { return static_cast<int>(layers.size()) - 1; }
  int layer_size(int i) const { return static_cast<int>(layers[static_cast<size_t>(i)].size()); }
  std::vector<int> layer_sizes() const;
  int total_fields() const;

  // Values of every field in layers 0..i at a point, stacked as rows
  // (used for rank computations).
  Eigen::MatrixXd stacked_values(int i, const Eigen::VectorXd& point) const;
  // Values of the layer-i fields only, one row per field: the coefficient
  // matrix A_i(point) of size N_i x d.
  Eigen::MatrixXd layer_matrix(int i, const Eigen::VectorXd& point) const;

  // Smallest Q over a fixed low-discrepancy reference grid; the baseline used
  // to flag singular points.  Computed lazily, cached.
  int reference_Q(double tol = 1e-9) const;

 private:
  mutable std::optional<int> reference_q_cache_;
};

// Growth data of the flag D_0 c D_1 c ... at one point.
struct GrowthData {
  Eigen::VectorXd point;
  std::vector<int> n;   // n_i = dim D_i(point), ending at the first i with n_i = d
  int step = 0;         // r(point) + 1
  int sigma = 0;        // sum_i i * (n_i - n_{i-1})
  int Q = 0;            // sum_i (i+1) * (n_i - n_{i-1})
  bool singular = false;

  int r() const { return static_cast<int>(n.size()) - 1; }
};

// Enumerates brackets up to structure.r_max, pruning identically-zero fields
// (a zero suffix forces a zero bracket, so pruned prefixes stay pruned).
BracketTable enumerate_brackets(const SRStructure& s, double tol = 1e-10, int samples = 200);

// Ranks via singular values with relative cutoff `tol` (times the largest
// singular value).  Throws HormanderError if the ranks never reach d within
// the table's depth.  `reference_q`: baseline for the singular flag; when
// absent, the table's reference grid value is used.
GrowthData growth_at(const BracketTable& t, const Eigen::VectorXd& point, double tol = 1e-9,
                     std::optional<int> reference_q = std::nullopt);

struct ScanPoint {
  GrowthData growth;
  bool hormander_ok = true;
  std::string error;  // set when hormander_ok is false
};

struct ScanReport {
  std::vector<ScanPoint> points;
  std::vector<std::pair<std::vector<int>, int>> strata;  // growth vector -> count
  int q_min = 0;                                         // min Q over good points
  std::vector<Eigen::VectorXd> singular_samples;
  std::vector<Eigen::VectorXd> failed_points;
  // True when the deepest explored layer still increased ranks somewhere:
  // the cap r_max may be hiding deeper structure.
  bool depth_cap_active = false;
};

// Evaluates growth on an axis-aligned grid with `per_axis` points per axis.
// Points failing the spanning condition are listed; the scan still finishes.
ScanReport hormander_scan(const BracketTable& t, int per_axis, double tol = 1e-9);

// The grid hormander_scan uses: box domains include both endpoints, torus
// domains step period/per_axis.
std::vector<Eigen::VectorXd> scan_grid(const Domain& domain, int per_axis);

}  // namespace srlab

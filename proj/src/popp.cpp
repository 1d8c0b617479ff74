#include "srlab/popp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace srlab {

namespace {

std::string point_str(const Eigen::VectorXd& p) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
  os << ")";
  return os.str();
}

// Constant-coefficient combination of fields; exact zeros drop out in
// simplification, so clean eigenvectors yield clean fields.
VectorField constant_combination(const std::vector<BracketEntry>& layer,
                                 const Eigen::VectorXd& coeff, const std::string& label) {
  int d = layer.front().field.dim();
  VectorField out;
  out.label = label;
  for (int k = 0; k < d; ++k) {
    std::vector<Expr> terms;
    for (size_t j = 0; j < layer.size(); ++j)
      terms.push_back(Expr::constant(coeff[static_cast<Eigen::Index>(j)]) *
                      layer[j].field.components[static_cast<size_t>(k)]);
    out.components.push_back(Expr::add(std::move(terms)).simplified());
  }
  return out;
}

}  // namespace

int AdaptedFrame::layer_of(int k) const {
  for (size_t i = 0; i < n.size(); ++i)
    if (k < n[i]) return static_cast<int>(i);
  throw DomainError("layer_of: index out of range");
}

AdaptedFrame adapted_frame(const BracketTable& t, const Eigen::VectorXd& point) {
  GrowthData base = growth_at(t, point);
  const int d = t.structure.d;

  // The construction needs a locally constant growth vector: probe a small
  // ball.  Points of a lower stratum have no adapted frame in this sense.
  double scale = 0.0;
  const Domain& dom = t.structure.domain;
  for (int l = 0; l < d; ++l) {
    double extent = dom.kind == Domain::Kind::kTorus
                        ? dom.periods[static_cast<size_t>(l)]
                        : dom.hi[static_cast<size_t>(l)] - dom.lo[static_cast<size_t>(l)];
    scale = std::max(scale, extent);
  }
  double radius = 1e-3 * scale;
  for (int k = 0; k < 2 * d + 6; ++k) {
    Eigen::VectorXd dir(d);
    for (int l = 0; l < d; ++l) dir[l] = dom.sample(k + 17)[l];  // arbitrary spread
    dir = (dir.norm() > 0 ? dir.normalized() : Eigen::VectorXd::Unit(d, 0)).eval();
    if (k % 2) dir = -dir;
    GrowthData g = growth_at(t, point + radius * dir);
    if (g.n != base.n)
      throw DomainError("growth vector is not constant near " + point_str(point) +
                        "; this point sits on a singular stratum, where no adapted frame "
                        "in this sense exists");
  }

  AdaptedFrame fr;
  fr.point = point;
  fr.n = base.n;

  // Layer 0: eigenvectors of A_0^T A_0 scaled by sqrt(eigenvalue) are
  // orthonormal for the horizontal metric at the point.  Each is realized as
  // the least-norm constant combination of the generators hitting it.
  Eigen::MatrixXd a0 = t.layer_matrix(0, point);
  Eigen::MatrixXd k0 = a0.transpose() * a0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k0);
  if (es.info() != Eigen::Success) throw NumericError("adapted_frame: eigensolver failed");
  double cutoff = 1e-9 * k0.trace();
  int n0 = base.n[0];
  std::vector<Eigen::VectorXd> targets;
  for (int i = d - 1; i >= 0 && static_cast<int>(targets.size()) < n0; --i) {
    double mu = es.eigenvalues()[i];
    if (mu <= cutoff)
      throw NumericError("adapted_frame: horizontal rank dropped below the growth vector");
    targets.push_back(std::sqrt(mu) * es.eigenvectors().col(i));
  }

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a0.transpose());
  std::vector<Eigen::VectorXd> coeffs;
  for (const Eigen::VectorXd& z : targets) coeffs.push_back(cod.solve(z));

  // Cosmetic but deterministic: order layer-0 fields by their dominant
  // generator and point the dominant coefficient up; a signed permutation
  // keeps orthonormality.
  std::vector<int> order(coeffs.size());
  for (size_t i = 0; i < coeffs.size(); ++i) order[i] = static_cast<int>(i);
  auto dominant = [&](int i) {
    int arg = 0;
    for (int j = 1; j < coeffs[static_cast<size_t>(i)].size(); ++j)
      if (std::abs(coeffs[static_cast<size_t>(i)][j]) > std::abs(coeffs[static_cast<size_t>(i)][arg])) arg = j;
    return arg;
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dominant(a) < dominant(b); });
  for (int idx : order) {
    Eigen::VectorXd c = coeffs[static_cast<size_t>(idx)];
    if (c[dominant(idx)] < 0.0) c = -c;
    fr.fields.push_back(constant_combination(
        t.layers[0], c, "Z_" + std::to_string(fr.fields.size() + 1)));
  }

  // Higher layers: greedy pivoting on the bracket fields, added unmodified.
  Eigen::MatrixXd values(d, d);
  for (int k = 0; k < n0; ++k) values.col(k) = fr.fields[static_cast<size_t>(k)].eval(point);
  int filled = n0;
  for (int i = 1; i <= fr.r(); ++i) {
    int want = fr.n[static_cast<size_t>(i)] - fr.n[static_cast<size_t>(i - 1)];
    std::vector<bool> used(t.layers[static_cast<size_t>(i)].size(), false);
    for (int pick = 0; pick < want; ++pick) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(values.leftCols(filled));
      Eigen::MatrixXd qbasis = qr.householderQ() * Eigen::MatrixXd::Identity(d, filled);
      int best = -1;
      double best_res = 0.0;
      for (size_t j = 0; j < t.layers[static_cast<size_t>(i)].size(); ++j) {
        if (used[j]) continue;
        Eigen::VectorXd v = t.layers[static_cast<size_t>(i)][j].field.eval(point);
        double res = (v - qbasis * (qbasis.transpose() * v)).norm();
        if (res > best_res + 1e-14) {
          best_res = res;
          best = static_cast<int>(j);
        }
      }
      if (best < 0 || best_res <= 1e-9)
        throw NumericError("adapted_frame: layer " + std::to_string(i) +
                           " candidates do not enlarge the span as the growth vector demands");
      used[static_cast<size_t>(best)] = true;
      VectorField zf = t.layers[static_cast<size_t>(i)][static_cast<size_t>(best)].field;
      zf.label = "Z_" + std::to_string(filled + 1) + " = " + zf.label;
      values.col(filled) = zf.eval(point);
      fr.fields.push_back(std::move(zf));
      ++filled;
    }
  }

  fr.frame_matrix = values;
  if (std::abs(values.determinant()) < 1e-12)
    throw NumericError("adapted_frame: frame matrix is numerically singular");
  return fr;
}

AdaptedFrame frame_from_fields(const BracketTable& t, const Eigen::VectorXd& point,
                               std::vector<VectorField> fields) {
  const int d = t.structure.d;
  if (static_cast<int>(fields.size()) != d)
    throw DomainError("frame_from_fields: need exactly d fields");
  GrowthData base = growth_at(t, point);

  AdaptedFrame fr;
  fr.point = point;
  fr.n = base.n;
  fr.fields = std::move(fields);
  fr.frame_matrix.resize(d, d);
  for (int k = 0; k < d; ++k) fr.frame_matrix.col(k) = fr.fields[static_cast<size_t>(k)].eval(point);
  if (std::abs(fr.frame_matrix.determinant()) < 1e-12)
    throw DomainError("frame_from_fields: fields are dependent at the point");

  // each layer block must sit inside the corresponding distribution
  for (int i = 0; i <= fr.r(); ++i) {
    Eigen::MatrixXd span = t.stacked_values(i, point).transpose();  // d x rows
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(span);
    for (int k = (i ? fr.n[static_cast<size_t>(i - 1)] : 0); k < fr.n[static_cast<size_t>(i)]; ++k) {
      Eigen::VectorXd v = fr.frame_matrix.col(k);
      Eigen::VectorXd res = span * cod.solve(v) - v;
      if (res.norm() > 1e-8 * (1.0 + v.norm()))
        throw DomainError("frame_from_fields: field " + std::to_string(k + 1) +
                          " is not inside its layer's distribution at the point");
    }
  }

  // layer 0 must be orthonormal for the horizontal metric at the point
  Eigen::MatrixXd a0t = t.layer_matrix(0, point).transpose();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod0(a0t);
  int n0 = fr.n[0];
  Eigen::MatrixXd pre(a0t.cols(), n0);
  for (int k = 0; k < n0; ++k) {
    Eigen::VectorXd u = cod0.solve(fr.frame_matrix.col(k));
    if ((a0t * u - fr.frame_matrix.col(k)).norm() > 1e-8 * (1.0 + fr.frame_matrix.col(k).norm()))
      throw DomainError("frame_from_fields: layer-0 field " + std::to_string(k + 1) +
                        " is not horizontal at the point");
    pre.col(k) = u;
  }
  Eigen::MatrixXd gram = pre.transpose() * pre;
  if ((gram - Eigen::MatrixXd::Identity(n0, n0)).cwiseAbs().maxCoeff() > 1e-8)
    throw DomainError("frame_from_fields: layer-0 fields are not orthonormal in the "
                      "horizontal metric at the point");
  return fr;
}

StructureConstants structure_constants(const AdaptedFrame& fr) {
  const int d = fr.d();
  const int n0 = fr.n[0];
  StructureConstants sc;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(fr.frame_matrix);

  // Right-nested brackets of the layer-0 fields, one depth at a time.  A
  // std::map over tuples enumerates rows in row-major order (last index
  // fastest), which fixes the row convention of each B block.
  std::map<std::vector<int>, VectorField> prev;
  for (int a = 1; a <= n0; ++a) prev[{a}] = fr.fields[static_cast<size_t>(a - 1)];

  for (int j = 1; j <= fr.r(); ++j) {
    std::map<std::vector<int>, VectorField> curr;
    for (const auto& [tup, field] : prev)
      for (int a = 1; a <= n0; ++a) {
        std::vector<int> key;
        key.push_back(a);
        key.insert(key.end(), tup.begin(), tup.end());
        curr[std::move(key)] = lie_bracket(fr.fields[static_cast<size_t>(a - 1)], field);
      }

    int lo = fr.n[static_cast<size_t>(j - 1)], hi = fr.n[static_cast<size_t>(j)];
    Eigen::MatrixXd bj = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(curr.size()), hi - lo);
    int row = 0;
    for (const auto& [tup, field] : curr) {
      Eigen::VectorXd coef = lu.solve(field.eval(fr.point));
      for (int l = hi; l < d; ++l)
        sc.max_overflow = std::max(sc.max_overflow, std::abs(coef[l]));
      for (int l = lo; l < hi; ++l) bj(row, l - lo) = coef[l];
      ++row;
    }
    sc.b.push_back(std::move(bj));
    prev = std::move(curr);
  }
  if (sc.max_overflow > 1e-6)
    throw NumericError("structure_constants: brackets leak beyond their layer (worst " +
                       std::to_string(sc.max_overflow) + "); the frame is not adapted");
  return sc;
}

std::vector<Eigen::MatrixXd> b_matrices(const StructureConstants& sc, const AdaptedFrame& fr) {
  std::vector<Eigen::MatrixXd> bs;
  bs.push_back(Eigen::MatrixXd::Identity(fr.n[0], fr.n[0]));
  for (const Eigen::MatrixXd& bj : sc.b) bs.push_back(bj.transpose() * bj);
  return bs;
}

double popp_density(const AdaptedFrame& fr, const StructureConstants& sc) {
  std::vector<Eigen::MatrixXd> bs = b_matrices(sc, fr);
  double prod = 1.0;
  for (const Eigen::MatrixXd& b : bs) {
    double det = b.determinant();
    if (!(det > 0.0))
      throw NumericError("popp_density: a B matrix is not positive definite (det " +
                         std::to_string(det) + ")");
    prod *= det;
  }
  return 1.0 / (std::sqrt(prod) * std::abs(fr.frame_matrix.determinant()));
}

double popp_density(const AdaptedFrame& fr) {
  return popp_density(fr, structure_constants(fr));
}

MData m_matrices(const BracketTable& t, const AdaptedFrame& fr) {
  const int d = fr.d();
  MData out;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(fr.frame_matrix);

  for (int i = 0; i <= fr.r(); ++i) {
    int lo = i ? fr.n[static_cast<size_t>(i - 1)] : 0, hi = fr.n[static_cast<size_t>(i)];
    int rows = i < static_cast<int>(t.layers.size()) ? t.layer_size(i) : 0;
    Eigen::MatrixXd ci = Eigen::MatrixXd::Zero(rows, d);
    for (int j = 0; j < rows; ++j) {
      Eigen::VectorXd coef = lu.solve(t.layers[static_cast<size_t>(i)][static_cast<size_t>(j)].field.eval(fr.point));
      ci.row(j) = coef.transpose();
      for (int l = hi; l < d; ++l) out.max_overflow = std::max(out.max_overflow, std::abs(coef[l]));
    }
    Eigen::MatrixXd seg = ci.middleCols(lo, hi - lo);
    out.M.push_back(seg.transpose() * seg);
  }
  if (out.max_overflow > 1e-6)
    throw NumericError("m_matrices: a bracket field leaks beyond its layer (worst " +
                       std::to_string(out.max_overflow) + ")");

  // det Ginv(h) against h^(2 sigma) * prod det M_i along a small grid.  The
  // full table enters here (layers past the local step only add higher-order
  // terms), and the frame change of basis contributes (det F)^2.
  int sigma = 0;
  double mdet = 1.0;
  for (int i = 0; i <= fr.r(); ++i) {
    int lo = i ? fr.n[static_cast<size_t>(i - 1)] : 0, hi = fr.n[static_cast<size_t>(i)];
    sigma += i * (hi - lo);
    mdet *= out.M[static_cast<size_t>(i)].determinant();
  }
  double fdet2 = std::pow(fr.frame_matrix.determinant(), 2);
  std::vector<Eigen::MatrixXd> grams;
  for (int i = 0; i <= t.r(); ++i) {
    Eigen::MatrixXd ai = t.layer_matrix(i, fr.point);
    grams.push_back(ai.transpose() * ai);
  }
  for (int k = 2; k <= 8; ++k) {
    double h = std::pow(2.0, -k);
    Eigen::MatrixXd ginv = Eigen::MatrixXd::Zero(d, d);
    double w = 1.0;
    for (const Eigen::MatrixXd& gi : grams) {
      ginv.noalias() += w * gi;
      w *= h * h;
    }
    out.ratio_h.push_back(h);
    out.det_ratios.push_back(ginv.determinant() / (fdet2 * std::pow(h, 2 * sigma) * mdet));
  }
  return out;
}

VolumeComparison compare_volumes(const BracketTable& t, const Eigen::VectorXd& point, double tol) {
  VolumeComparison out;
  AdaptedFrame fr = adapted_frame(t, point);
  StructureConstants sc = structure_constants(fr);
  for (const Eigen::MatrixXd& b : b_matrices(sc, fr)) out.b_dets.push_back(b.determinant());
  out.frame_det = fr.frame_matrix.determinant();
  out.popp = popp_density(fr, sc);
  out.limit_data = limit_density(t, point);
  out.limit = out.limit_data.density;
  out.rel_gap = std::abs(out.popp - out.limit) / std::max(std::abs(out.limit), 1e-300);
  out.ok = out.rel_gap <= tol;
  return out;
}

}  // namespace srlab

#include "srlab/gram.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <set>

namespace srlab {

int GramData::total_rows() const {
  int n = 0;
  for (const auto& a : A) n += static_cast<int>(a.rows());
  return n;
}

Eigen::MatrixXd GramData::ginv(double h) const {
  if (!(h > 0.0)) throw DomainError("ginv: h must be positive");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d(), d());
  double w = 1.0;
  for (size_t i = 0; i < A.size(); ++i) {
    m.noalias() += w * A[i].transpose() * A[i];
    w *= h * h;
  }
  return m;
}

Eigen::MatrixXd GramData::weighted_stack(double h) const {
  Eigen::MatrixXd b(total_rows(), d());
  int at = 0;
  double w = 1.0;
  for (size_t i = 0; i < A.size(); ++i) {
    b.middleRows(at, A[i].rows()) = w * A[i];
    at += static_cast<int>(A[i].rows());
    w *= h;
  }
  return b;
}

double GramData::det_ginv(double h) const {
  if (!(h > 0.0)) throw DomainError("det_ginv: h must be positive");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(weighted_stack(h));
  // det(B^T B) = prod R_kk^2; products of squares, no sign bookkeeping
  double det = 1.0;
  Eigen::MatrixXd rdiag = qr.matrixQR().topRows(d());
  for (int k = 0; k < d(); ++k) det *= rdiag(k, k) * rdiag(k, k);
  return det;
}

GramData assemble(const BracketTable& t, const Eigen::VectorXd& point) {
  // growth_at also verifies the spanning condition and throws if it fails
  growth_at(t, point, 1e-9, 0);
  GramData g;
  g.point = point;
  for (int i = 0; i <= t.r(); ++i) g.A.push_back(t.layer_matrix(i, point));
  return g;
}

double metric_eval(const GramData& g, double h, const Eigen::VectorXd& v) {
  if (!(h > 0.0)) throw DomainError("metric_eval: h must be positive");
  if (v.size() != g.point.size()) throw DomainError("metric_eval: vector has wrong dimension");
  Eigen::MatrixXd m = g.ginv(h);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() == Eigen::Success && ldlt.rcond() > 1e-13)
    return v.dot(ldlt.solve(v));
  // Deep in the h -> 0 regime the layers are separated by many orders of
  // magnitude; a pseudo-solve keeps the answer finite and accurate on the
  // well-resolved part of the spectrum.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-15);
  if (svd.rank() < g.d())
    throw NumericError("metric_eval: metric matrix is numerically singular at this point");
  return v.dot(svd.solve(v));
}

double metric_eval_oracle(const GramData& g, double h, const Eigen::VectorXd& v) {
  if (!(h > 0.0)) throw DomainError("metric_eval_oracle: h must be positive");
  if (v.size() != g.point.size()) throw DomainError("metric_eval_oracle: vector has wrong dimension");
  // minimize |w|^2 subject to B(h)^T w = v.  With B = QR the constraint reads
  // R^T (Q^T w) = v, so the minimizer has Q^T w = R^{-T} v and no residual
  // component: the value is |R^{-T} v|^2.
  Eigen::MatrixXd b = g.weighted_stack(h);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
  Eigen::MatrixXd r = qr.matrixQR().topRows(g.d()).triangularView<Eigen::Upper>();
  for (int k = 0; k < g.d(); ++k)
    if (r(k, k) == 0.0)
      throw NumericError("metric_eval_oracle: weighted stack is rank deficient");
  Eigen::VectorXd y = r.transpose().triangularView<Eigen::Lower>().solve(v);
  return y.squaredNorm();
}

double g0_eval(const GramData& g, const Eigen::VectorXd& v) {
  if (v.size() != g.point.size()) throw DomainError("g0_eval: vector has wrong dimension");
  // least-norm w with A_0^T w = v, allowing rank-deficient A_0
  Eigen::MatrixXd at = g.A[0].transpose();  // d x N_0
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(at);
  Eigen::VectorXd w = cod.solve(v);
  double resid = (at * w - v).norm();
  if (resid > 1e-8 * (1.0 + v.norm()))
    throw DomainError("g0_eval: vector is not in the span of the layer-0 fields");
  return w.squaredNorm();
}

namespace {

// Coefficients a of sum_k a_k t_i^k = f_i for distinct nodes, via divided
// differences (Newton form) converted to the monomial basis.  Done in long
// double: the geometric node sets used here keep this numerically tame.
std::vector<double> vandermonde_solve(const std::vector<double>& t, std::vector<long double> f) {
  const int n = static_cast<int>(t.size());
  for (int k = 0; k < n - 1; ++k)
    for (int i = n - 1; i > k; --i)
      f[static_cast<size_t>(i)] = (f[static_cast<size_t>(i)] - f[static_cast<size_t>(i - 1)]) /
                                  static_cast<long double>(t[static_cast<size_t>(i)] - t[static_cast<size_t>(i - k - 1)]);
  for (int k = n - 2; k >= 0; --k)
    for (int i = k; i < n - 1; ++i)
      f[static_cast<size_t>(i)] -= static_cast<long double>(t[static_cast<size_t>(k)]) * f[static_cast<size_t>(i + 1)];
  std::vector<double> a(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) a[static_cast<size_t>(i)] = static_cast<double>(f[static_cast<size_t>(i)]);
  return a;
}

}  // namespace

DetExpansion det_expansion(const GramData& g, std::vector<double> h_grid) {
  // Degree bound on det Ginv as a polynomial in t = h^2: by Cauchy-Binet the
  // power of a d-row selection is the sum of its layer indices, so the
  // maximum is reached picking rows from the deepest layers first.
  int degree = 0, taken = 0;
  for (int i = g.r(); i >= 0 && taken < g.d(); --i) {
    int take = std::min<int>(g.d() - taken, static_cast<int>(g.A[static_cast<size_t>(i)].rows()));
    degree += i * take;
    taken += take;
  }
  const int k_count = degree + 1;

  // Distinct nodes in (0, 1], largest first; extend geometrically as needed.
  std::set<double, std::greater<double>> hs;
  for (double h : h_grid)
    if (h > 0.0 && h <= 1.0) hs.insert(h);
  DetExpansion out;
  if (static_cast<int>(hs.size()) < k_count) {
    double h = hs.empty() ? 1.0 : *hs.rbegin();
    if (hs.empty()) hs.insert(h);
    while (static_cast<int>(hs.size()) < k_count) {
      h /= std::sqrt(2.0);  // halves t = h^2 each step
      hs.insert(h);
    }
    if (!h_grid.empty())
      out.warnings.push_back("interpolation grid extended to " + std::to_string(k_count) +
                             " nodes to match the degree bound");
  }

  std::vector<double> t;
  std::vector<long double> f;
  double fmax = 0.0;
  for (double h : hs) {
    if (static_cast<int>(t.size()) == k_count) break;
    t.push_back(h * h);
    double det = g.det_ginv(h);
    f.push_back(static_cast<long double>(det));
    fmax = std::max(fmax, std::abs(det));
    out.grid_h.push_back(h);
  }

  out.coeffs = vandermonde_solve(t, std::move(f));

  double amax = 0.0;
  for (double a : out.coeffs) amax = std::max(amax, std::abs(a));
  out.amplification = fmax > 0.0 ? amax / fmax : 0.0;
  if (out.amplification > 1e8)
    out.warnings.push_back("fit is strongly amplified; coefficients may be inaccurate");
  for (double a : out.coeffs)
    if (a < -1e-10) {
      out.warnings.push_back("negative expansion coefficient " + std::to_string(a) +
                             "; determinant data is inconsistent with a clean expansion");
      break;
    }

  double thresh = 1e-8 * std::max(amax, 1e-300);
  int lead = k_count - 1;
  for (int k = 0; k < k_count; ++k)
    if (out.coeffs[static_cast<size_t>(k)] > thresh) {
      lead = k;
      break;
    }
  out.vanishing_order = 2 * lead;
  out.leading_coeff = out.coeffs[static_cast<size_t>(lead)];
  return out;
}

}  // namespace srlab

#include "srlab/branches.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

namespace srlab {

NestedHats nested_hats(const GramData& g, double tol) {
  const int d = g.d();
  NestedHats out;
  Eigen::MatrixXd basis(d, 0);  // orthonormal basis of the filled-up flag

  for (int j = 0; j <= g.r(); ++j) {
    Eigen::MatrixXd m = g.A[static_cast<size_t>(j)].transpose() * g.A[static_cast<size_t>(j)];
    double cutoff = tol * m.trace();
    if (!(cutoff > 0.0)) {
      out.n.push_back(static_cast<int>(basis.cols()));
      continue;  // layer vanishes at this point
    }
    if (basis.cols() > 0) {
      Eigen::MatrixXd p = Eigen::MatrixXd::Identity(d, d) - basis * basis.transpose();
      m = (p * m * p).eval();
      m = 0.5 * (m + m.transpose()).eval();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success)
      throw NumericError("nested_hats: eigensolver failed at layer " + std::to_string(j));

    HatLayer hl;
    hl.layer = j;
    std::vector<int> keep;
    for (int i = d - 1; i >= 0; --i) {
      double ev = es.eigenvalues()[i];
      if (ev > cutoff) keep.push_back(i);
      if (ev > cutoff / 10.0 && ev < cutoff * 10.0)
        out.warnings.push_back("layer " + std::to_string(j) + " eigenvalue " + std::to_string(ev) +
                               " is within a factor 10 of the rank cutoff");
    }
    if (!keep.empty()) {
      hl.vectors.resize(d, static_cast<Eigen::Index>(keep.size()));
      for (size_t c = 0; c < keep.size(); ++c) {
        double ev = es.eigenvalues()[keep[c]];
        hl.prefactors.push_back(ev);
        hl.vectors.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]);
        out.f *= ev;
        out.sigma += j;
      }
      Eigen::MatrixXd grown(d, basis.cols() + hl.vectors.cols());
      grown << basis, hl.vectors;
      basis = grown;
      out.layers.push_back(std::move(hl));
    }
    out.n.push_back(static_cast<int>(basis.cols()));
    if (basis.cols() == d) break;  // flag is full; deeper layers add nothing
  }

  if (basis.cols() != d)
    throw HormanderError("nested_hats: collected directions span only " +
                         std::to_string(basis.cols()) + " of " + std::to_string(d) +
                         " dimensions at this point");
  return out;
}

LimitDensity limit_density(const BracketTable& t, const Eigen::VectorXd& point, double tol) {
  LimitDensity out;
  GramData g = assemble(t, point);
  out.hats = nested_hats(g, tol);
  out.f = out.hats.f;
  out.sigma = out.hats.sigma;
  out.density = 1.0 / std::sqrt(out.f);
  out.q_local = out.sigma + t.structure.d;
  out.q_reference = t.reference_Q();
  out.singular = out.q_local > out.q_reference;
  return out;
}

namespace {

double safe_log(double v) { return std::log(std::max(v, 1e-300)); }

// Least-squares slope and intercept of y against x.
std::pair<double, double> line_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double denom = n * sxx - sx * sx;
  if (denom == 0.0) return {0.0, y.empty() ? 0.0 : sy / n};
  double slope = (n * sxy - sx * sy) / denom;
  return {slope, (sy - slope * sx) / n};
}

}  // namespace

BranchFit branch_fit(const GramData& g, std::vector<double> h_grid) {
  if (h_grid.empty())
    for (int k = 3; k <= 10; ++k) h_grid.push_back(std::pow(2.0, -k));
  std::sort(h_grid.begin(), h_grid.end(), std::greater<double>());
  if (h_grid.size() < 3) throw DomainError("branch_fit needs at least 3 grid values");
  for (double h : h_grid)
    if (!(h > 0.0)) throw DomainError("branch_fit: grid values must be positive");
  for (size_t i = 1; i < h_grid.size(); ++i)
    if (h_grid[i] == h_grid[i - 1])
      throw DomainError("branch_fit: grid values must be distinct");

  const int d = g.d();
  BranchFit out;
  out.h_grid = h_grid;
  std::vector<std::vector<double>> lam(static_cast<size_t>(d));  // per branch
  Eigen::MatrixXd prev_vectors(d, d);
  std::vector<double> prev_lambda(static_cast<size_t>(d));

  for (size_t step = 0; step < h_grid.size(); ++step) {
    // singular values of the weighted stack square to the eigenvalues of
    // Ginv(h); this resolves branches far below machine epsilon * ||Ginv||
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(g.weighted_stack(h_grid[step]), Eigen::ComputeThinV);
    Eigen::VectorXd lam_now(d);
    Eigen::MatrixXd vec_now(d, d);
    for (int i = 0; i < d; ++i) {
      double s = svd.singularValues()[d - 1 - i];  // ascending
      lam_now[i] = s * s;
      vec_now.col(i) = svd.matrixV().col(d - 1 - i);
    }

    std::vector<int> assign(static_cast<size_t>(d), -1);
    if (step == 0) {
      for (int i = 0; i < d; ++i) assign[static_cast<size_t>(i)] = i;
    } else {
      // nearest neighbour in log-eigenvalue; overlap with the previous
      // eigenvector breaks near-ties
      struct Cand {
        double cost, overlap;
        int branch, idx;
      };
      std::vector<Cand> cands;
      for (int b = 0; b < d; ++b)
        for (int i = 0; i < d; ++i)
          cands.push_back({std::abs(safe_log(lam_now[i]) - safe_log(prev_lambda[static_cast<size_t>(b)])),
                           std::abs(prev_vectors.col(b).dot(vec_now.col(i))), b, i});
      std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (std::abs(a.cost - b.cost) > 1e-9) return a.cost < b.cost;
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        return a.branch != b.branch ? a.branch < b.branch : a.idx < b.idx;
      });
      std::vector<bool> used_b(static_cast<size_t>(d)), used_i(static_cast<size_t>(d));
      for (const Cand& c : cands) {
        if (used_b[static_cast<size_t>(c.branch)] || used_i[static_cast<size_t>(c.idx)]) continue;
        assign[static_cast<size_t>(c.branch)] = c.idx;
        used_b[static_cast<size_t>(c.branch)] = used_i[static_cast<size_t>(c.idx)] = true;
      }
    }
    for (int b = 0; b < d; ++b) {
      int i = assign[static_cast<size_t>(b)];
      lam[static_cast<size_t>(b)].push_back(lam_now[i]);
      prev_lambda[static_cast<size_t>(b)] = lam_now[i];
      prev_vectors.col(b) = vec_now.col(i);
    }
  }

  // Fit on the small-h tail where the leading power dominates.
  size_t tail = std::max<size_t>(4, h_grid.size() / 2);
  tail = std::min(tail, h_grid.size());
  for (int b = 0; b < d; ++b) {
    Branch br;
    br.eigenvalues = lam[static_cast<size_t>(b)];
    std::vector<double> lx, ly;
    for (size_t s = h_grid.size() - tail; s < h_grid.size(); ++s) {
      lx.push_back(std::log(h_grid[s]));
      ly.push_back(safe_log(br.eigenvalues[s]));
    }
    br.slope = line_fit(lx, ly).first;
    int half = static_cast<int>(std::lround(br.slope / 2.0));
    br.order = 2 * std::max(0, half);
    br.order_ok = std::abs(br.slope - br.order) <= 0.2;

    // extrapolate lambda / h^order linearly in h^2 to h = 0
    size_t pts = std::min<size_t>(4, h_grid.size());
    std::vector<double> hx, hy;
    for (size_t s = h_grid.size() - pts; s < h_grid.size(); ++s) {
      hx.push_back(h_grid[s] * h_grid[s]);
      hy.push_back(br.eigenvalues[s] / std::pow(h_grid[s], br.order));
    }
    br.prefactor = line_fit(hx, hy).second;
    out.branches.push_back(std::move(br));
  }

  std::sort(out.branches.begin(), out.branches.end(), [](const Branch& a, const Branch& b) {
    return a.order != b.order ? a.order < b.order : a.prefactor < b.prefactor;
  });
  return out;
}

BranchReport branch_report(const BracketTable& t, const Eigen::VectorXd& point,
                           std::vector<double> h_grid) {
  BranchReport rep;
  rep.growth = growth_at(t, point);
  GramData g = assemble(t, point);
  rep.hats = nested_hats(g);
  rep.fit = branch_fit(g, std::move(h_grid));

  // limit prefactors as sorted (order, value) pairs
  std::vector<std::pair<int, double>> want;
  for (const HatLayer& hl : rep.hats.layers)
    for (double v : hl.prefactors) want.emplace_back(2 * hl.layer, v);
  std::sort(want.begin(), want.end());

  std::vector<std::pair<int, double>> got;
  for (const Branch& b : rep.fit.branches) got.emplace_back(b.order, b.prefactor);
  std::sort(got.begin(), got.end());

  rep.counts_match = want.size() == got.size();
  if (rep.counts_match)
    for (size_t i = 0; i < want.size(); ++i)
      if (want[i].first != got[i].first) rep.counts_match = false;

  rep.max_rel_gap = 0.0;
  if (rep.counts_match) {
    for (size_t i = 0; i < want.size(); ++i) {
      double denom = std::max(std::abs(want[i].second), 1e-30);
      rep.max_rel_gap = std::max(rep.max_rel_gap, std::abs(want[i].second - got[i].second) / denom);
    }
  } else {
    rep.max_rel_gap = std::numeric_limits<double>::infinity();
  }
  return rep;
}

}  // namespace srlab

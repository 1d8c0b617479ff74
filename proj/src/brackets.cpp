#include "srlab/brackets.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <map>
#include <sstream>

namespace srlab {

namespace {

std::string multiindex_str(const std::vector<int>& I) {
  std::string s = "(";
  for (size_t i = 0; i < I.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(I[i]);
  }
  return s + ")";
}

std::string point_str(const Eigen::VectorXd& p) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < p.size(); ++i) {
    if (i) os << ", ";
    os << p[i];
  }
  os << ")";
  return os.str();
}

std::string bracket_label(int layer, int j) {
  // X^{ij} with a comma once j needs two digits, to stay unambiguous
  if (j + 1 <= 9 && layer <= 9) return "X^{" + std::to_string(layer) + std::to_string(j + 1) + "}";
  return "X^{" + std::to_string(layer) + "," + std::to_string(j + 1) + "}";
}

int rank_of(const Eigen::MatrixXd& rows, double tol) {
  if (rows.rows() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  double cut = tol * sv[0];
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > cut) ++r;
  return r;
}

}  // namespace

std::vector<int> BracketTable::layer_sizes() const {
  std::vector<int> n;
  n.reserve(layers.size());
  for (const auto& l : layers) n.push_back(static_cast<int>(l.size()));
  return n;
}

int BracketTable::total_fields() const {
  int n = 0;
  for (const auto& l : layers) n += static_cast<int>(l.size());
  return n;
}

Eigen::MatrixXd BracketTable::layer_matrix(int i, const Eigen::VectorXd& point) const {
  const auto& layer = layers[static_cast<size_t>(i)];
  Eigen::MatrixXd a(static_cast<Eigen::Index>(layer.size()), structure.d);
  for (size_t j = 0; j < layer.size(); ++j) a.row(static_cast<Eigen::Index>(j)) = layer[j].field.eval(point);
  return a;
}

Eigen::MatrixXd BracketTable::stacked_values(int i, const Eigen::VectorXd& point) const {
  int rows = 0;
  for (int k = 0; k <= i; ++k) rows += layer_size(k);
  Eigen::MatrixXd m(rows, structure.d);
  int at = 0;
  for (int k = 0; k <= i; ++k) {
    Eigen::MatrixXd a = layer_matrix(k, point);
    m.middleRows(at, a.rows()) = a;
    at += static_cast<int>(a.rows());
  }
  return m;
}

int BracketTable::reference_Q(double tol) const {
  if (reference_q_cache_) return *reference_q_cache_;
  int qmin = -1;
  for (int k = 0; k < 64; ++k) {
    try {
      GrowthData g = growth_at(*this, structure.domain.sample(k), tol, 0);
      if (qmin < 0 || g.Q < qmin) qmin = g.Q;
    } catch (const HormanderError&) {
      // spanning can fail on a thin set; the reference minimum ignores it
    }
  }
  if (qmin < 0)
    throw HormanderError("bracket-generating condition failed on the whole reference grid");
  reference_q_cache_ = qmin;
  return qmin;
}

BracketTable enumerate_brackets(const SRStructure& s, double tol, int samples) {
  s.validate();
  BracketTable t;
  t.structure = s;

  std::vector<BracketEntry> layer0;
  for (int j = 0; j < s.generator_count(); ++j) {
    BracketEntry e;
    e.multiindex = {j + 1};
    e.field = s.generators[static_cast<size_t>(j)];
    e.field.label = bracket_label(0, j);
    layer0.push_back(std::move(e));
  }
  t.layers.push_back(std::move(layer0));

  for (int depth = 1; depth <= s.r_max; ++depth) {
    std::vector<BracketEntry> layer;
    // Lexicographic: outer loop over the new leading index, inner over the
    // previous layer (already sorted).  Dropped (zero) suffixes cannot
    // produce nonzero extensions, so pruning preserves completeness.
    for (int i1 = 1; i1 <= s.generator_count(); ++i1) {
      for (const BracketEntry& prev : t.layers.back()) {
        BracketEntry e;
        e.multiindex.push_back(i1);
        e.multiindex.insert(e.multiindex.end(), prev.multiindex.begin(), prev.multiindex.end());
        e.field = lie_bracket(s.generators[static_cast<size_t>(i1 - 1)], prev.field);
        ZeroCheck z = is_identically_zero(e.field, s.domain, tol, samples);
        if (z.zero) {
          if (!z.symbolic) t.sampled_zero_drops.push_back(multiindex_str(e.multiindex));
          continue;
        }
        e.field.label = bracket_label(depth, static_cast<int>(layer.size()));
        layer.push_back(std::move(e));
      }
    }
    if (layer.empty()) break;  // deeper layers bracket against zero: stop
    t.layers.push_back(std::move(layer));
  }
  return t;
}

GrowthData growth_at(const BracketTable& t, const Eigen::VectorXd& point, double tol,
                     std::optional<int> reference_q) {
  if (point.size() != t.structure.d)
    throw DomainError("growth_at: point has " + std::to_string(point.size()) +
                      " coordinates, expected " + std::to_string(t.structure.d));
  GrowthData g;
  g.point = point;
  int d = t.structure.d;
  int prev = 0;
  for (int i = 0; i <= t.r(); ++i) {
    int ni = rank_of(t.stacked_values(i, point), tol);
    if (ni < prev) ni = prev;  // ranks are monotone; guard against tol jitter
    g.n.push_back(ni);
    g.sigma += i * (ni - prev);
    g.Q += (i + 1) * (ni - prev);
    prev = ni;
    if (ni == d) break;
  }
  if (g.n.empty() || g.n.back() < d) {
    std::ostringstream os;
    os << "bracket-generating condition fails at " << point_str(point) << ": ranks (";
    for (size_t i = 0; i < g.n.size(); ++i) os << (i ? "," : "") << g.n[i];
    os << ") never reach " << d << " within depth " << t.r();
    throw HormanderError(os.str());
  }
  g.step = g.r() + 1;
  int qref = reference_q ? *reference_q : t.reference_Q(tol);
  g.singular = qref > 0 && g.Q > qref;
  return g;
}

std::vector<Eigen::VectorXd> scan_grid(const Domain& domain, int per_axis) {
  if (per_axis < 1) throw DomainError("scan grid needs at least one point per axis");
  int d = domain.dim();
  long total = 1;
  for (int l = 0; l < d; ++l) total *= per_axis;
  if (total > 200000) throw DomainError("scan grid too large (" + std::to_string(total) + " points)");

  std::vector<Eigen::VectorXd> pts;
  pts.reserve(static_cast<size_t>(total));
  std::vector<int> idx(static_cast<size_t>(d), 0);
  for (long c = 0; c < total; ++c) {
    Eigen::VectorXd p(d);
    for (int l = 0; l < d; ++l) {
      if (domain.kind == Domain::Kind::kTorus) {
        p[l] = domain.periods[static_cast<size_t>(l)] * idx[static_cast<size_t>(l)] / per_axis;
      } else if (per_axis == 1) {
        p[l] = 0.5 * (domain.lo[static_cast<size_t>(l)] + domain.hi[static_cast<size_t>(l)]);
      } else {
        double u = static_cast<double>(idx[static_cast<size_t>(l)]) / (per_axis - 1);
        p[l] = domain.lo[static_cast<size_t>(l)] +
               u * (domain.hi[static_cast<size_t>(l)] - domain.lo[static_cast<size_t>(l)]);
      }
    }
    pts.push_back(std::move(p));
    for (int l = d - 1; l >= 0; --l) {
      if (++idx[static_cast<size_t>(l)] < per_axis) break;
      idx[static_cast<size_t>(l)] = 0;
    }
  }
  return pts;
}

ScanReport hormander_scan(const BracketTable& t, int per_axis, double tol) {
  ScanReport rep;
  std::vector<Eigen::VectorXd> pts = scan_grid(t.structure.domain, per_axis);

  // First pass ignores the singular flag (baseline unknown until Q_min is in)
  std::map<std::vector<int>, int> strata;
  int qmin = -1;
  for (const Eigen::VectorXd& p : pts) {
    ScanPoint sp;
    try {
      sp.growth = growth_at(t, p, tol, 0);
      if (qmin < 0 || sp.growth.Q < qmin) qmin = sp.growth.Q;
      ++strata[sp.growth.n];
      if (sp.growth.r() == t.r() && t.r() > 0 && t.r() == t.structure.r_max) {
        // the table stops at the rmax ceiling (not because deeper brackets
        // vanished) and its top layer still changed ranks: deeper brackets
        // could matter, so flag the cap
        if (sp.growth.n.back() > sp.growth.n[static_cast<size_t>(sp.growth.r() - 1)])
          rep.depth_cap_active = true;
      }
    } catch (const HormanderError& e) {
      sp.hormander_ok = false;
      sp.error = e.what();
      rep.failed_points.push_back(p);
    }
    rep.points.push_back(std::move(sp));
  }
  if (qmin < 0) throw HormanderError("bracket-generating condition failed at every grid point");
  rep.q_min = qmin;
  for (ScanPoint& sp : rep.points) {
    if (!sp.hormander_ok) continue;
    sp.growth.singular = sp.growth.Q > qmin;
    if (sp.growth.singular && rep.singular_samples.size() < 32)
      rep.singular_samples.push_back(sp.growth.point);
  }
  for (auto& [vec, count] : strata) rep.strata.emplace_back(vec, count);
  return rep;
}

}  // namespace srlab

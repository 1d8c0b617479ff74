#include "srlab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <random>
#include <sstream>

#include "srlab/brackets.hpp"
#include "srlab/branches.hpp"
#include "srlab/errors.hpp"
#include "srlab/gram.hpp"
#include "srlab/io.hpp"
#include "srlab/laplace.hpp"
#include "srlab/popp.hpp"
#include "srlab/structure.hpp"

#ifndef SRLAB_FIXTURE_DIR
#define SRLAB_FIXTURE_DIR ""
#endif

namespace srlab {
namespace {

using ordered_json = nlohmann::ordered_json;

struct Opts {
  std::string input;
  std::string out;
  std::string format;  // "" = per-command default
  double tol = 1e-9;
  unsigned seed = 0;
  std::string point;
  std::string h_text = "0.5";
  std::string det_grid;
  std::string hgrid;
  std::string hlist;
  int grid = 0;
  int k = 8;
  std::string mode = "fixed";
  bool compare = false;
  std::string target;
};

struct LoadedStructure {
  std::string path;
  std::string hash;
  SRStructure s;
};

LoadedStructure load_input(const std::string& path) {
  LoadedStructure in;
  in.path = path;
  std::string content = read_file(path);
  in.hash = fnv1a_hex(content);
  try {
    in.s = parse_structure(content);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
  return in;
}

std::string trimmed(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  size_t b = s.find_last_not_of(" \t");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

double parse_number(const std::string& token, const char* what) {
  std::string t = trimmed(token);
  try {
    size_t used = 0;
    double v = std::stod(t, &used);
    if (used == t.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(std::string("cannot parse ") + what + " '" + token + "'");
}

Eigen::VectorXd parse_point(const std::string& text, int dim) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(parse_number(tok, "coordinate"));
  if (static_cast<int>(vals.size()) != dim)
    throw UsageError("--point needs " + std::to_string(dim) + " comma-separated coordinates");
  Eigen::VectorXd p(dim);
  for (int i = 0; i < dim; ++i) p[i] = vals[static_cast<size_t>(i)];
  return p;
}

// A scale is a plain number or "2^-7"; a list is comma-separated scales or a
// geometric range "2^-3:2^-10".
double parse_scale(const std::string& token) {
  std::string t = trimmed(token);
  if (t.rfind("2^", 0) == 0) {
    try {
      size_t used = 0;
      int e = std::stoi(t.substr(2), &used);
      if (used == t.size() - 2) return std::ldexp(1.0, e);
    } catch (const std::exception&) {
    }
    throw UsageError("cannot parse scale '" + token + "'");
  }
  return parse_number(t, "scale");
}

std::vector<double> parse_scales(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::string a = text.substr(0, text.find(':'));
    std::string b = text.substr(text.find(':') + 1);
    a = trimmed(a);
    b = trimmed(b);
    if (a.rfind("2^", 0) != 0 || b.rfind("2^", 0) != 0)
      throw UsageError("scale ranges use powers of two, like 2^-3:2^-10");
    int ea = std::stoi(a.substr(2)), eb = std::stoi(b.substr(2));
    if (ea <= eb) throw UsageError("scale range must descend");
    for (int e = ea; e >= eb; --e) out.push_back(std::ldexp(1.0, e));
    return out;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_scale(tok));
  if (out.empty()) throw UsageError("empty scale list");
  return out;
}

ordered_json vec_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ordered_json mat_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string point_text(const Eigen::VectorXd& p) {
  std::string s = "(";
  for (int i = 0; i < p.size(); ++i) s += (i ? ", " : "") + format_double(p[i]);
  return s + ")";
}

std::string index_text(const std::vector<int>& idx, char sep = '-') {
  std::string s;
  for (size_t i = 0; i < idx.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(idx[i]);
  }
  return s;
}

ordered_json base_json(const std::string& command, const LoadedStructure& in,
                       ordered_json options) {
  ordered_json j;
  j["schema"] = 1;
  j["command"] = command;
  j["input"] = in.path;
  j["input_hash"] = in.hash;
  j["options"] = std::move(options);
  return j;
}

std::string csv_prefix(const std::string& command, const LoadedStructure& in,
                       const std::string& options) {
  std::string s;
  s += "# schema: 1\n";
  s += "# command: " + command + "\n";
  s += "# input: " + in.path + "\n";
  s += "# input_hash: " + in.hash + "\n";
  if (!options.empty()) s += "# options: " + options + "\n";
  return s;
}

std::string csv_cell(const std::string& raw) {
  if (raw.find_first_of(",\"\n") == std::string::npos) return raw;
  std::string quoted = "\"";
  for (char c : raw) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

void emit(std::ostream& out, const std::string& path, std::string content) {
  if (!content.empty() && content.back() != '\n') content += '\n';
  if (path.empty()) {
    out << content;
  } else {
    write_file_atomic(path, content);
    out << "wrote " << path << "\n";
  }
}

std::string pick_format(const Opts& o, const std::string& fallback) {
  return o.format.empty() ? fallback : o.format;
}

// ---- subcommands ----------------------------------------------------------

void cmd_brackets(std::ostream& out, const Opts& o) {
  LoadedStructure in = load_input(o.input);
  BracketTable t = enumerate_brackets(in.s);
  std::string fmt = pick_format(o, "json");

  if (fmt == "json") {
    ordered_json j = base_json("brackets", in, {{"tol", o.tol}});
    j["d"] = in.s.d;
    j["rmax"] = in.s.r_max;
    j["r"] = t.r();
    j["layer_sizes"] = t.layer_sizes();
    ordered_json layers = ordered_json::array();
    for (int i = 0; i <= t.r(); ++i) {
      ordered_json layer;
      layer["layer"] = i;
      ordered_json entries = ordered_json::array();
      for (const BracketEntry& e : t.layers[static_cast<size_t>(i)]) {
        ordered_json ent;
        ent["index"] = e.multiindex;
        ent["label"] = e.field.label;
        ent["field"] = e.field.str();
        entries.push_back(std::move(ent));
      }
      layer["entries"] = std::move(entries);
      layers.push_back(std::move(layer));
    }
    j["layers"] = std::move(layers);
    j["sampled_zero_drops"] = t.sampled_zero_drops;
    emit(out, o.out, j.dump(2));
    return;
  }

  std::string csv = csv_prefix("brackets", in, "tol=" + format_double(o.tol));
  csv += "layer,index,label,field\n";
  for (int i = 0; i <= t.r(); ++i)
    for (const BracketEntry& e : t.layers[static_cast<size_t>(i)])
      csv += std::to_string(i) + "," + index_text(e.multiindex) + "," +
             csv_cell(e.field.label) + "," + csv_cell(e.field.str()) + "\n";
  for (const std::string& drop : t.sampled_zero_drops)
    csv += "# sampled-zero drop: " + drop + "\n";
  emit(out, o.out, csv);
}

ordered_json growth_json(const GrowthData& g) {
  ordered_json j;
  j["point"] = vec_json(g.point);
  j["n"] = g.n;
  j["step"] = g.step;
  j["sigma"] = g.sigma;
  j["Q"] = g.Q;
  j["singular"] = g.singular;
  return j;
}

void cmd_growth(std::ostream& out, const Opts& o) {
  LoadedStructure in = load_input(o.input);
  BracketTable t = enumerate_brackets(in.s);

  if (!o.point.empty()) {
    GrowthData g = growth_at(t, parse_point(o.point, in.s.d), o.tol);
    std::string fmt = pick_format(o, "json");
    if (fmt != "json") throw UsageError("single-point growth reports are json");
    ordered_json j = base_json("growth", in, {{"tol", o.tol}, {"point", o.point}});
    j.update(growth_json(g));
    j["q_reference"] = t.reference_Q(o.tol);
    emit(out, o.out, j.dump(2));
    return;
  }
  if (o.grid < 2) throw UsageError("growth needs --point or --grid N (N >= 2)");

  ScanReport rep = hormander_scan(t, o.grid, o.tol);
  std::string fmt = pick_format(o, "csv");
  if (fmt == "json") {
    ordered_json j = base_json("growth", in, {{"tol", o.tol}, {"grid", o.grid}});
    ordered_json pts = ordered_json::array();
    for (const ScanPoint& p : rep.points) {
      ordered_json pj = growth_json(p.growth);
      if (!p.hormander_ok) {
        pj["error"] = p.error;
        pj["point"] = vec_json(p.growth.point);
      }
      pj["hormander_ok"] = p.hormander_ok;
      pts.push_back(std::move(pj));
    }
    j["points"] = std::move(pts);
    ordered_json strata = ordered_json::array();
    for (const auto& [vec, count] : rep.strata)
      strata.push_back({{"n", vec}, {"count", count}});
    j["strata"] = std::move(strata);
    j["q_min"] = rep.q_min;
    j["singular_count"] = rep.singular_samples.size();
    j["failed_count"] = rep.failed_points.size();
    j["depth_cap_active"] = rep.depth_cap_active;
    emit(out, o.out, j.dump(2));
    return;
  }

  const int d = in.s.d;
  const int depth = t.r();
  std::string csv = csv_prefix("growth", in,
                               "tol=" + format_double(o.tol) + " grid=" + std::to_string(o.grid));
  for (int i = 0; i < d; ++i) csv += "x" + std::to_string(i) + ",";
  for (int i = 0; i <= depth; ++i) csv += "n_" + std::to_string(i) + ",";
  csv += "step,sigma,Q,singular\n";
  for (const ScanPoint& p : rep.points) {
    if (!p.hormander_ok) continue;
    const GrowthData& g = p.growth;
    for (int i = 0; i < d; ++i) csv += format_double(g.point[i]) + ",";
    for (int i = 0; i <= depth; ++i) {
      int ni = i < static_cast<int>(g.n.size()) ? g.n[static_cast<size_t>(i)] : d;
      csv += std::to_string(ni) + ",";
    }
    csv += std::to_string(g.step) + "," + std::to_string(g.sigma) + "," + std::to_string(g.Q) +
           "," + (g.singular ? "1" : "0") + "\n";
  }
  for (const auto& [vec, count] : rep.strata)
    csv += "# stratum (" + index_text(vec, ',') + "): " + std::to_string(count) + " points\n";
  csv += "# q_min: " + std::to_string(rep.q_min) + "\n";
  csv += "# singular points: " + std::to_string(rep.singular_samples.size()) + "\n";
  csv += "# depth_cap_active: " + std::string(rep.depth_cap_active ? "1" : "0") + "\n";
  for (const Eigen::VectorXd& p : rep.failed_points)
    csv += "# spanning failed at " + point_text(p) + "\n";
  emit(out, o.out, csv);
}

void cmd_gram(std::ostream& out, const Opts& o) {
  LoadedStructure in = load_input(o.input);
  BracketTable t = enumerate_brackets(in.s);
  Eigen::VectorXd pt = parse_point(o.point, in.s.d);
  if (pick_format(o, "json") != "json") throw UsageError("gram reports are json");

  GramData g = assemble(t, pt);
  double h = parse_scale(o.h_text);
  ordered_json j = base_json("gram", in, {{"tol", o.tol}, {"point", o.point}, {"h", h}});
  j["point"] = vec_json(pt);
  ordered_json as = ordered_json::array();
  for (const Eigen::MatrixXd& a : g.A) as.push_back(mat_json(a));
  j["A"] = std::move(as);
  j["ginv"] = mat_json(g.ginv(h));
  j["det_ginv"] = g.det_ginv(h);

  DetExpansion ex = det_expansion(g, o.det_grid.empty() ? std::vector<double>{}
                                                        : parse_scales(o.det_grid));
  ordered_json ej;
  ej["coeffs_in_h2"] = ex.coeffs;
  ej["vanishing_order"] = ex.vanishing_order;
  ej["leading_coeff"] = ex.leading_coeff;
  ej["grid_h"] = ex.grid_h;
  ej["amplification"] = ex.amplification;
  ej["warnings"] = ex.warnings;
  j["det_expansion"] = std::move(ej);
  emit(out, o.out, j.dump(2));
}

void cmd_branches(std::ostream& out, const Opts& o) {
  LoadedStructure in = load_input(o.input);
  BracketTable t = enumerate_brackets(in.s);
  Eigen::VectorXd pt = parse_point(o.point, in.s.d);
  if (pick_format(o, "json") != "json") throw UsageError("branch reports are json");

  BranchReport rep = branch_report(t, pt, o.hgrid.empty() ? std::vector<double>{}
                                                          : parse_scales(o.hgrid));
  ordered_json j = base_json("branches", in,
                             {{"tol", o.tol}, {"point", o.point}, {"hgrid", o.hgrid}});
  j["growth"] = growth_json(rep.growth);
  ordered_json hats;
  hats["f"] = rep.hats.f;
  hats["sigma"] = rep.hats.sigma;
  hats["n"] = rep.hats.n;
  ordered_json hl = ordered_json::array();
  for (const HatLayer& l : rep.hats.layers)
    hl.push_back({{"layer", l.layer}, {"prefactors", l.prefactors}});
  hats["layers"] = std::move(hl);
  hats["warnings"] = rep.hats.warnings;
  j["limit"] = std::move(hats);
  ordered_json fit;
  fit["h_grid"] = rep.fit.h_grid;
  ordered_json bs = ordered_json::array();
  for (const Branch& b : rep.fit.branches)
    bs.push_back({{"order", b.order},
                  {"slope", b.slope},
                  {"order_ok", b.order_ok},
                  {"prefactor", b.prefactor},
                  {"eigenvalues", b.eigenvalues}});
  fit["branches"] = std::move(bs);
  j["fit"] = std::move(fit);
  j["counts_match"] = rep.counts_match;
  j["max_rel_gap"] = rep.max_rel_gap;
  emit(out, o.out, j.dump(2));
}

void cmd_density(std::ostream& out, const Opts& o) {
  LoadedStructure in = load_input(o.input);
  BracketTable t = enumerate_brackets(in.s);

  if (!o.point.empty()) {
    if (pick_format(o, "json") != "json") throw UsageError("single-point density reports are json");
    LimitDensity ld = limit_density(t, parse_point(o.point, in.s.d), o.tol);
    ordered_json j = base_json("density", in, {{"tol", o.tol}, {"point", o.point}});
    j["point"] = vec_json(parse_point(o.point, in.s.d));
    j["f"] = ld.f;
    j["sigma"] = ld.sigma;
    j["density"] = ld.density;
    j["singular"] = ld.singular;
    j["q_local"] = ld.q_local;
    j["q_reference"] = ld.q_reference;
    ordered_json hl = ordered_json::array();
    for (const HatLayer& l : ld.hats.layers)
      hl.push_back({{"layer", l.layer}, {"prefactors", l.prefactors}});
    j["layers"] = std::move(hl);
    j["warnings"] = ld.hats.warnings;
    emit(out, o.out, j.dump(2));
    return;
  }
  if (o.grid < 2) throw UsageError("density needs --point or --grid N (N >= 2)");
  if (pick_format(o, "csv") != "csv") throw UsageError("density scans are csv");

  const int d = in.s.d;
  std::string csv = csv_prefix("density", in,
                               "tol=" + format_double(o.tol) + " grid=" + std::to_string(o.grid));
  for (int i = 0; i < d; ++i) csv += "x" + std::to_string(i) + ",";
  csv += "f,sigma,density,singular\n";
  for (const Eigen::VectorXd& p : scan_grid(in.s.domain, o.grid)) {
    try {
      LimitDensity ld = limit_density(t, p, o.tol);
      for (int i = 0; i < d; ++i) csv += format_double(p[i]) + ",";
      csv += format_double(ld.f) + "," + std::to_string(ld.sigma) + "," +
             format_double(ld.density) + "," + (ld.singular ? "1" : "0") + "\n";
    } catch (const HormanderError&) {
      csv += "# spanning failed at " + point_text(p) + "\n";
    }
  }
  emit(out, o.out, csv);
}

void cmd_popp(std::ostream& out, const Opts& o) {
  LoadedStructure in = load_input(o.input);
  BracketTable t = enumerate_brackets(in.s);
  Eigen::VectorXd pt = parse_point(o.point, in.s.d);
  if (pick_format(o, "json") != "json") throw UsageError("popp reports are json");

  AdaptedFrame fr = adapted_frame(t, pt);
  StructureConstants sc = structure_constants(fr);
  std::vector<Eigen::MatrixXd> bs = b_matrices(sc, fr);
  MData md = m_matrices(t, fr);
  double density = popp_density(fr, sc);

  ordered_json j = base_json("popp", in,
                             {{"tol", o.tol}, {"point", o.point}, {"compare", o.compare}});
  j["point"] = vec_json(pt);
  j["n"] = fr.n;
  ordered_json frame = ordered_json::array();
  for (const VectorField& z : fr.fields)
    frame.push_back({{"label", z.label}, {"field", z.str()}});
  j["frame"] = std::move(frame);
  j["frame_det"] = fr.frame_matrix.determinant();
  ordered_json bj = ordered_json::array();
  for (const Eigen::MatrixXd& b : bs) bj.push_back(mat_json(b));
  j["B"] = std::move(bj);
  ordered_json bd = ordered_json::array();
  for (const Eigen::MatrixXd& b : bs) bd.push_back(b.determinant());
  j["B_dets"] = std::move(bd);
  j["bracket_overflow"] = sc.max_overflow;
  ordered_json mj = ordered_json::array();
  for (const Eigen::MatrixXd& m : md.M) mj.push_back(mat_json(m));
  j["M"] = std::move(mj);
  j["det_ratio_h"] = md.ratio_h;
  j["det_ratios"] = md.det_ratios;
  j["popp_density"] = density;

  if (o.compare) {
    VolumeComparison vc = compare_volumes(t, pt);
    ordered_json cj;
    cj["limit_density"] = vc.limit;
    cj["f"] = vc.limit_data.f;
    cj["sigma"] = vc.limit_data.sigma;
    cj["rel_gap"] = vc.rel_gap;
    cj["ok"] = vc.ok;
    j["compare"] = std::move(cj);
  }
  emit(out, o.out, j.dump(2));
}

void cmd_spectrum(std::ostream& out, const Opts& o) {
  LoadedStructure in = load_input(o.input);
  BracketTable t = enumerate_brackets(in.s);
  if (o.grid == 0) throw UsageError("spectrum needs --grid N");
  if (o.hlist.empty()) throw UsageError("spectrum needs --hlist");
  VolumeMode mode;
  if (o.mode == "fixed")
    mode = VolumeMode::kFixed;
  else if (o.mode == "riemannian")
    mode = VolumeMode::kRiemannian;
  else
    throw UsageError("--mode must be fixed or riemannian");

  Grid grid = make_grid(in.s.domain, o.grid);
  std::vector<double> hs = parse_scales(o.hlist);
  SpectrumStudy study = convergence_study(t, grid, hs, o.k, mode);

  std::string options = "grid=" + std::to_string(o.grid) + " k=" + std::to_string(o.k) +
                        " mode=" + o.mode + " hlist=" + o.hlist;
  std::string fmt = pick_format(o, "csv");
  if (fmt == "json") {
    ordered_json j = base_json("spectrum", in,
                               {{"grid", o.grid},
                                {"k", o.k},
                                {"mode", o.mode},
                                {"hlist", o.hlist},
                                {"tol", o.tol}});
    j["h"] = study.h;
    j["lambda"] = study.lambda;
    if (mode == VolumeMode::kRiemannian) {
      j["lambda_tilde"] = study.lambda_tilde;
      j["a"] = study.a;
      j["psi_lo"] = study.psi_lo;
      j["psi_hi"] = study.psi_hi;
      j["max_sandwich_violation"] = study.max_sandwich_violation;
    }
    j["max_monotonicity_violation"] = study.max_monotonicity_violation;
    j["max_barrier_violation"] = study.max_barrier_violation;
    j["first_decrement"] = study.first_decrement;
    j["last_decrement"] = study.last_decrement;
    emit(out, o.out, j.dump(2));
    return;
  }

  std::string csv = csv_prefix("spectrum", in, options);
  csv += mode == VolumeMode::kRiemannian ? "h,k,lambda,lambda_tilde,mode,grid_n\n"
                                         : "h,k,lambda,mode,grid_n\n";
  for (size_t i = 0; i < study.h.size(); ++i)
    for (int j = 0; j < o.k; ++j) {
      csv += format_double(study.h[i]) + "," + std::to_string(j) + "," +
             format_double(study.lambda[i][static_cast<size_t>(j)]);
      if (mode == VolumeMode::kRiemannian)
        csv += "," + format_double(study.lambda_tilde[i][static_cast<size_t>(j)]);
      csv += "," + o.mode + "," + std::to_string(o.grid) + "\n";
    }
  csv += "# max_monotonicity_violation: " + format_double(study.max_monotonicity_violation) + "\n";
  csv += "# max_barrier_violation: " + format_double(study.max_barrier_violation) + "\n";
  if (mode == VolumeMode::kRiemannian) {
    csv += "# max_sandwich_violation: " + format_double(study.max_sandwich_violation) + "\n";
    for (size_t i = 0; i < study.h.size(); ++i)
      csv += "# a(" + format_double(study.h[i]) + ") = " + format_double(study.a[i]) +
             "  psi in [" + format_double(study.psi_lo[i]) + ", " +
             format_double(study.psi_hi[i]) + "]\n";
  }
  for (size_t j = 0; j < study.first_decrement.size(); ++j)
    csv += "# decrement k=" + std::to_string(j) + ": first " +
           format_double(study.first_decrement[j]) + ", last " +
           format_double(study.last_decrement[j]) + "\n";
  emit(out, o.out, csv);
}

// ---- reproduce ------------------------------------------------------------

struct Check {
  std::string name;
  bool ok = false;
  std::string detail;
};

void add_check(std::vector<Check>& cs, const std::string& name, bool ok,
               const std::string& detail) {
  cs.push_back({name, ok, detail});
}

std::vector<Eigen::VectorXd> random_box_points(const Domain& dom, int count, unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<Eigen::VectorXd> pts;
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd p(dom.dim());
    for (int i = 0; i < dom.dim(); ++i) {
      std::uniform_real_distribution<double> u(dom.lo[static_cast<size_t>(i)],
                                               dom.hi[static_cast<size_t>(i)]);
      p[i] = u(rng);
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

std::vector<Check> reproduce_heisenberg(const LoadedStructure& in, unsigned seed) {
  std::vector<Check> cs;
  BracketTable t = enumerate_brackets(in.s);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

  double worst = 0.0;
  for (const Eigen::VectorXd& p : random_box_points(in.s.domain, 20, seed)) {
    GramData g = assemble(t, p);
    for (double h : {1.0, 0.5, 0.1, 0.01})
      worst = std::max(worst, std::abs(g.det_ginv(h) - 2.0 * h * h));
  }
  add_check(cs, "det Ginv(h) = 2 h^2 at 20 random points", worst <= 1e-12,
            "worst |deviation| = " + format_double(worst));

  Eigen::VectorXd p0(3);
  p0 << 1.0, 0.5, -0.25;
  LimitDensity ld = limit_density(t, p0);
  add_check(cs, "limit coefficient f = 2", std::abs(ld.f - 2.0) <= 1e-9,
            "f = " + format_double(ld.f));

  VolumeComparison vc = compare_volumes(t, p0);
  bool popp_ok = std::abs(vc.popp - inv_sqrt2) <= 1e-9 && std::abs(vc.limit - inv_sqrt2) <= 1e-9;
  add_check(cs, "Popp density = 1/sqrt(2) by both routes", popp_ok,
            "structure-constant route " + format_double(vc.popp) + ", eigenvalue route " +
                format_double(vc.limit));
  bool b1_ok = vc.b_dets.size() == 2 && std::abs(vc.b_dets[1] - 2.0) <= 1e-8;
  add_check(cs, "B_1 = (2)", b1_ok, "det B_1 = " +
            (vc.b_dets.size() == 2 ? format_double(vc.b_dets[1]) : std::string("missing")));

  BranchReport rep = branch_report(t, p0);
  std::vector<int> orders;
  for (const Branch& b : rep.fit.branches) orders.push_back(b.order);
  bool orders_ok = orders == std::vector<int>{0, 0, 2} && rep.counts_match;
  add_check(cs, "branch orders (0, 0, 2) match growth (2, 3)", orders_ok,
            "orders " + index_text(orders, ',') + ", growth n = (" +
                index_text(rep.growth.n, ',') + ")");
  return cs;
}

std::vector<Check> reproduce_martinet(const LoadedStructure& in, unsigned) {
  std::vector<Check> cs;
  BracketTable t = enumerate_brackets(in.s);

  double worst_rel = 0.0;
  for (double x : {1.0, -1.0, 0.5, -0.5}) {
    Eigen::VectorXd p(3);
    p << x, 0.3, -0.7;
    GramData g = assemble(t, p);
    for (double h : {1.0, 0.5, 0.25, 0.1, 0.05}) {
      double expected = 2.0 * h * h * x * x + 2.0 * std::pow(h, 4);
      worst_rel = std::max(worst_rel, std::abs(g.det_ginv(h) - expected) / expected);
    }
  }
  add_check(cs, "det Ginv(h) = 2 h^2 x^2 + 2 h^4 at x in {+-1, +-0.5}", worst_rel <= 1e-10,
            "worst relative deviation = " + format_double(worst_rel));

  Eigen::VectorXd p1(3), p0(3);
  p1 << 1.0, 0.3, -0.7;
  p0 << 0.0, 0.3, -0.7;
  GrowthData g1 = growth_at(t, p1), g0 = growth_at(t, p0);
  bool growth_ok = g1.n == std::vector<int>{2, 3} && g0.n == std::vector<int>{2, 2, 3} &&
                   g1.Q == 4 && g0.Q == 5 && g1.Q - g1.sigma == 3 && g0.Q - g0.sigma == 3 &&
                   !g1.singular && g0.singular;
  add_check(cs, "growth (2,3) off the plane x=0, (2,2,3) with Q=5 on it", growth_ok,
            "Q = " + std::to_string(g1.Q) + "/" + std::to_string(g0.Q));

  double worst_f = 0.0, worst_rho = 0.0;
  for (double x : {1.0, -1.0, 0.5, -0.5}) {
    Eigen::VectorXd p(3);
    p << x, 0.3, -0.7;
    LimitDensity ld = limit_density(t, p);
    worst_f = std::max(worst_f, std::abs(ld.f - 2.0 * x * x));
    worst_rho = std::max(worst_rho,
                         std::abs(ld.density - 1.0 / (std::sqrt(2.0) * std::abs(x))));
  }
  add_check(cs, "f(x) = 2 x^2", worst_f <= 1e-8, "worst |deviation| = " + format_double(worst_f));
  add_check(cs, "density 1/(sqrt(2) |x|) off the singular plane", worst_rho <= 1e-8,
            "worst |deviation| = " + format_double(worst_rho));

  DetExpansion ex = det_expansion(assemble(t, p0));
  bool fit_ok = ex.vanishing_order == 4 && std::abs(ex.leading_coeff - 2.0) <= 1e-6;
  add_check(cs, "on x=0: det Ginv ~ 2 h^4", fit_ok,
            "order " + std::to_string(ex.vanishing_order) + ", leading coefficient " +
                format_double(ex.leading_coeff));

  ScanReport scan = hormander_scan(t, 5);
  bool singular_line = !scan.singular_samples.empty();
  for (const Eigen::VectorXd& p : scan.singular_samples)
    singular_line = singular_line && std::abs(p[0]) <= 1e-12;
  add_check(cs, "scan flags exactly the plane x=0 as singular", singular_line,
            std::to_string(scan.singular_samples.size()) + " singular points");
  return cs;
}

std::vector<Check> reproduce_r4(const LoadedStructure& in, unsigned) {
  std::vector<Check> cs;
  BracketTable t = enumerate_brackets(in.s);

  std::vector<Eigen::VectorXd> pts;
  Eigen::VectorXd q1(4), q2(4);
  q1 << 1.0, 1.0, 0.2, -0.3;
  q2 << 2.0, 0.5, -0.1, 0.4;
  pts.push_back(q1);
  pts.push_back(q2);

  double worst_id = 0.0;
  for (const Eigen::VectorXd& p : pts) {
    GramData g = assemble(t, p);
    for (double h : {1.0, 0.5}) {
      Eigen::MatrixXd manual =
          g.A[0].transpose() * g.A[0] + h * h * (g.A[1].transpose() * g.A[1]);
      worst_id = std::max(worst_id, (manual - g.ginv(h)).cwiseAbs().maxCoeff());
    }
  }
  add_check(cs, "Ginv(h) is exactly tA0 A0 + h^2 tA1 A1", worst_id <= 1e-14,
            "worst |deviation| = " + format_double(worst_id));

  BranchReport rep = branch_report(t, q1);
  std::vector<int> orders;
  for (const Branch& b : rep.fit.branches) orders.push_back(b.order);
  add_check(cs, "branch orders (0, 0, 0, 2)", orders == std::vector<int>{0, 0, 0, 2},
            "orders " + index_text(orders, ','));

  double worst_f = 0.0, worst_rho = 0.0, worst_gap = 0.0;
  for (const Eigen::VectorXd& p : pts) {
    LimitDensity ld = limit_density(t, p);
    DetExpansion ex = det_expansion(assemble(t, p));
    worst_f = std::max(worst_f, std::abs(ld.f - ex.leading_coeff) / ld.f);
    double rr = p[0] * p[0] + p[1] * p[1];
    VolumeComparison vc = compare_volumes(t, p);
    worst_rho = std::max(worst_rho,
                         std::abs(vc.popp - 1.0 / std::sqrt(2.0 * rr)) * std::sqrt(2.0 * rr));
    worst_gap = std::max(worst_gap, vc.rel_gap);
  }
  add_check(cs, "nested-eigenvalue f equals the leading det coefficient", worst_f <= 1e-8,
            "worst relative gap = " + format_double(worst_f));
  add_check(cs, "Popp density = 1/sqrt(2 (x^2 + y^2)) by both routes",
            worst_rho <= 1e-6 && worst_gap <= 1e-6,
            "worst relative deviation = " + format_double(std::max(worst_rho, worst_gap)));
  return cs;
}

int cmd_reproduce(std::ostream& out, const Opts& o) {
  std::string path = find_fixture(o.target);
  LoadedStructure in = load_input(path);

  std::vector<Check> cs;
  if (o.target == "heisenberg")
    cs = reproduce_heisenberg(in, o.seed);
  else if (o.target == "martinet")
    cs = reproduce_martinet(in, o.seed);
  else if (o.target == "r4")
    cs = reproduce_r4(in, o.seed);
  else
    throw UsageError("unknown reproduce target '" + o.target + "'");

  bool all_ok = true;
  for (const Check& c : cs) {
    all_ok = all_ok && c.ok;
    out << (c.ok ? "[ ok ] " : "[fail] ") << c.name << " -- " << c.detail << "\n";
  }
  out << (all_ok ? "all checks passed" : "CHECKS FAILED") << " (" << o.target << ")\n";

  if (!o.out.empty()) {
    ordered_json j = base_json("reproduce", in, {{"target", o.target}, {"seed", o.seed}});
    ordered_json arr = ordered_json::array();
    for (const Check& c : cs)
      arr.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
    j["checks"] = std::move(arr);
    j["all_ok"] = all_ok;
    write_file_atomic(o.out, j.dump(2) + "\n");
    out << "wrote " << o.out << "\n";
  }
  return all_ok ? 0 : 1;
}

}  // namespace

std::string find_fixture(const std::string& name) {
  namespace fs = std::filesystem;
  std::string file = name;
  if (file.size() < 3 || file.substr(file.size() - 3) != ".sr") file += ".sr";

  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("SRLAB_FIXTURES")) dirs.emplace_back(env);
  if (std::string_view(SRLAB_FIXTURE_DIR).size() > 0) dirs.emplace_back(SRLAB_FIXTURE_DIR);
  dirs.emplace_back("fixtures");

  std::string tried;
  for (const fs::path& dir : dirs) {
    fs::path candidate = dir / file;
    std::error_code ec;
    if (fs::exists(candidate, ec)) return candidate.string();
    tried += (tried.empty() ? "" : ", ") + candidate.string();
  }
  throw IoError("no structure file for '" + name + "' (tried " + tried + ")");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"analysis of bracket-generating vector-field structures"};
  app.name("srlab");
  app.require_subcommand(1);

  Opts o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--tol", o.tol, "rank / report tolerance");
    sub->add_option("--seed", o.seed, "seed for sampled checks");
    sub->add_option("--out", o.out, "artifact path (stdout when omitted)");
    sub->add_option("--format", o.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
  };

  CLI::App* brackets = app.add_subcommand("brackets", "iterated-bracket table");
  brackets->add_option("file", o.input, "structure file")->required();
  add_common(brackets);

  CLI::App* growth = app.add_subcommand("growth", "growth vectors and singular strata");
  growth->add_option("file", o.input, "structure file")->required();
  growth->add_option("--point", o.point, "comma-separated coordinates");
  growth->add_option("--grid", o.grid, "scan an N-per-axis grid");
  add_common(growth);

  CLI::App* gram = app.add_subcommand("gram", "scaled Gram data at a point");
  gram->set_help_flag("--help", "print this help");  // frees -h for the scale option
  gram->add_option("file", o.input, "structure file")->required();
  gram->add_option("--point", o.point, "comma-separated coordinates")->required();
  gram->add_option("--h", o.h_text, "scale for the reported matrix, e.g. 0.25 or 2^-3");
  gram->add_option("--det-grid", o.det_grid, "interpolation scales for the det expansion");
  add_common(gram);

  CLI::App* branches = app.add_subcommand("branches", "eigenvalue branches along h");
  branches->add_option("file", o.input, "structure file")->required();
  branches->add_option("--point", o.point, "comma-separated coordinates")->required();
  branches->add_option("--hgrid", o.hgrid, "h grid, e.g. 2^-3:2^-10");
  add_common(branches);

  CLI::App* density = app.add_subcommand("density", "limit volume density");
  density->add_option("file", o.input, "structure file")->required();
  density->add_option("--point", o.point, "comma-separated coordinates");
  density->add_option("--grid", o.grid, "scan an N-per-axis grid");
  add_common(density);

  CLI::App* popp = app.add_subcommand("popp", "adapted frame and Popp density");
  popp->add_option("file", o.input, "structure file")->required();
  popp->add_option("--point", o.point, "comma-separated coordinates")->required();
  popp->add_flag("--compare", o.compare, "also run the eigenvalue route and report the gap");
  add_common(popp);

  CLI::App* spectrum = app.add_subcommand("spectrum", "discrete eigenvalue study");
  spectrum->add_option("file", o.input, "structure file")->required();
  spectrum->add_option("--grid", o.grid, "grid nodes per axis")->required();
  spectrum->add_option("--hlist", o.hlist, "descending scales, e.g. 1,0.5,0.25,0.1,0.05,0")
      ->required();
  spectrum->add_option("--k", o.k, "eigenvalues per scale");
  spectrum->add_option("--mode", o.mode, "fixed or riemannian");
  add_common(spectrum);

  CLI::App* reproduce = app.add_subcommand("reproduce", "golden example reports");
  reproduce->add_option("target", o.target, "heisenberg | martinet | r4")
      ->required()
      ->check(CLI::IsMember({"heisenberg", "martinet", "r4"}));
  add_common(reproduce);

  int rc = 0;
  brackets->callback([&] { cmd_brackets(out, o); });
  growth->callback([&] { cmd_growth(out, o); });
  gram->callback([&] { cmd_gram(out, o); });
  branches->callback([&] { cmd_branches(out, o); });
  density->callback([&] { cmd_density(out, o); });
  popp->callback([&] { cmd_popp(out, o); });
  spectrum->callback([&] { cmd_spectrum(out, o); });
  reproduce->callback([&] { rc = cmd_reproduce(out, o); });

  std::vector<std::string> full;
  full.push_back("srlab");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& s : full) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error:usage: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "error:usage: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error:" << e.category() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error:internal: " << e.what() << "\n";
    return 1;
  }
  return rc;
}

}  // namespace srlab

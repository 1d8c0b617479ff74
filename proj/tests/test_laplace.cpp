#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "srlab/errors.hpp"
#include "srlab/laplace.hpp"

using namespace srlab;

namespace {

constexpr double kTwoPi = 6.283185307179586;

SRStructure flat(int d) {
  std::string text = "dim " + std::to_string(d) + "\ndomain torus";
  for (int i = 0; i < d; ++i) text += " 6.283185307179586";
  text += "\nrmax 1\n";
  for (int i = 0; i < d; ++i) {
    text += "field";
    for (int j = 0; j < d; ++j) text += (j ? ", " : " ") + std::string(i == j ? "1" : "0");
    text += "\n";
  }
  return parse_structure(text);
}

SRStructure t3_neq() {
  return parse_structure(
      "dim 3\ndomain torus 6.283185307179586 6.283185307179586 6.283185307179586\nrmax 2\n"
      "field 1, 0, 0\nfield 0, 1, sin(x0)\n");
}

SRStructure t3_eq() {
  return parse_structure(
      "dim 3\ndomain torus 6.283185307179586 6.283185307179586 6.283185307179586\nrmax 2\n"
      "field 1, 0, 0\nfield 0, sin(x0), cos(x0)\nvolume 1/sqrt(2)\n");
}

VectorField make_field(int d, std::initializer_list<const char*> comps) {
  VectorField f;
  for (const char* c : comps) f.components.push_back(parse_expr(c, d));
  return f;
}

// apply a sparse operator to a function sampled on the grid
Eigen::VectorXd sample(const Grid& g, double (*f)(const Eigen::VectorXd&)) {
  Eigen::VectorXd u(g.total());
  for (long p = 0; p < g.total(); ++p) u[p] = f(g.coords(p));
  return u;
}

}  // namespace

TEST_CASE("grid indexing: coordinates and periodic neighbors") {
  SRStructure s = flat(2);
  Grid g = make_grid(s.domain, 4);
  CHECK(g.total() == 16);
  CHECK(g.dx(0) == doctest::Approx(kTwoPi / 4));

  // last axis fastest: idx 1 moves along axis 1
  Eigen::VectorXd c0 = g.coords(0), c1 = g.coords(1), c4 = g.coords(4);
  CHECK(c0.norm() == 0.0);
  CHECK(c1[1] == doctest::Approx(kTwoPi / 4));
  CHECK(c1[0] == 0.0);
  CHECK(c4[0] == doctest::Approx(kTwoPi / 4));

  // wrap-around on both ends
  CHECK(g.neighbor(0, 1, 1) == 1);
  CHECK(g.neighbor(0, 1, -1) == 3);
  CHECK(g.neighbor(3, 1, 1) == 0);
  CHECK(g.neighbor(0, 0, -1) == 12);
  CHECK(g.neighbor(12, 0, 1) == 0);

  CHECK_THROWS_AS(make_grid(s.domain, 3), DomainError);  // too coarse

  Domain box;
  box.kind = Domain::Kind::kBox;
  box.lo = {0.0};
  box.hi = {1.0};
  CHECK_THROWS_AS(make_grid(box, 8), DomainError);  // periodic grids need a torus
}

TEST_CASE("centered differences of a coordinate field on the circle") {
  SRStructure s = flat(1);
  Grid g = make_grid(s.domain, 8);
  Eigen::SparseMatrix<double> d = discretize_field(s.generators[0], g);
  double c = 1.0 / (2.0 * g.dx(0));
  Eigen::MatrixXd dd(d);
  for (long i = 0; i < 8; ++i) {
    for (long j = 0; j < 8; ++j) {
      double expect = 0.0;
      if (j == (i + 1) % 8) expect = c;
      if (j == (i + 7) % 8) expect = -c;
      CHECK(dd(i, j) == doctest::Approx(expect));
    }
  }

  // constants are annihilated exactly
  CHECK((d * Eigen::VectorXd::Ones(8)).norm() == 0.0);
}

TEST_CASE("variable coefficients multiply the stencil pointwise") {
  SRStructure s = t3_neq();
  Grid g = make_grid(s.domain, 8);
  Eigen::SparseMatrix<double> d = discretize_field(s.generators[1], g);

  // X = dy + sin(x) dz applied to u = sin(z): centered differences turn the
  // exact derivative cos(z) into cos(z) sin(dz)/dz, a per-node identity
  Eigen::VectorXd u = sample(g, [](const Eigen::VectorXd& x) { return std::sin(x[2]); });
  Eigen::VectorXd du = d * u;
  double shrink = std::sin(g.dx(2)) / g.dx(2);
  for (long p = 0; p < g.total(); ++p) {
    Eigen::VectorXd x = g.coords(p);
    CHECK(du[p] == doctest::Approx(std::sin(x[0]) * std::cos(x[2]) * shrink).epsilon(1e-12));
  }
}

TEST_CASE("non-periodic coefficients are rejected with the axis named") {
  SRStructure s = flat(2);
  Grid g = make_grid(s.domain, 8);
  VectorField bad = make_field(2, {"x1", "0"});  // x1 jumps across the seam
  bad.label = "X";
  try {
    discretize_field(bad, g);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    std::string msg = e.what();
    CHECK(msg.find("axis 2") != std::string::npos);
    CHECK(msg.find("periodic") != std::string::npos);
  }
}

TEST_CASE("assembled operators are symmetric and positive semidefinite") {
  SRStructure s = t3_neq();
  BracketTable t = enumerate_brackets(s);
  Grid g = make_grid(s.domain, 6);
  for (double h : {1.0, 0.3, 0.0}) {
    DiscreteOperator op = assemble(t, g, h, VolumeMode::kFixed);
    CHECK(op.asymmetry() <= 1e-14);
    Eigen::MatrixXd dense(op.form);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("the quadratic form is the weighted sum of squared layer derivatives") {
  SRStructure s = t3_neq();
  BracketTable t = enumerate_brackets(s);
  Grid g = make_grid(s.domain, 6);
  double h = 0.6;
  DiscreteOperator op = assemble(t, g, h, VolumeMode::kFixed);

  std::mt19937 rng(17u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd u(g.total());
  for (long p = 0; p < g.total(); ++p) u[p] = gauss(rng);

  double direct = u.dot(op.form * u);
  double expect = 0.0;
  double layer_w = 1.0;
  for (int i = 0; i <= t.r(); ++i) {
    for (const auto& entry : t.layers[static_cast<size_t>(i)]) {
      Eigen::VectorXd du = discretize_field(entry.field, g) * u;
      expect += layer_w * du.dot(op.weights.asDiagonal() * du);
    }
    layer_w *= h * h;
  }
  CHECK(direct == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("operators depend on h polynomially through the layer weights") {
  SRStructure s = t3_neq();
  BracketTable t = enumerate_brackets(s);
  Grid g = make_grid(s.domain, 6);
  Eigen::MatrixXd l0(assemble(t, g, 0.0, VolumeMode::kFixed).form);
  Eigen::MatrixXd l1(assemble(t, g, 1.0, VolumeMode::kFixed).form);
  Eigen::MatrixXd lh(assemble(t, g, 0.5, VolumeMode::kFixed).form);

  // the table has depth 2, so L(h) = L0 + h^2 B + h^4 C; solve B, C from
  // h = 1 and h = 0.5 and predict a third scale
  Eigen::MatrixXd b = (16.0 * (lh - l0) - (l1 - l0)) / 3.0;
  Eigen::MatrixXd c = l1 - l0 - b;
  double h = 0.25;
  Eigen::MatrixXd predicted = l0 + h * h * b + std::pow(h, 4) * c;
  Eigen::MatrixXd actual(assemble(t, g, h, VolumeMode::kFixed).form);
  CHECK((predicted - actual).norm() <= 1e-12 * (1.0 + actual.norm()));

  // a flat structure has no higher layers at all: the operator ignores h
  SRStructure f = flat(2);
  BracketTable tf = enumerate_brackets(f);
  Grid gf = make_grid(f.domain, 8);
  Eigen::MatrixXd f0(assemble(tf, gf, 0.0, VolumeMode::kFixed).form);
  Eigen::MatrixXd f1(assemble(tf, gf, 1.0, VolumeMode::kFixed).form);
  CHECK((f0 - f1).norm() == 0.0);
}

TEST_CASE("flat torus eigenvalues match the stencil symbol exactly") {
  SRStructure s = flat(2);
  BracketTable t = enumerate_brackets(s);
  Grid g = make_grid(s.domain, 32);
  std::vector<double> symbol = flat_torus_symbol_eigs(g, 9);
  for (double h : {1.0, 0.37, 0.0}) {
    DiscreteOperator op = assemble(t, g, h, VolumeMode::kFixed);
    Eigen::VectorXd lam = lowest_eigs(op, 9);
    for (int j = 0; j < 9; ++j)
      CHECK(std::abs(lam[j] - symbol[static_cast<size_t>(j)]) <= 1e-10);
  }

  // four zero modes on an even grid (constants plus the Nyquist patterns),
  // then the first excited symbol value with multiplicity four
  double expect = std::pow(std::sin(kTwoPi / 32), 2) / std::pow(g.dx(0), 2);
  for (int j = 0; j < 4; ++j) CHECK(std::abs(symbol[static_cast<size_t>(j)]) <= 1e-12);
  for (int j = 4; j < 8; ++j)
    CHECK(symbol[static_cast<size_t>(j)] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("dense and iterative eigensolvers agree") {
  SRStructure s = t3_neq();
  BracketTable t = enumerate_brackets(s);
  for (int n : {6, 7}) {  // even grid has extra checkerboard kernel, odd does not
    Grid g = make_grid(s.domain, n);
    DiscreteOperator op = assemble(t, g, 0.4, VolumeMode::kFixed);
    Eigen::VectorXd dense = lowest_eigs(op, 10, EigMethod::kDense);
    Eigen::VectorXd iter = lowest_eigs(op, 10, EigMethod::kIterative);
    for (int j = 0; j < 10; ++j) CHECK(std::abs(dense[j] - iter[j]) <= 1e-8);
  }
}

TEST_CASE("eigenvalue count bounds") {
  SRStructure s = flat(1);
  BracketTable t = enumerate_brackets(s);
  Grid g = make_grid(s.domain, 4);
  DiscreteOperator op = assemble(t, g, 0.0, VolumeMode::kFixed);
  CHECK_THROWS_AS(lowest_eigs(op, 0), DomainError);
  CHECK_THROWS_AS(lowest_eigs(op, 5), DomainError);
  CHECK(lowest_eigs(op, 4).size() == 4);
}

TEST_CASE("fixed-volume study on an odd grid exercises real decay") {
  // odd n leaves only the constant in the kernel, so the tracked eigenvalues
  // genuinely move with h
  SRStructure s = t3_neq();
  BracketTable t = enumerate_brackets(s);
  Grid g = make_grid(s.domain, 9);
  SpectrumStudy st = convergence_study(t, g, {1.0, 0.5, 0.25, 0.1, 0.0}, 4, VolumeMode::kFixed);

  REQUIRE(st.lambda.size() == 5);
  CHECK(st.max_monotonicity_violation <= 1e-9);
  CHECK(st.max_barrier_violation <= 1e-9);
  for (const auto& row : st.lambda) CHECK(std::abs(row[0]) <= 1e-9);

  CHECK(st.lambda[0][1] > st.lambda[4][1] + 1e-3);  // the decay is not vacuous
  for (int j = 1; j < 4; ++j) {
    // Cauchy trend: late decrements are smaller than early ones
    CHECK(st.last_decrement[static_cast<size_t>(j)] <
          st.first_decrement[static_cast<size_t>(j)]);
  }
}

TEST_CASE("riemannian study: weight envelope and eigenvalue sandwich") {
  SRStructure s = t3_eq();
  BracketTable t = enumerate_brackets(s);
  Grid g = make_grid(s.domain, 8);
  std::vector<double> hs = {1.0, 0.5, 0.25, 0.1, 0.05};
  SpectrumStudy st = convergence_study(t, g, hs, 6, VolumeMode::kRiemannian);

  REQUIRE(st.a.size() == hs.size());
  for (size_t i = 0; i < hs.size(); ++i) {
    // the weight ratio is constant over this structure's nodes:
    // Psi_h = (1 + 2 h^4)^(-1/2) given the 1/sqrt(2) reference volume
    double psi = 1.0 / std::sqrt(1.0 + 2.0 * std::pow(hs[i], 4));
    CHECK(st.psi_lo[i] == doctest::Approx(psi).epsilon(1e-10));
    CHECK(st.psi_hi[i] == doctest::Approx(psi).epsilon(1e-10));
    double a = (1.0 + std::abs(psi - 1.0)) * (1.0 + std::abs(1.0 / psi - 1.0));
    CHECK(st.a[i] == doctest::Approx(a).epsilon(1e-10));
    if (i > 0) CHECK(st.a[i] < st.a[i - 1]);  // envelope tightens with h
  }
  CHECK(st.max_sandwich_violation <= 1e-9);
  CHECK(st.a.back() - 1.0 < st.a.front() - 1.0);
}

TEST_CASE("riemannian mode requires a uniform growth vector") {
  SRStructure s = t3_neq();  // growth jumps on the planes cos(x0) = 0
  BracketTable t = enumerate_brackets(s);
  Grid g = make_grid(s.domain, 8);
  CHECK_THROWS_AS(assemble(t, g, 0.5, VolumeMode::kRiemannian), DomainError);
}

TEST_CASE("study inputs are validated") {
  SRStructure s = flat(2);
  BracketTable t = enumerate_brackets(s);
  Grid g = make_grid(s.domain, 8);
  CHECK_THROWS_AS(convergence_study(t, g, {0.5, 1.0}, 3, VolumeMode::kFixed), DomainError);
  CHECK_THROWS_AS(convergence_study(t, g, {}, 3, VolumeMode::kFixed), DomainError);
  CHECK_THROWS_AS(convergence_study(t, g, {1.0, -0.5}, 3, VolumeMode::kFixed), DomainError);
}

TEST_CASE("grid refinement converges to the continuum on the flat circle") {
  // The sampled first harmonic is an exact discrete eigenfunction with
  // eigenvalue sin^2(dx)/dx^2, so its Rayleigh quotient must hit that value
  // and climb to the continuum eigenvalue 1 as the grid refines.  (Sorted
  // eigenvalue lists cannot be compared to the continuum here: the centered
  // stencil's symbol has a second well near the Nyquist frequency, which
  // parks spurious modes near 1/4.)
  SRStructure s = flat(1);
  BracketTable t = enumerate_brackets(s);
  double prev_err = 1e9;
  for (int n : {8, 16, 32, 64}) {
    Grid g = make_grid(s.domain, n);
    DiscreteOperator op = assemble(t, g, 0.0, VolumeMode::kFixed);
    Eigen::VectorXd u(g.total());
    for (int i = 0; i < g.total(); ++i) u[i] = std::sin(g.coords(i)[0]);
    double rayleigh = u.dot(op.form * u) / u.dot(op.weights.asDiagonal() * u);
    double expect = std::pow(std::sin(g.dx(0)), 2) / std::pow(g.dx(0), 2);
    CHECK(rayleigh == doctest::Approx(expect).epsilon(1e-10));
    double err = std::abs(rayleigh - 1.0);
    CHECK(err < prev_err);
    prev_err = err;
  }
  CHECK(prev_err <= 1e-2);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "srlab/brackets.hpp"
#include "srlab/errors.hpp"
#include "srlab/gram.hpp"

using namespace srlab;

namespace {

SRStructure heisenberg() {
  return parse_structure(
      "dim 3\ndomain box -2 2 -2 2 -2 2\nrmax 2\nfield 1, 0, 0\nfield 0, 1, x0\n");
}

SRStructure martinet() {
  return parse_structure(
      "dim 3\ndomain box -1 1 -1 1 -1 1\nrmax 2\nfield 1, 0, 0\nfield 0, 1, x0^2/2\n");
}

SRStructure r4() {
  return parse_structure(
      "dim 4\ndomain box -2.5 2.5 -2.5 2.5 -2.5 2.5 -2.5 2.5\nrmax 2\n"
      "field 1, 0, 0, 0\nfield 0, 1, 0, 0\nfield 0, 0, x0, x1\n");
}

SRStructure t3_eq() {
  return parse_structure(
      "dim 3\ndomain torus 6.283185307179586 6.283185307179586 6.283185307179586\nrmax 2\n"
      "field 1, 0, 0\nfield 0, sin(x0), cos(x0)\nvolume 1/sqrt(2)\n");
}

Eigen::VectorXd pt(std::initializer_list<double> xs) {
  Eigen::VectorXd p(static_cast<long>(xs.size()));
  long i = 0;
  for (double x : xs) p[i++] = x;
  return p;
}

double rel_gap(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST_CASE("assembled data matches hand-written matrices") {
  BracketTable t = enumerate_brackets(heisenberg());
  Eigen::VectorXd p = pt({0.7, -0.3, 1.1});
  GramData g = assemble(t, p);
  REQUIRE(g.r() == 1);
  REQUIRE(g.A[0].rows() == 2);
  REQUIRE(g.A[1].rows() == 2);
  CHECK(g.A[0](0, 0) == 1.0);
  CHECK(g.A[0](1, 2) == doctest::Approx(0.7));
  CHECK(g.A[1](0, 2) == 1.0);
  CHECK(g.A[1](1, 2) == -1.0);
  CHECK(g.total_rows() == 4);
  CHECK(g.d() == 3);

  // the inverse Gram matrix is the h^2-weighted sum of transposed products
  double h = 0.37;
  Eigen::MatrixXd expect =
      g.A[0].transpose() * g.A[0] + h * h * g.A[1].transpose() * g.A[1];
  CHECK((g.ginv(h) - expect).norm() == doctest::Approx(0.0).epsilon(1e-14));

  // and coincides with the square of the weighted stack
  Eigen::MatrixXd b = g.weighted_stack(h);
  CHECK((b.transpose() * b - expect).norm() == doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("determinant golden values") {
  BracketTable th = enumerate_brackets(heisenberg());
  std::mt19937 rng(23u);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    GramData g = assemble(th, pt({unif(rng), unif(rng), unif(rng)}));
    for (double h : {1.0, 0.5, 0.1, 0.01})
      CHECK(std::abs(g.det_ginv(h) - 2 * h * h) <= 1e-12);
  }

  BracketTable tm = enumerate_brackets(martinet());
  for (double x : {1.0, -1.0, 0.5, -0.5}) {
    GramData g = assemble(tm, pt({x, 0.3, -0.2}));
    for (double h : {1.0, 0.5, 0.25, 0.1})
      CHECK(rel_gap(g.det_ginv(h), 2 * h * h * x * x + 2 * std::pow(h, 4)) <= 1e-10);
  }
}

TEST_CASE("both metric routes agree on random draws") {
  std::mt19937 rng(31u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uh(0.0, 1.0);

  std::vector<SRStructure> structures = {heisenberg(), martinet(), r4(), t3_eq()};
  int draws = 0;
  for (const SRStructure& s : structures) {
    BracketTable t = enumerate_brackets(s);
    for (int k = 0; k < 50; ++k) {
      GramData g = assemble(t, s.domain.sample(k));
      double h = std::exp(uh(rng) * std::log(16.0)) / 16.0;  // log-uniform in [1/16, 1]
      Eigen::VectorXd v(s.d);
      for (int i = 0; i < s.d; ++i) v[i] = gauss(rng);
      double direct = metric_eval(g, h, v);
      double oracle = metric_eval_oracle(g, h, v);
      CHECK(rel_gap(direct, oracle) <= 1e-9);
      ++draws;
    }
  }
  CHECK(draws == 200);
}

TEST_CASE("the metric shrinks as h grows") {
  // larger h enlarges the inverse Gram matrix, so the metric value drops
  BracketTable t = enumerate_brackets(martinet());
  std::mt19937 rng(41u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    GramData g = assemble(t, t.structure.domain.sample(k));
    Eigen::VectorXd v(3);
    for (int i = 0; i < 3; ++i) v[i] = gauss(rng);
    double prev = metric_eval(g, 1.0, v);
    for (double h : {0.5, 0.25, 0.1, 0.05}) {
      double cur = metric_eval(g, h, v);
      CHECK(cur >= prev * (1.0 - 1e-12));
      prev = cur;
    }
  }
}

TEST_CASE("horizontal limit metric") {
  BracketTable t = enumerate_brackets(heisenberg());
  Eigen::VectorXd p = pt({0.8, 0.1, -0.4});
  GramData g = assemble(t, p);

  // combinations of the two generators have the obvious coefficients norm
  Eigen::VectorXd x1 = t.structure.generators[0].eval(p);
  Eigen::VectorXd x2 = t.structure.generators[1].eval(p);
  for (auto [a, b] : {std::pair{1.0, 0.0}, {0.3, -2.0}, {1.5, 1.5}}) {
    Eigen::VectorXd v = a * x1 + b * x2;
    CHECK(g0_eval(g, v) == doctest::Approx(a * a + b * b).epsilon(1e-12));
    // the h-metric converges to the horizontal value from below as h -> 0
    CHECK(rel_gap(metric_eval(g, 1e-4, v), a * a + b * b) <= 1e-6);
  }

  CHECK_THROWS_AS(g0_eval(g, pt({0.0, 0.0, 1.0})), DomainError);
  CHECK_THROWS_AS(g0_eval(g, pt({1.0, 0.0})), DomainError);
}

TEST_CASE("determinant expansions in powers of h^2") {
  BracketTable th = enumerate_brackets(heisenberg());
  DetExpansion eh = det_expansion(assemble(th, pt({1.3, 0.2, 0.0})));
  CHECK(eh.vanishing_order == 2);
  CHECK(eh.leading_coeff == doctest::Approx(2.0).epsilon(1e-9));
  REQUIRE(eh.coeffs.size() >= 2);
  CHECK(std::abs(eh.coeffs[0]) <= 1e-10);
  CHECK(eh.coeffs[1] == doctest::Approx(2.0).epsilon(1e-9));
  for (size_t k = 2; k < eh.coeffs.size(); ++k) CHECK(std::abs(eh.coeffs[k]) <= 1e-8);

  BracketTable tm = enumerate_brackets(martinet());
  DetExpansion em = det_expansion(assemble(tm, pt({1.0, 0.0, 0.0})));
  CHECK(em.vanishing_order == 2);
  CHECK(em.coeffs[1] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(em.coeffs[2] == doctest::Approx(2.0).epsilon(1e-8));

  // on the singular plane the h^2 coefficient dies and the order jumps to 4
  DetExpansion es = det_expansion(assemble(tm, pt({0.0, 0.0, 0.0})));
  CHECK(es.vanishing_order == 4);
  CHECK(es.leading_coeff == doctest::Approx(2.0).epsilon(1e-6));

  BracketTable tr = enumerate_brackets(r4());
  for (auto [x, y] : {std::pair{1.0, 1.0}, {2.0, 0.5}}) {
    DetExpansion er = det_expansion(assemble(tr, pt({x, y, 0.0, 0.0})));
    CHECK(er.vanishing_order == 2);
    CHECK(er.coeffs[1] == doctest::Approx(2 * (x * x + y * y)).epsilon(1e-8));
    CHECK(er.coeffs[2] == doctest::Approx(4.0).epsilon(1e-8));
  }
}

TEST_CASE("expansion reproduces the determinant at fresh scales") {
  for (const SRStructure& s : {heisenberg(), martinet(), r4()}) {
    BracketTable t = enumerate_brackets(s);
    for (int k = 0; k < 5; ++k) {
      GramData g = assemble(t, s.domain.sample(k));
      DetExpansion ex = det_expansion(g);
      for (double h : {0.3, 0.7, 0.05}) {
        double poly = 0.0, tk = 1.0;
        for (double c : ex.coeffs) {
          poly += c * tk;
          tk *= h * h;
        }
        CHECK(rel_gap(poly, g.det_ginv(h)) <= 1e-9);
      }
      CHECK_FALSE(ex.grid_h.empty());
      CHECK(ex.amplification > 0.0);
    }
  }
}

TEST_CASE("bad inputs are rejected") {
  BracketTable t = enumerate_brackets(heisenberg());
  CHECK_THROWS_AS(assemble(t, pt({0.0, 0.0})), DomainError);
  GramData g = assemble(t, pt({0.0, 0.0, 0.0}));
  CHECK_THROWS_AS(metric_eval(g, 0.0, pt({1.0, 0.0, 0.0})), DomainError);
  CHECK_THROWS_AS(metric_eval(g, -0.5, pt({1.0, 0.0, 0.0})), DomainError);
  CHECK_THROWS_AS(metric_eval(g, 0.5, pt({1.0, 0.0})), DomainError);
}

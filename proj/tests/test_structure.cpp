#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>

#include "srlab/errors.hpp"
#include "srlab/structure.hpp"

using namespace srlab;

namespace {

const char* kHeisenberg =
    "# canonical step-2 example\n"
    "dim 3\n"
    "domain box -2 2 -2 2 -2 2\n"
    "rmax 2\n"
    "field 1, 0, 0\n"
    "field 0, 1, x0\n";

VectorField make_field(int d, std::initializer_list<const char*> comps) {
  VectorField f;
  for (const char* c : comps) f.components.push_back(parse_expr(c, d));
  return f;
}

Eigen::VectorXd pt(std::initializer_list<double> xs) {
  Eigen::VectorXd p(static_cast<long>(xs.size()));
  long i = 0;
  for (double x : xs) p[i++] = x;
  return p;
}

}  // namespace

TEST_CASE("structure files parse into the expected pieces") {
  SRStructure s = parse_structure(kHeisenberg);
  CHECK(s.d == 3);
  CHECK(s.r_max == 2);
  CHECK(s.generator_count() == 2);
  CHECK(s.domain.kind == Domain::Kind::kBox);
  CHECK(s.domain.lo[0] == -2.0);
  CHECK(s.domain.hi[2] == 2.0);
  CHECK(s.generators[0].label == "X^{01}");
  CHECK(s.generators[1].label == "X^{02}");
  CHECK(s.omega_density.is_constant(1.0));  // volume defaults to the Lebesgue density

  Eigen::VectorXd v = s.generators[1].eval(pt({0.7, 0.0, 0.0}));
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 1.0);
  CHECK(v[2] == doctest::Approx(0.7));
}

TEST_CASE("rmax defaults to 1 and torus domains parse") {
  SRStructure s = parse_structure(
      "dim 2\n"
      "domain torus 6.283185307179586 3.14159\n"
      "field 1, 0\n"
      "field 0, 1\n");
  CHECK(s.r_max == 1);
  CHECK(s.domain.kind == Domain::Kind::kTorus);
  CHECK(s.domain.periods[1] == doctest::Approx(3.14159));
}

TEST_CASE("parse failures identify the offending line") {
  auto expect_at = [](const std::string& text, const std::string& needle, const std::string& at) {
    try {
      parse_structure(text);
      FAIL(("expected ParseError containing: " + needle));
    } catch (const ParseError& e) {
      std::string msg = e.what();
      CHECK(msg.find(needle) != std::string::npos);
      if (!at.empty()) CHECK(msg.rfind(at, 0) == 0);
    }
  };

  expect_at("domain box -1 1\ndim 1\nfield 1\n", "dim must come before domain", "1:1");
  expect_at("dim 2\ndim 2\ndomain box -1 1 -1 1\nfield 1, 0\n", "duplicate dim", "2:1");
  expect_at("dim 1\nfield 1\n", "missing 'domain' line", "");
  expect_at("field 1\n", "dim must come before field", "1:1");
  expect_at("dim 1\ndomain box -1 1\nfield 1, 0\n", "field has 2 components", "3:1");
  expect_at("dim 1\ndomain box 1 -1\nfield 1\n", "lo < hi", "2:1");
  expect_at("dim 2\ndomain torus 1 -3\nfield 1, 0\n", "periods must be positive", "2:1");
  expect_at("dim 1\ndomain box -1 1\nwobble 3\n", "unknown directive 'wobble'", "3:1");
  expect_at("dim 1\ndomain box -1 q\nfield 1\n", "bad domain bound 'q'", "2:1");
  expect_at("dim 1\ndomain disk 0 1\nfield 1\n", "'torus' or 'box'", "2:1");
  expect_at("dim 1\ndomain box -1 1\nrmax -2\nfield 1\n", "non-negative", "3:1");
  expect_at("dim 1\ndomain box -1 1\nfield abs(x0)\n", "abs()", "3:1");
  expect_at("dim 1\ndomain box -1 1\n", "at least one field", "");
  expect_at("dim 1\ndomain box -1 1\nfield 1\nfield x0+\n", "", "4:");

  // sign problems in the volume density surface as domain errors, not parse errors
  CHECK_THROWS_AS(parse_structure("dim 1\ndomain box -1 1\nfield 1\nvolume x0\n"), DomainError);
}

TEST_CASE("loading reports the file path") {
  CHECK_THROWS_AS(load_structure("no/such/file.sr"), IoError);
  try {
    load_structure("no/such/file.sr");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("no/such/file.sr") != std::string::npos);
  }
}

TEST_CASE("lie bracket of the canonical pair") {
  SRStructure s = parse_structure(kHeisenberg);
  VectorField b = lie_bracket(s.generators[0], s.generators[1]);
  Eigen::VectorXd v = b.eval(pt({0.3, -1.0, 0.5}));
  CHECK(v[0] == doctest::Approx(0.0));
  CHECK(v[1] == doctest::Approx(0.0));
  CHECK(v[2] == doctest::Approx(1.0));
}

TEST_CASE("lie bracket is antisymmetric and satisfies the Jacobi identity") {
  // polynomial/trigonometric fields keep every evaluation exact enough to
  // compare pointwise
  VectorField x = make_field(3, {"x1^2", "sin(x0)", "x0*x2"});
  VectorField y = make_field(3, {"cos(x1)", "x2", "x0^2 - x1"});
  VectorField z = make_field(3, {"x0 + x1", "x0*x1", "1"});

  VectorField xy = lie_bracket(x, y);
  VectorField yx = lie_bracket(y, x);
  VectorField jac_sum_a = lie_bracket(x, lie_bracket(y, z));
  VectorField jac_sum_b = lie_bracket(y, lie_bracket(z, x));
  VectorField jac_sum_c = lie_bracket(z, lie_bracket(x, y));

  std::mt19937 rng(19u);
  std::uniform_real_distribution<double> unif(-1.2, 1.2);
  for (int rep = 0; rep < 25; ++rep) {
    Eigen::VectorXd p = pt({unif(rng), unif(rng), unif(rng)});
    Eigen::VectorXd anti = xy.eval(p) + yx.eval(p);
    Eigen::VectorXd jacobi = jac_sum_a.eval(p) + jac_sum_b.eval(p) + jac_sum_c.eval(p);
    CHECK(anti.norm() == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(jacobi.norm() == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("bracket of a field with itself vanishes structurally") {
  VectorField x = make_field(2, {"sin(x0)*x1", "x0^3"});
  CHECK(lie_bracket(x, x).symbolically_zero());
}

TEST_CASE("identically-zero test: structural, sampled, and negative cases") {
  Domain box;
  box.kind = Domain::Kind::kBox;
  box.lo = {-2.0, -2.0};
  box.hi = {2.0, 2.0};

  ZeroCheck structural = is_identically_zero(make_field(2, {"0", "0"}), box);
  CHECK(structural.zero);
  CHECK(structural.symbolic);

  // zero by trigonometry only: the structural pass cannot see it
  ZeroCheck sampled =
      is_identically_zero(make_field(2, {"sin(x0)^2 + cos(x0)^2 - 1", "0"}), box);
  CHECK(sampled.zero);
  CHECK_FALSE(sampled.symbolic);

  ZeroCheck nonzero = is_identically_zero(make_field(2, {"x0*x1", "0"}), box);
  CHECK_FALSE(nonzero.zero);
}

TEST_CASE("domain sampling stays inside and is deterministic") {
  SRStructure s = parse_structure(kHeisenberg);
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd p = s.domain.sample(k);
    CHECK(s.domain.contains(p));
    CHECK(p == s.domain.sample(k));  // same index, same point
  }

  Domain torus;
  torus.kind = Domain::Kind::kTorus;
  torus.periods = {1.0, 4.0};
  for (int k = 0; k < 20; ++k) CHECK(torus.contains(torus.sample(k)));
}

TEST_CASE("canonical text round-trips through the parser") {
  SRStructure s = parse_structure(kHeisenberg);
  SRStructure back = parse_structure(s.canonical_text());
  CHECK(back.d == s.d);
  CHECK(back.r_max == s.r_max);
  CHECK(back.generator_count() == s.generator_count());
  CHECK(back.canonical_text() == s.canonical_text());
}

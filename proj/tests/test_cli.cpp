#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "srlab/cli.hpp"

using namespace srlab;

namespace {

struct RunResult {
  int code = 0;
  std::string out, err;
};

RunResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  RunResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("fixtures resolve by name") {
  std::string path = find_fixture("heisenberg");
  CHECK(path.find("heisenberg.sr") != std::string::npos);
  CHECK(std::ifstream(path).good());
  CHECK_THROWS(find_fixture("not-a-fixture"));
}

TEST_CASE("basic reports succeed and carry the schema header") {
  for (const char* cmd : {"brackets", "density", "gram", "branches", "popp"}) {
    std::vector<std::string> args = {cmd, find_fixture("heisenberg")};
    if (std::string(cmd) != "brackets") args.insert(args.end(), {"--point", "0.5,0,0"});
    RunResult r = run(args);
    CAPTURE(cmd);
    CHECK(r.code == 0);
    CHECK(r.err.empty());
    CHECK(r.out.find("\"schema\": 1") != std::string::npos);
    CHECK(r.out.find("\"input_hash\"") != std::string::npos);
  }
}

TEST_CASE("artifacts are byte-identical across runs") {
  std::vector<std::vector<std::string>> cases = {
      {"brackets", find_fixture("martinet")},
      {"gram", find_fixture("martinet"), "--point", "1,0,0", "--h", "2^-3"},
      {"growth", find_fixture("martinet"), "--grid", "4"},
      {"branches", find_fixture("r4"), "--point", "1,1,0,0"},
      {"popp", find_fixture("r4"), "--point", "1,1,0,0", "--compare"},
      {"spectrum", find_fixture("t2_flat"), "--grid", "8", "--hlist", "1,0.5,0", "--k", "4"},
  };
  for (const auto& args : cases) {
    RunResult a = run(args);
    RunResult b = run(args);
    CAPTURE(args[0]);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK_FALSE(a.out.empty());
  }
}

TEST_CASE("artifact files match the stdout report") {
  std::string path = "cli_test_artifact.json";
  std::remove(path.c_str());
  RunResult direct = run({"brackets", find_fixture("heisenberg")});
  RunResult filed = run({"brackets", find_fixture("heisenberg"), "--out", path});
  CHECK(filed.code == 0);
  CHECK(filed.out.find("wrote " + path) != std::string::npos);
  CHECK(slurp(path) == direct.out);
  CHECK(std::remove(path.c_str()) == 0);
}

TEST_CASE("exit codes separate usage problems from evaluation failures") {
  CHECK(run({}).code == 2);                                        // missing subcommand
  CHECK(run({"frobnicate"}).code == 2);                            // unknown subcommand
  CHECK(run({"brackets"}).code == 2);                              // missing file
  CHECK(run({"gram", find_fixture("heisenberg")}).code == 2);      // missing --point
  CHECK(run({"growth", find_fixture("heisenberg")}).code == 2);    // neither point nor grid
  CHECK(run({"reproduce", "everything"}).code == 2);               // unknown target
  CHECK(run({"brackets", "missing_file.sr"}).code == 1);           // io failure
  CHECK(run({"growth", find_fixture("heisenberg"), "--point", "0,0"}).code == 2);
  CHECK(run({"spectrum", find_fixture("t2_flat"), "--grid", "8", "--hlist", "0.1,0.5"}).code ==
        1);  // ascending scales
}

TEST_CASE("failures carry machine-readable categories") {
  RunResult io = run({"brackets", "missing_file.sr"});
  CHECK(io.err.rfind("error:io:", 0) == 0);

  RunResult usage = run({"growth", find_fixture("heisenberg")});
  CHECK(usage.err.rfind("error:usage:", 0) == 0);

  // singular base point for the adapted frame
  RunResult domain = run({"popp", find_fixture("martinet"), "--point", "0,0,0"});
  CHECK(domain.code == 1);
  CHECK(domain.err.rfind("error:domain:", 0) == 0);

  // parse failures name the file and position
  std::string bad = "cli_test_bad.sr";
  {
    std::ofstream f(bad);
    f << "dim 3\ndomain box -1 1 -1 1 -1 1\nfield 1, 0\n";
  }
  RunResult parse = run({"brackets", bad});
  CHECK(parse.code == 1);
  CHECK(parse.err.rfind("error:parse:", 0) == 0);
  CHECK(parse.err.find(bad) != std::string::npos);
  CHECK(parse.err.find("3:1") != std::string::npos);
  std::remove(bad.c_str());
}

TEST_CASE("growth grid scans emit csv with a commented summary") {
  RunResult r = run({"growth", find_fixture("martinet"), "--grid", "3"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("# schema: 1", 0) == 0);
  CHECK(r.out.find("# command: growth") != std::string::npos);
  CHECK(r.out.find("# q_min: 4") != std::string::npos);
  CHECK(r.out.find("# singular points: 9") != std::string::npos);

  // the same scan as json
  RunResult j = run({"growth", find_fixture("martinet"), "--grid", "3", "--format", "json"});
  CHECK(j.code == 0);
  CHECK(j.out.find("\"q_min\": 4") != std::string::npos);
  CHECK(j.out.find("\"strata\"") != std::string::npos);
}

TEST_CASE("spectrum reports include the study diagnostics") {
  RunResult r = run({"spectrum", find_fixture("t3_eq"), "--grid", "8", "--hlist", "1,0.5,0.25",
                     "--k", "3", "--mode", "riemannian"});
  CHECK(r.code == 0);
  CHECK(r.out.find("lambda_tilde") != std::string::npos);
  CHECK(r.out.find("# a(1) = ") != std::string::npos);
  CHECK(r.out.find("# max_sandwich_violation") != std::string::npos);

  RunResult bad_mode = run({"spectrum", find_fixture("t3_eq"), "--grid", "8", "--hlist", "1,0.5",
                            "--k", "3", "--mode", "sideways"});
  CHECK(bad_mode.code == 2);

  // riemannian weights are rejected off the equiregular case
  RunResult neq = run({"spectrum", find_fixture("t3_neq"), "--grid", "8", "--hlist", "1,0.5",
                       "--k", "3", "--mode", "riemannian"});
  CHECK(neq.code == 1);
  CHECK(neq.err.rfind("error:domain:", 0) == 0);
  CHECK(neq.err.find("growth") != std::string::npos);
}

TEST_CASE("scale notation accepts powers of two and plain decimals") {
  RunResult pow2 = run({"gram", find_fixture("heisenberg"), "--point", "1,0,0", "--h", "2^-2"});
  RunResult dec = run({"gram", find_fixture("heisenberg"), "--point", "1,0,0", "--h", "0.25"});
  CHECK(pow2.code == 0);
  CHECK(pow2.out == dec.out);
  CHECK(run({"gram", find_fixture("heisenberg"), "--point", "1,0,0", "--h", "2^oops"}).code == 2);
}

TEST_CASE("reproduce targets pass on the shipped fixtures") {
  for (const char* target : {"heisenberg", "martinet", "r4"}) {
    RunResult r = run({"reproduce", target});
    CAPTURE(target);
    CHECK(r.code == 0);
    CHECK(r.out.find("all checks passed") != std::string::npos);
    CHECK(r.out.find("[ ok ]") != std::string::npos);
    CHECK(r.out.find("FAIL") == std::string::npos);
  }
}

TEST_CASE("help is available at both levels") {
  RunResult top = run({"--help"});
  CHECK(top.code == 0);
  CHECK(top.out.find("brackets") != std::string::npos);
  CHECK(top.out.find("spectrum") != std::string::npos);

  RunResult sub = run({"gram", "--help"});
  CHECK(sub.code == 0);
  CHECK(sub.out.find("--h") != std::string::npos);
}

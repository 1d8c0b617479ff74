#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace srlab {

// Full command-line entry point: parses argv, dispatches the subcommand,
// writes artifacts, prints `error:<category>: ...` to err on failure.
// Returns the process exit code: 0 ok, 1 domain/numeric failure, 2 usage.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Resolves a shipped structure file by name ("heisenberg" -> .../heisenberg.sr),
// looking at $SRLAB_FIXTURES, the build-time fixture directory, then ./fixtures.
std::string find_fixture(const std::string& name);

}  // namespace srlab

#pragma once

#include <string>
#include <string_view>

namespace srlab {

// FNV-1a 64-bit, rendered as 16 hex digits; used to stamp artifacts with a
// content hash of their input file.
std::string fnv1a_hex(std::string_view text);

std::string read_file(const std::string& path);

// Writes via a sibling temp file and rename, so readers never see a partial
// artifact.
void write_file_atomic(const std::string& path, const std::string& content);

// Shortest round-trip decimal form (%.17g trimmed), identical across runs.
std::string format_double(double v);

}  // namespace srlab

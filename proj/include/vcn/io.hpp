#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vcn {

inline constexpr const char* kToolVersion = "1.0.0";

// FNV-1a over raw bytes; used to stamp artifacts with the config hash.
std::uint64_t fnv1a64(std::string_view bytes);

// Shortest decimal string that round-trips the exact double.
std::string fmt(double x);
std::string fmt_u64(std::uint64_t x);
std::string fmt_hex16(std::uint64_t x);  // zero-padded, no 0x

// Joins cells with commas; cells must not contain commas or newlines.
std::string csv_row(const std::vector<std::string>& cells);

struct RunMeta {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

// Header stamped on every artifact.  Deliberately limited to inputs
// that define the result (version, config, seed): nothing host- or
// schedule-dependent, so reruns are byte-identical.
std::string artifact_header(const RunMeta& meta);

// Writes header + body atomically-ish (temp file then rename).
void write_artifact(const std::string& path, const RunMeta& meta,
                    const std::string& body);

std::string read_file(const std::string& path);

void ensure_dir(const std::string& path);

}  // namespace vcn

#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

namespace gridcarbon {

/// Formats with 9 significant digits, the precision used for all derived
/// outputs (trace.json, report.csv, bench tables).
inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// Rounds through the 9-significant-digit decimal representation, so values
/// placed in JSON documents serialize as short strings.
inline double round9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never observe a
/// half-written file.
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& content);

}  // namespace gridcarbon

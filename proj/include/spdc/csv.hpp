#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "spdc/errors.hpp"

namespace spdc::csv {

/// FNV-1a 64-bit digest, used to fingerprint configurations in output
/// metadata lines.
std::uint64_t fnv1a64(const std::string& data);

/// Metadata embedded as a leading comment line in every output file.
struct Meta {
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
  std::string comment_line() const;  // "# spdcforge seed=... config=..."
};

/// Line-oriented CSV writer. Rows are formatted by the caller with printf
/// formats so output bytes are reproducible.
class Writer {
 public:
  Writer(const std::filesystem::path& path, const Meta& meta,
         const std::string& header);
  ~Writer();
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  void raw_line(const std::string& line);

  template <typename... Args>
  void row(const char* fmt, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), fmt, args...);
    raw_line(buf);
  }

 private:
  std::FILE* f_ = nullptr;
};

/// Splits one CSV line on commas. No quoting support; the formats written
/// by this project never need it.
std::vector<std::string> split(const std::string& line);

/// Reads a CSV file, skipping '#' comment lines and the header row, and
/// hands each data row (already split) plus its 1-based line number to fn.
/// Throws ParseError if the header does not match `expected_header`.
void for_each_row(const std::filesystem::path& path,
                  const std::string& expected_header,
                  const std::function<void(const std::vector<std::string>&, long)>& fn);

double to_double(const std::string& field, long line);
long long to_int(const std::string& field, long line);

}  // namespace spdc::csv

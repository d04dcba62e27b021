#include "spdc/csv.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <functional>

namespace spdc::csv {

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string Meta::comment_line() const {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "# spdcforge seed=%llu config=%016llx",
                static_cast<unsigned long long>(seed),
                static_cast<unsigned long long>(config_digest));
  return buf;
}

Writer::Writer(const std::filesystem::path& path, const Meta& meta,
               const std::string& header) {
  f_ = std::fopen(path.string().c_str(), "wb");
  if (!f_) {
    throw IoError("cannot open " + path.string() + " for writing: " +
                  std::strerror(errno));
  }
  raw_line(meta.comment_line());
  raw_line(header);
}

Writer::~Writer() {
  if (f_) std::fclose(f_);
}

void Writer::raw_line(const std::string& line) {
  std::fwrite(line.data(), 1, line.size(), f_);
  std::fputc('\n', f_);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void for_each_row(const std::filesystem::path& path,
                  const std::string& expected_header,
                  const std::function<void(const std::vector<std::string>&, long)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  long lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != expected_header) {
        throw ParseError("unexpected header '" + line + "', want '" +
                             expected_header + "'",
                         lineno);
      }
      header_seen = true;
      continue;
    }
    fn(split(line), lineno);
  }
  // An empty file (no header at all) is treated as an empty stream.
}

double to_double(const std::string& field, long line) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE) {
    throw ParseError("bad numeric field '" + field + "'", line);
  }
  return v;
}

long long to_int(const std::string& field, long line) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(field.c_str(), &end, 10);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE) {
    throw ParseError("bad integer field '" + field + "'", line);
  }
  return v;
}

}  // namespace spdc::csv

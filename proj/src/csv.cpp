#include "hilab/csv.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <stdexcept>

namespace hilab {

std::uint64_t fnv1a(std::string_view data) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const CsvMeta& meta,
                     std::initializer_list<std::string_view> columns)
    : path_(path), out_(path, std::ios::binary), columns_(columns.size()) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(meta.config_text)));
  out_ << "# hilab " << meta.command << " seed=" << meta.seed << " config_hash=" << hash << '\n';
  out_ << "# generated " << stamp << '\n';
  bool first = true;
  for (auto c : columns) {
    out_ << (first ? "" : ",") << c;
    first = false;
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) {
    throw std::logic_error(path_.string() + ": row has " + std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(columns_));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
  if (!out_) throw std::runtime_error("error writing " + path_.string());
}

std::string csv_body(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream body;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    body << line << '\n';
  }
  return body.str();
}

}  // namespace hilab

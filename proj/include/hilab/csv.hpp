#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace hilab {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data) noexcept;

/// %.9g; integral values print without exponent up to 9 digits.
std::string fmt_num(double v);

/// Provenance written as `#` comment lines ahead of the column header.
struct CsvMeta {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_text;  ///< hashed into config_hash
};

/// Writes a CSV file with LF endings:
///
///   # hilab <command> seed=<seed> config_hash=<16 hex digits>
///   # generated <UTC timestamp>
///   <columns>
///   rows...
///
/// Readers that want a reproducible body drop lines starting with '#'.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const CsvMeta& meta, std::initializer_list<std::string_view> columns);

  void row(const std::vector<std::string>& cells);
  void flush() { out_.flush(); }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

/// File contents without '#' lines.
std::string csv_body(const std::filesystem::path& path);

}  // namespace hilab

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fairdisc::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `column` in the header, or -1.
  std::ptrdiff_t column_index(std::string_view column) const;
};

/// RFC 4180: quoted fields, doubled quotes, CRLF or LF line endings. The first
/// record is the header; every following record must have the same width.
Table parse(std::string_view text, char delimiter = ',');
Table read(const std::filesystem::path& path, char delimiter = ',');

void write_row(std::ostream& out, const std::vector<std::string>& fields, char delimiter = ',');
void write(std::ostream& out, const Table& table, char delimiter = ',');
void write(const std::filesystem::path& path, const Table& table, char delimiter = ',');

}  // namespace fairdisc::csv

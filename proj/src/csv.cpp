#include "fairdisc/csv.hpp"

#include <fstream>
#include <sstream>

#include "fairdisc/error.hpp"

namespace fairdisc::csv {

std::ptrdiff_t Table::column_index(std::string_view column) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == column) return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

Table parse(std::string_view text, char delimiter) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A lone empty field is a blank line, not a record.
    if (!(record.size() == 1 && record.front().empty())) records.push_back(std::move(record));
    record.clear();
  };

  // Skip a UTF-8 byte-order mark.
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (field_started && !field.empty()) {
        throw_error(ErrorKind::Data,
                    "csv line " + std::to_string(line) + ": quote inside unquoted field");
      }
      in_quotes = true;
      field_started = true;
    } else if (c == delimiter) {
      end_field();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
      ++line;
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw_error(ErrorKind::Data, "csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();

  if (records.empty()) throw_error(ErrorKind::Data, "csv: missing header row");
  Table table;
  table.header = std::move(records.front());
  table.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw_error(ErrorKind::Data, "csv record " + std::to_string(r) + ": expected " +
                                       std::to_string(table.header.size()) + " fields, got " +
                                       std::to_string(records[r].size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

Table read(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse(buffer.str(), delimiter);
  } catch (const Error& e) {
    throw e.annotated(path.string());
  }
}

void write_row(std::ostream& out, const std::vector<std::string>& fields, char delimiter) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << delimiter;
    const std::string& f = fields[i];
    const bool quote = f.find_first_of(std::string{delimiter, '"', '\n', '\r'}) != std::string::npos;
    if (!quote) {
      out << f;
      continue;
    }
    out << '"';
    for (char c : f) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  }
  out << '\n';
}

void write(std::ostream& out, const Table& table, char delimiter) {
  write_row(out, table.header, delimiter);
  for (const auto& row : table.rows) write_row(out, row, delimiter);
}

void write(const std::filesystem::path& path, const Table& table, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_error(ErrorKind::Io, "cannot write " + path.string());
  write(out, table, delimiter);
  if (!out) throw_error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace fairdisc::csv

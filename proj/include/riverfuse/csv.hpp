#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace riverfuse::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source file
  std::vector<std::string> fields;
};

struct Table {
  std::string path;
  std::vector<std::string> header;
  std::vector<Row> rows;
};

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

/// Reads a comma-separated table. The first line must match `expected_header`
/// exactly; every data row must have the same arity. Blank lines are skipped.
inline Table read_table(const std::string& path,
                        const std::vector<std::string>& expected_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open file");

  Table table;
  table.path = path;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (table.header.empty()) {
      if (fields != expected_header) {
        std::string want;
        for (const auto& h : expected_header) {
          if (!want.empty()) want += ',';
          want += h;
        }
        throw std::runtime_error(path + ":1: header mismatch, expected '" + want +
                                 "', got '" + line + "'");
      }
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != expected_header.size()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(expected_header.size()) +
                               " fields, got " + std::to_string(fields.size()));
    }
    table.rows.push_back(Row{line_no, std::move(fields)});
  }
  if (table.header.empty()) {
    throw std::runtime_error(path + ": missing header row");
  }
  return table;
}

inline double parse_double(const Table& table, const Row& row, std::size_t col) {
  const std::string& s = row.fields[col];
  double value = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw std::runtime_error(table.path + ":" + std::to_string(row.line) + ": field '" +
                             table.header[col] + "' is not a number: '" + s + "'");
  }
  return value;
}

inline long long parse_int(const Table& table, const Row& row, std::size_t col) {
  const std::string& s = row.fields[col];
  long long value = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw std::runtime_error(table.path + ":" + std::to_string(row.line) + ": field '" +
                             table.header[col] + "' is not an integer: '" + s + "'");
  }
  return value;
}

/// Fixed-precision decimal formatting. Output is locale-independent and
/// identical across runs, which the reproducibility guarantees rely on.
inline std::string format_fixed(double value, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, value);
  return std::string(buf);
}

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error(path + ": cannot open file for writing");
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) throw std::runtime_error(path_ + ": write failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace riverfuse::csv

#pragma once

// Minimal CSV reading/writing used by every file interface in the pipeline.
// Fields never contain commas or quotes, so no quoting is supported.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "humorfuse/error.hpp"

namespace humorfuse::csv {

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw NumericalError("cannot format value");
  return std::string(buf, ptr);
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

/// Reads a whole CSV file. The header is the first non-empty line.
class Table {
 public:
  static Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open file");
    return parse(in, path);
  }

  static Table parse(std::istream& in, const std::string& source) {
    Table t;
    t.source_ = source;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto fields = split(line);
      if (!have_header) {
        t.header_ = std::move(fields);
        have_header = true;
        continue;
      }
      if (fields.size() != t.header_.size()) {
        throw ValidationError(source + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(t.header_.size()) + " fields, found " +
                              std::to_string(fields.size()));
      }
      t.rows_.push_back({std::move(fields), lineno});
    }
    if (!have_header) throw ValidationError(source + ": missing header line");
    return t;
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::string& source() const { return source_; }

  /// Throws unless the header starts with exactly `expected`.
  void require_prefix(const std::vector<std::string>& expected) const {
    if (header_.size() < expected.size() ||
        !std::equal(expected.begin(), expected.end(), header_.begin())) {
      throw ValidationError(source_ + ":1: schema mismatch, expected header starting with '" +
                            join(expected) + "'");
    }
  }

  void require_exact(const std::vector<std::string>& expected) const {
    if (header_ != expected) {
      throw ValidationError(source_ + ":1: schema mismatch, expected header '" + join(expected) + "'");
    }
  }

  std::string where(const Row& row) const { return source_ + ":" + std::to_string(row.line); }

  double real(const Row& row, std::size_t col) const {
    const auto& f = row.fields.at(col);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || ptr != f.data() + f.size()) {
      throw ValidationError(where(row) + ": column '" + header_.at(col) + "' is not a number: '" + f + "'");
    }
    if (!std::isfinite(v)) {
      throw ValidationError(where(row) + ": column '" + header_.at(col) + "' is not finite");
    }
    return v;
  }

  std::int64_t integer(const Row& row, std::size_t col) const {
    const auto& f = row.fields.at(col);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || ptr != f.data() + f.size()) {
      throw ValidationError(where(row) + ": column '" + header_.at(col) + "' is not an integer: '" + f + "'");
    }
    return v;
  }

  const std::string& text(const Row& row, std::size_t col) const {
    const auto& f = row.fields.at(col);
    if (f.empty()) throw ValidationError(where(row) + ": column '" + header_.at(col) + "' is empty");
    return f;
  }

  static std::string join(const std::vector<std::string>& parts) {
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i) s += ',';
      s += parts[i];
    }
    return s;
  }

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<Row> rows_;
};

/// Streams rows to a file; fields are joined with commas.
class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw ValidationError(path + ": cannot open for writing");
  }

  template <typename... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << to_field(fields), first = false), ...);
    out_ << '\n';
  }

  void row(const std::vector<std::string>& fields) { out_ << Table::join(fields) << '\n'; }

  ~Writer() { out_.flush(); }

 private:
  static std::string to_field(const std::string& s) { return s; }
  static std::string to_field(const char* s) { return s; }
  static std::string to_field(double v) { return format_double(v); }
  template <typename I>
    requires std::is_integral_v<I>
  static std::string to_field(I v) { return std::to_string(v); }

  std::string path_;
  std::ofstream out_;
};

}  // namespace humorfuse::csv

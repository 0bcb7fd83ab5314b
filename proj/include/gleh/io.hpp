#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "gleh/errors.hpp"

namespace gleh {

/// Shortest round-trip decimal form of a double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// RFC 4180 field: quoted when it holds a comma, quote, CR or LF; quotes doubled.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// In-memory CSV table written with CRLF record separators.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size()) throw Error(ErrorCode::DimensionMismatch, "CSV row width differs from header");
    rows_.push_back(cells);
  }

  void add_numbers(const std::vector<double>& values) {
    std::vector<std::string> cells;
    for (double v : values) cells.push_back(format_number(v));
    add_row(cells);
  }

  std::size_t size() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += csv_field(cells[i]);
      }
      out += "\r\n";
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::ConfigParseError, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::ConfigParseError, "failed writing " + path.string());
}

}  // namespace gleh

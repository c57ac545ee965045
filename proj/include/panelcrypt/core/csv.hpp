#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "panelcrypt/core/error.hpp"

namespace panelcrypt::csv {

using Row = std::vector<std::string>;

// Splits one CSV record. Double quotes delimit fields that contain commas;
// a doubled quote inside a quoted field is a literal quote.
inline Row split(std::string_view line) {
  Row out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n'))
    --e;
  return std::string(s.substr(b, e - b));
}

inline std::string quote(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string join(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(row[i]);
  }
  return out;
}

// Shortest text that reads back to the identical double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::optional<double> try_parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Line-oriented reader that tracks 1-based line numbers for error messages.
class Reader {
 public:
  explicit Reader(std::string path) : path_(std::move(path)), in_(path_) {
    if (!in_) throw LoadError(path_, 0, "cannot open file");
  }

  // Returns false at end of input. Blank lines are skipped.
  bool next(Row& row) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      row = split(line);
      for (auto& f : row) f = trim(f);
      return true;
    }
    return false;
  }

  // Raw line access for sectioned files.
  bool next_line(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      return true;
    }
    return false;
  }

  std::size_t line() const noexcept { return line_; }
  const std::string& path() const noexcept { return path_; }

  [[noreturn]] void fail(const std::string& what) const { throw LoadError(path_, line_, what); }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_ = 0;
};

// Maps header names to column positions and checks required columns exist.
class Header {
 public:
  Header(const Row& header, const std::vector<std::string>& required, const Reader& reader)
      : names_(header) {
    for (const auto& r : required) {
      if (find(r) < 0) reader.fail("missing required column '" + r + "'");
    }
  }

  int find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::size_t index(std::string_view name) const { return static_cast<std::size_t>(find(name)); }
  std::size_t size() const noexcept { return names_.size(); }

 private:
  Row names_;
};

}  // namespace panelcrypt::csv

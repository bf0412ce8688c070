// Column-oriented result tables and their CSV form.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rapnet/common.hpp"

namespace rapnet {

/// Shortest round-trippable decimal form of a double ("%.17g", trimmed).
inline std::string format_real(double x) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

/// A header plus rows of already-formatted cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Table() = default;
  explicit Table(std::vector<std::string> columns) : header(std::move(columns)) {}

  class RowBuilder {
   public:
    explicit RowBuilder(std::vector<std::string>& row) : row_(row) {}
    RowBuilder& operator<<(double x) {
      row_.push_back(format_real(x));
      return *this;
    }
    RowBuilder& operator<<(std::int64_t x) {
      row_.push_back(std::to_string(x));
      return *this;
    }
    RowBuilder& operator<<(std::uint64_t x) {
      row_.push_back(std::to_string(x));
      return *this;
    }
    RowBuilder& operator<<(int x) { return *this << static_cast<std::int64_t>(x); }
    RowBuilder& operator<<(bool x) {
      row_.emplace_back(x ? "1" : "0");
      return *this;
    }
    RowBuilder& operator<<(const std::string& s) {
      row_.push_back(s);
      return *this;
    }
    RowBuilder& operator<<(const char* s) {
      row_.emplace_back(s);
      return *this;
    }

   private:
    std::vector<std::string>& row_;
  };

  RowBuilder add_row() { return RowBuilder(rows.emplace_back()); }
};

/// CSV text: header row, comma separated, '.' decimal point, LF endings.
inline std::string to_csv(const Table& t) {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  emit(t.header);
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size())
      throw ParameterError("to_csv: row width does not match header");
    emit(r);
  }
  return out;
}

/// Writes `contents` verbatim (binary mode, so LF stays LF).
inline void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot open for writing: " + path);
  f << contents;
  if (!f) throw ParseError(ParseError::Kind::kIo, "write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_results(const Table& t, const std::string& path) {
  write_text_file(path, to_csv(t));
}

}  // namespace rapnet

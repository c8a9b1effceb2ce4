#pragma once

#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cpcr/dataset.hpp"
#include "cpcr/error.hpp"

namespace cpcr {

// Column mapping for CSV ingestion. An empty feature list means "every
// column that is not the timestamp, mode or target column".
struct CsvSchema {
  std::string timestamp_column = "timestamp";
  std::string mode_column = "mode";
  std::vector<std::string> feature_columns;
  std::string target_column = "target";  // optional in the file
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line,
                                               std::size_t line_no) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  if (quoted)
    throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
  cells.push_back(std::move(cell));
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<int> parse_fixed_int(std::string_view s) {
  int v = 0;
  if (s.empty()) return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// ISO-8601 date or date-time ("2016-04-14", "2016-04-14T10:30:00.5Z",
// "2016-04-14 10:30+09:00") to epoch seconds. No time zone means UTC.
inline std::optional<double> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  s = detail::trim(s);
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto yy = detail::parse_fixed_int(s.substr(0, 4));
  auto mo = detail::parse_fixed_int(s.substr(5, 2));
  auto dd = detail::parse_fixed_int(s.substr(8, 2));
  if (!yy || !mo || !dd) return std::nullopt;
  const year_month_day ymd{year{*yy}, month{static_cast<unsigned>(*mo)},
                           day{static_cast<unsigned>(*dd)}};
  if (!ymd.ok()) return std::nullopt;
  double secs = static_cast<double>(sys_days{ymd}.time_since_epoch().count()) * 86400.0;
  s.remove_prefix(10);
  if (s.empty()) return secs;
  if (s.front() != 'T' && s.front() != ' ') return std::nullopt;
  s.remove_prefix(1);
  if (s.size() < 5 || s[2] != ':') return std::nullopt;
  auto hh = detail::parse_fixed_int(s.substr(0, 2));
  auto mi = detail::parse_fixed_int(s.substr(3, 2));
  if (!hh || !mi || *hh > 23 || *mi > 59) return std::nullopt;
  secs += *hh * 3600.0 + *mi * 60.0;
  s.remove_prefix(5);
  if (!s.empty() && s.front() == ':') {
    std::size_t end = 1;
    while (end < s.size() && (std::isdigit(static_cast<unsigned char>(s[end])) || s[end] == '.'))
      ++end;
    auto sec = detail::parse_double(s.substr(1, end - 1));
    if (!sec || *sec < 0 || *sec >= 61) return std::nullopt;
    secs += *sec;
    s.remove_prefix(end);
  }
  if (s.empty() || s == "Z") return secs;
  if (s.front() != '+' && s.front() != '-') return std::nullopt;
  const double sign = s.front() == '+' ? 1.0 : -1.0;
  s.remove_prefix(1);
  std::string digits;
  for (char ch : s)
    if (ch != ':') digits += ch;
  if (digits.size() != 4 && digits.size() != 2) return std::nullopt;
  auto oh = detail::parse_fixed_int(std::string_view(digits).substr(0, 2));
  auto om = digits.size() == 4
                ? detail::parse_fixed_int(std::string_view(digits).substr(2, 2))
                : std::optional<int>(0);
  if (!oh || !om) return std::nullopt;
  return secs - sign * (*oh * 3600.0 + *om * 60.0);
}

inline TimeSeriesDataset read_csv(std::istream& in, const CsvSchema& schema = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line, line_no);
      break;
    }
  }
  if (header.empty()) throw SchemaError("missing header row");
  if (header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  for (auto& h : header) h = std::string(detail::trim(h));

  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  auto require_col = [&](const std::string& name) {
    auto idx = find_col(name);
    if (!idx) throw SchemaError("missing column '" + name + "'");
    return *idx;
  };

  const std::size_t ts_col = require_col(schema.timestamp_column);
  const std::size_t mode_col = require_col(schema.mode_column);
  const auto target_col = schema.target_column.empty()
                              ? std::optional<std::size_t>{}
                              : find_col(schema.target_column);

  std::vector<std::size_t> feature_cols;
  std::vector<std::string> feature_names;
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i == ts_col || i == mode_col || (target_col && i == *target_col)) continue;
      feature_cols.push_back(i);
      feature_names.push_back(header[i]);
    }
  } else {
    for (const auto& name : schema.feature_columns) {
      feature_cols.push_back(require_col(name));
      feature_names.push_back(name);
    }
  }

  struct RawRow {
    std::size_t line_no;
    std::vector<std::string> cells;
  };
  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line, line_no);
    if (cells.size() != header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    rows.push_back({line_no, std::move(cells)});
  }

  // Timestamp format is decided once per column: all numeric or all ISO-8601.
  bool numeric_ts = true;
  for (const auto& r : rows)
    if (!detail::parse_double(r.cells[ts_col])) {
      numeric_ts = false;
      break;
    }

  std::vector<Sample> samples;
  samples.reserve(rows.size());
  std::optional<bool> has_target;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "line " + std::to_string(row.line_no) +
                              " (data row " + std::to_string(r + 1) + ")";
    Sample s;
    const auto& ts_cell = row.cells[ts_col];
    auto ts = numeric_ts ? detail::parse_double(ts_cell) : parse_iso8601(ts_cell);
    if (!ts || !std::isfinite(*ts))
      throw ParseError(where + ", column '" + header[ts_col] +
                       "': bad timestamp '" + ts_cell + "'");
    s.timestamp = *ts;
    s.mode = std::string(detail::trim(row.cells[mode_col]));
    if (s.mode.empty())
      throw ParseError(where + ", column '" + header[mode_col] + "': empty mode");
    s.features.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const auto& cell = row.cells[feature_cols[k]];
      auto v = detail::parse_double(cell);
      if (!v || !std::isfinite(*v))
        throw ParseError(where + ", column '" + feature_names[k] +
                         "': non-numeric value '" + cell + "'");
      s.features.push_back(*v);
    }
    if (target_col) {
      const auto& cell = row.cells[*target_col];
      if (!detail::trim(cell).empty()) {
        auto v = detail::parse_double(cell);
        if (!v || !std::isfinite(*v))
          throw ParseError(where + ", column '" + header[*target_col] +
                           "': non-numeric value '" + cell + "'");
        s.target = *v;
      }
    }
    if (!has_target) {
      has_target = s.target.has_value();
    } else if (*has_target != s.target.has_value()) {
      throw InvariantError(where + ": mixed target presence (column '" +
                           header[*target_col] + "')");
    }
    samples.push_back(std::move(s));
  }
  return TimeSeriesDataset(std::move(feature_names), std::move(samples));
}

inline TimeSeriesDataset load_csv(const std::string& path,
                                  const CsvSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  return read_csv(in, schema);
}

// Shortest text that reads back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

inline void write_csv(std::ostream& out, const TimeSeriesDataset& ds,
                      const CsvSchema& schema = {}) {
  const bool targets = ds.has_targets();
  out << csv_escape(schema.timestamp_column) << ',' << csv_escape(schema.mode_column);
  for (const auto& name : ds.feature_names()) out << ',' << csv_escape(name);
  if (targets) out << ',' << csv_escape(schema.target_column);
  out << '\n';
  for (const Sample& s : ds.samples()) {
    out << format_double(s.timestamp) << ',' << csv_escape(s.mode);
    for (double v : s.features) out << ',' << format_double(v);
    if (targets) out << ',' << format_double(*s.target);
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const TimeSeriesDataset& ds,
                     const CsvSchema& schema = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  write_csv(out, ds, schema);
}

}  // namespace cpcr

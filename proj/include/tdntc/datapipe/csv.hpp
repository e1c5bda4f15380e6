#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tdntc/datapipe/dataset.hpp"
#include "tdntc/error.hpp"

namespace tdntc {

// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Splits one CSV record. Double-quoted fields may contain commas and
// doubled quotes; embedded newlines are not supported.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

// Reads a header-led CSV. Columns other than the label column become
// features; a column with any non-numeric cell is label-encoded as strings.
inline Dataset load_csv_dataset(std::istream& in, const std::string& label_column,
                                const std::string& source = "<stream>") {
  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!line.empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError(source + ": empty file");

  std::size_t label_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) label_idx = i;
  }
  if (label_idx == header.size()) {
    throw DataError(source + ": missing label column '" + label_column + "'");
  }

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError(source + ": ragged row at line " + std::to_string(line_no) + " (" +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()) + ")");
    }
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw DataError(source + ": dataset is empty (header only)");

  Dataset ds;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_idx) {
      feature_cols.push_back(c);
      ds.feature_names.push_back(header[c]);
    }
  }
  ds.records.resize(rows.size());
  for (auto& r : ds.records) r.features.resize(feature_cols.size());

  for (std::size_t f = 0; f < feature_cols.size(); ++f) {
    const std::size_t c = feature_cols[f];
    std::vector<double> numeric(rows.size());
    bool all_numeric = true;
    for (std::size_t m = 0; m < rows.size() && all_numeric; ++m) {
      auto v = parse_double(rows[m][c]);
      if (!v) all_numeric = false;
      else numeric[m] = *v;
    }
    if (!all_numeric) {
      std::vector<std::string> column(rows.size());
      for (std::size_t m = 0; m < rows.size(); ++m) column[m] = rows[m][c];
      auto enc = encode_labels(column);
      for (std::size_t m = 0; m < rows.size(); ++m) numeric[m] = enc.indices[m];
    }
    for (std::size_t m = 0; m < rows.size(); ++m) ds.records[m].features[f] = numeric[m];
  }

  std::vector<std::string> raw_labels(rows.size());
  for (std::size_t m = 0; m < rows.size(); ++m) raw_labels[m] = rows[m][label_idx];
  auto enc = encode_labels(raw_labels);
  ds.class_names = std::move(enc.class_names);
  for (std::size_t m = 0; m < rows.size(); ++m) ds.records[m].label = enc.indices[m];
  return ds;
}

inline Dataset load_csv_dataset(const std::string& path, const std::string& label_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return load_csv_dataset(in, label_column, path);
}

inline void write_csv_dataset(std::ostream& out, const Dataset& ds,
                              const std::string& label_column = "label") {
  const std::size_t n = ds.n_features();
  for (std::size_t f = 0; f < n; ++f) {
    out << (f < ds.feature_names.size() ? csv_escape(ds.feature_names[f]) : "f" + std::to_string(f))
        << ',';
  }
  out << label_column << '\n';
  for (const auto& r : ds.records) {
    for (double v : r.features) out << format_double(v) << ',';
    out << csv_escape(ds.class_names.at(static_cast<std::size_t>(r.label))) << '\n';
  }
}

}  // namespace tdntc

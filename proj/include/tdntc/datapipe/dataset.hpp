#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "tdntc/error.hpp"

namespace tdntc {

// One flow: N raw features and an encoded class index.
struct FlowRecord {
  std::vector<double> features;
  int label = 0;
};

// The M x N flow matrix with its label encoder table.
struct Dataset {
  std::vector<FlowRecord> records;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;

  std::size_t size() const { return records.size(); }
  std::size_t n_classes() const { return class_names.size(); }
  std::size_t n_features() const { return records.empty() ? feature_names.size() : records.front().features.size(); }

  void validate() const {
    if (records.empty()) throw DataError("dataset is empty");
    const std::size_t n = records.front().features.size();
    for (std::size_t m = 0; m < records.size(); ++m) {
      if (records[m].features.size() != n) {
        throw DataError("record " + std::to_string(m) + " has " +
                        std::to_string(records[m].features.size()) + " features, expected " +
                        std::to_string(n));
      }
      if (records[m].label < 0 || static_cast<std::size_t>(records[m].label) >= n_classes()) {
        throw DataError("record " + std::to_string(m) + " label " + std::to_string(records[m].label) +
                        " outside encoder table of " + std::to_string(n_classes()) + " classes");
      }
    }
  }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
  }

  Dataset subset(const std::vector<std::size_t>& indices) const {
    Dataset d;
    d.class_names = class_names;
    d.feature_names = feature_names;
    d.records.reserve(indices.size());
    for (auto i : indices) d.records.push_back(records.at(i));
    return d;
  }
};

struct LabelEncoding {
  std::vector<int> indices;
  std::vector<std::string> class_names;
};

// Distinct labels sorted lexicographically and numbered 0..C-1.
inline LabelEncoding encode_labels(const std::vector<std::string>& raw) {
  LabelEncoding enc;
  enc.class_names = raw;
  std::sort(enc.class_names.begin(), enc.class_names.end());
  enc.class_names.erase(std::unique(enc.class_names.begin(), enc.class_names.end()),
                        enc.class_names.end());
  std::map<std::string, int> lookup;
  for (std::size_t i = 0; i < enc.class_names.size(); ++i) lookup[enc.class_names[i]] = static_cast<int>(i);
  enc.indices.reserve(raw.size());
  for (const auto& s : raw) enc.indices.push_back(lookup[s]);
  return enc;
}

// Re-labels ds so that its indices refer to `table` instead of its own encoder.
inline Dataset remap_labels(const Dataset& ds, const std::vector<std::string>& table) {
  std::map<std::string, int> lookup;
  for (std::size_t i = 0; i < table.size(); ++i) lookup[table[i]] = static_cast<int>(i);
  Dataset out = ds;
  out.class_names = table;
  for (auto& r : out.records) {
    const auto& name = ds.class_names.at(static_cast<std::size_t>(r.label));
    auto it = lookup.find(name);
    if (it == lookup.end()) throw DataError("label '" + name + "' is not in the model's class table");
    r.label = it->second;
  }
  return out;
}

}  // namespace tdntc

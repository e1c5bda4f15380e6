#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tdntc/datapipe/dataset.hpp"
#include "tdntc/random.hpp"
#include "tdntc/tensor.hpp"

namespace tdntc {

// ---- min-max scaling -------------------------------------------------------

struct ScalerState {
  std::vector<double> min;
  std::vector<double> max;

  std::size_t n_features() const { return min.size(); }
};

inline ScalerState minmax_fit(const Dataset& train) {
  train.validate();
  const std::size_t n = train.n_features();
  ScalerState s;
  s.min.assign(n, 0.0);
  s.max.assign(n, 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    double lo = train.records.front().features[f];
    double hi = lo;
    for (const auto& r : train.records) {
      lo = std::min(lo, r.features[f]);
      hi = std::max(hi, r.features[f]);
    }
    s.min[f] = lo;
    s.max[f] = hi;
  }
  return s;
}

// x' = (x - min) / (max - min), clamped to [0,1]; constant features map to 0.
inline Dataset minmax_apply(const ScalerState& state, const Dataset& ds) {
  if (ds.n_features() != state.n_features()) {
    throw ShapeError("scaler fitted on " + std::to_string(state.n_features()) +
                     " features, dataset has " + std::to_string(ds.n_features()));
  }
  Dataset out = ds;
  for (auto& r : out.records) {
    for (std::size_t f = 0; f < r.features.size(); ++f) {
      const double range = state.max[f] - state.min[f];
      double v = range > 0.0 ? (r.features[f] - state.min[f]) / range : 0.0;
      r.features[f] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

struct ScaledSplit {
  ScalerState state;
  Dataset scaled;
};

inline ScaledSplit minmax_fit_transform(const Dataset& train) {
  auto state = minmax_fit(train);
  auto scaled = minmax_apply(state, train);
  return {std::move(state), std::move(scaled)};
}

// ---- grayscale frame representation ----------------------------------------

struct FactorPair {
  std::size_t rows;
  std::size_t cols;

  friend bool operator==(const FactorPair&, const FactorPair&) = default;
};

// Smallest divisor R of N with R >= sqrt(N); C = N / R, so R >= C.
inline FactorPair choose_factor_pair(std::size_t n) {
  if (n == 0) throw ShapeError("feature count must be at least 1");
  for (std::size_t r = 1; r <= n; ++r) {
    if (n % r == 0 && r * r >= n) return {r, n / r};
  }
  return {n, 1};
}

struct FrameStream {
  Tensor frames;  // [M, R, C]
  FactorPair factors;
};

// Row j of frame m holds features (j*C .. j*C + C - 1) of flow m. Requires
// features already scaled into [0, 1].
inline FrameStream frames_from_flows(const Dataset& ds, std::optional<FactorPair> override_pair = {}) {
  ds.validate();
  const std::size_t n = ds.n_features();
  const FactorPair fp = override_pair.value_or(choose_factor_pair(n));
  if (fp.rows * fp.cols != n) {
    throw ShapeError("factor pair " + std::to_string(fp.rows) + "x" + std::to_string(fp.cols) +
                     " does not factor N=" + std::to_string(n));
  }
  Tensor frames({ds.size(), fp.rows, fp.cols});
  auto out = frames.data();
  for (std::size_t m = 0; m < ds.size(); ++m) {
    const auto& feats = ds.records[m].features;
    for (std::size_t j = 0; j < fp.rows; ++j) {
      for (std::size_t c = 0; c < fp.cols; ++c) {
        const double v = feats[j * fp.cols + c];
        if (!(v >= 0.0 && v <= 1.0)) {
          throw DomainError("flow " + std::to_string(m) + " feature " + std::to_string(j * fp.cols + c) +
                            " = " + std::to_string(v) + " is outside [0,1]; scale before framing");
        }
        out[(m * fp.rows + j) * fp.cols + c] = v;
      }
    }
  }
  return {std::move(frames), fp};
}

// ---- stratified split --------------------------------------------------------

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Per class: round(10%) validation, round(20%) test (halves round up), the
// rest training.
// Each index list is returned in ascending order.
inline SplitIndices stratified_split(const Dataset& ds, std::uint64_t seed) {
  ds.validate();
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.records[i].label].push_back(i);
  for (const auto& [label, idx] : by_class) {
    if (idx.size() < 3) {
      throw DataError("class '" + ds.class_names.at(static_cast<std::size_t>(label)) + "' has only " +
                      std::to_string(idx.size()) + " samples; stratification needs at least 3");
    }
  }
  Rng rng(seed);
  SplitIndices split;
  for (auto& [label, idx] : by_class) {
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    const std::size_t n_val = (n + 5) / 10;
    const std::size_t n_test = (2 * n + 5) / 10;
    split.val.insert(split.val.end(), idx.begin(), idx.begin() + n_val);
    split.test.insert(split.test.end(), idx.begin() + n_val, idx.begin() + n_val + n_test);
    split.train.insert(split.train.end(), idx.begin() + n_val + n_test, idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---- synthetic flows -----------------------------------------------------------

// Desk-scale stand-in for real flow datasets. Feature f belongs to the block
// of class (f * C / N); members of class c get a raised mean on their own
// block. All features carry Gaussian noise.
inline Dataset generate_synthetic(std::size_t classes, std::size_t per_class, std::size_t n_features,
                                  std::uint64_t seed) {
  if (classes < 2) throw DataError("synthetic data needs at least 2 classes");
  if (n_features < 4) throw DataError("synthetic data needs at least 4 features");
  if (per_class < 1) throw DataError("synthetic data needs at least 1 sample per class");
  Rng rng(seed);
  Dataset ds;
  const std::size_t width = std::to_string(classes - 1).size();
  for (std::size_t c = 0; c < classes; ++c) {
    std::string idx = std::to_string(c);
    ds.class_names.push_back("class_" + std::string(width - idx.size(), '0') + idx);
  }
  for (std::size_t f = 0; f < n_features; ++f) ds.feature_names.push_back("f" + std::to_string(f));

  // per-class, per-feature means: a shared baseline plus a class signature
  std::vector<std::vector<double>> means(classes, std::vector<double>(n_features));
  for (std::size_t f = 0; f < n_features; ++f) {
    const double base = rng.uniform(0.0, 2.0);
    for (std::size_t c = 0; c < classes; ++c) {
      const bool own_block = (f * classes) / n_features == c;
      means[c][f] = base + (own_block ? 1.5 : 0.0) + 0.25 * rng.uniform(-1.0, 1.0);
    }
  }
  ds.records.reserve(classes * per_class);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      FlowRecord r;
      r.label = static_cast<int>(c);
      r.features.resize(n_features);
      for (std::size_t f = 0; f < n_features; ++f) r.features[f] = means[c][f] + 0.6 * rng.normal();
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

}  // namespace tdntc

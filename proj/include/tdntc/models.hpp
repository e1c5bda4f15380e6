#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdntc/datapipe.hpp"
#include "tdntc/error.hpp"
#include "tdntc/layers.hpp"

namespace tdntc {

enum class Variant { M1_TD, M1_VAN, M2_TD, M2_VAN, M3_TD, M3_VAN };

inline constexpr Variant kAllVariants[] = {Variant::M1_TD, Variant::M1_VAN, Variant::M2_TD,
                                           Variant::M2_VAN, Variant::M3_TD, Variant::M3_VAN};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::M1_TD: return "M1_TD";
    case Variant::M1_VAN: return "M1_VAN";
    case Variant::M2_TD: return "M2_TD";
    case Variant::M2_VAN: return "M2_VAN";
    case Variant::M3_TD: return "M3_TD";
    case Variant::M3_VAN: return "M3_VAN";
  }
  return "?";
}

// Accepts "M3_TD", "m3_td", "m3-td" and the like.
inline Variant parse_variant(std::string text) {
  for (auto& ch : text) ch = ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  for (auto v : kAllVariants) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown variant '" + text + "' (expected one of m1-td, m1-van, m2-td, m2-van, m3-td, m3-van)");
}

inline int model_family(Variant v) {
  switch (v) {
    case Variant::M1_TD: case Variant::M1_VAN: return 1;
    case Variant::M2_TD: case Variant::M2_VAN: return 2;
    default: return 3;
  }
}

inline bool is_time_distributed(Variant v) {
  return v == Variant::M1_TD || v == Variant::M2_TD || v == Variant::M3_TD;
}

inline bool uses_frames(Variant v) { return model_family(v) != 2; }

struct ModelConfig {
  Variant variant = Variant::M3_TD;
  std::size_t n_features = 48;
  std::size_t n_classes = 141;
  std::size_t units = 128;
  std::size_t kernel_rows = 3;
  std::size_t kernel_cols = 3;
  std::size_t td_units = 128;
  std::optional<FactorPair> factors;  // defaults to choose_factor_pair(n_features)
  std::uint64_t seed = 1;

  FactorPair frame_shape() const { return factors.value_or(choose_factor_pair(n_features)); }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j = {{"variant", to_string(c.variant)}, {"n_features", c.n_features},
                      {"n_classes", c.n_classes},        {"units", c.units},
                      {"kernel_rows", c.kernel_rows},    {"kernel_cols", c.kernel_cols},
                      {"td_units", c.td_units},          {"seed", c.seed}};
  if (c.factors) j["factors"] = {c.factors->rows, c.factors->cols};
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.n_features = j.at("n_features").get<std::size_t>();
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.units = j.at("units").get<std::size_t>();
    c.kernel_rows = j.at("kernel_rows").get<std::size_t>();
    c.kernel_cols = j.at("kernel_cols").get<std::size_t>();
    c.td_units = j.at("td_units").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("factors")) c.factors = FactorPair{j["factors"].at(0).get<std::size_t>(), j["factors"].at(1).get<std::size_t>()};
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

struct Stage {
  std::string name;
  std::unique_ptr<Layer> layer;
  Shape input;   // per-sample
  Shape output;  // per-sample
};

struct StageRow {
  std::string network;
  std::string calculation;
  std::size_t parameters = 0;
};

struct PredictResult {
  Tensor probs;  // [B, C]
  std::vector<int> classes;
};

class ModelGraph {
 public:
  explicit ModelGraph(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  ModelGraph(const ModelGraph&) = delete;
  ModelGraph& operator=(const ModelGraph&) = delete;
  ModelGraph(ModelGraph&&) = default;
  ModelGraph& operator=(ModelGraph&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Stage>& stages() const { return stages_; }
  std::vector<Stage>& stages() { return stages_; }

  // Per-sample input shape: [R, C] frames for Models 1/3, [N, 1] for Model 2.
  Shape input_shape() const { return stages_.front().input; }

  void add_stage(std::string name, std::unique_ptr<Layer> layer) {
    Shape in = stages_.empty() ? input_ : stages_.back().output;
    Shape out;
    try {
      out = layer->output_shape(in);
    } catch (const Error& e) {
      throw BuildError(name, e.what());
    }
    if (element_count(out) == 0) throw BuildError(name, "produces an empty output from " + to_string(in));
    stages_.push_back({std::move(name), std::move(layer), std::move(in), std::move(out)});
  }

  void set_input_shape(Shape s) { input_ = std::move(s); }

  // Logits [B, C]. The decision layer is linear; softmax is applied by
  // predict() and by the loss.
  Tensor forward(const Tensor& x, Mode mode) { return forward_until(x, mode, stages_.size()); }

  Tensor backward(const Tensor& grad_logits) {
    Tensor g = grad_logits;
    for (std::size_t i = stages_.size(); i-- > 0;) g = stages_[i].layer->backward(g);
    return g;
  }

  // Activations entering the decision layer (the flattened holistic features).
  Tensor holistic_features(const Tensor& x) { return forward_until(x, Mode::Infer, stages_.size() - 1); }

  std::vector<Param*> parameters() {
    std::vector<Param*> out;
    for (auto& s : stages_) {
      for (auto* p : s.layer->parameters()) out.push_back(p);
    }
    return out;
  }

  // Parameters and buffers keyed "<stage>.<name>" for checkpointing.
  std::vector<std::pair<std::string, Param*>> named_parameters() {
    std::vector<std::pair<std::string, Param*>> out;
    for (auto& s : stages_) {
      for (auto* p : s.layer->parameters()) out.emplace_back(s.name + "." + p->name, p);
    }
    return out;
  }
  std::vector<std::pair<std::string, Tensor*>> named_buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& s : stages_) {
      for (auto& b : s.layer->buffers()) out.emplace_back(s.name + "." + b.name, b.value);
    }
    return out;
  }

  void zero_grad() {
    for (auto& s : stages_) s.layer->zero_grad();
  }

  std::vector<StageRow> stage_table() const {
    std::vector<StageRow> rows;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const auto& s = stages_[i];
      StageRow r{s.name, s.layer->calculation(), s.layer->parameter_count()};
      // A decision layer fed by a flattened [T, U] sequence reads as T x U x C + C.
      if (i + 1 == stages_.size() && i > 0 && stages_[i - 1].input.size() == 2) {
        const auto& seq = stages_[i - 1].input;
        r.calculation = std::to_string(seq[0]) + "x" + std::to_string(seq[1]) + "x" +
                        std::to_string(cfg_.n_classes) + "+" + std::to_string(cfg_.n_classes);
      }
      rows.push_back(std::move(r));
    }
    return rows;
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& s : stages_) total += s.layer->parameter_count();
    return total;
  }

 private:
  Tensor forward_until(const Tensor& x, Mode mode, std::size_t end) {
    const Shape expected = input_shape();
    if (x.rank() != expected.size() + 1 || sample_shape(x) != expected) {
      throw ShapeError(to_string(cfg_.variant) + " expects input [batch," +
                       to_string(expected).substr(1) + ", got " + to_string(x.shape()));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < end; ++i) h = stages_[i].layer->forward(h, mode);
    return h;
  }

  ModelConfig cfg_;
  Shape input_;
  std::vector<Stage> stages_;
};

// Assembles one of the six variants. Weights are Glorot-uniform from
// cfg.seed, biases zero. Pooling uses ceil mode, so odd extents survive.
inline ModelGraph build_model(const ModelConfig& cfg) {
  if (cfg.n_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  if (cfg.n_features < 1) throw ConfigError("n_features must be at least 1");
  if (cfg.units < 1 || cfg.td_units < 1) throw ConfigError("unit counts must be at least 1");

  ModelGraph g(cfg);
  Rng rng(cfg.seed);
  const std::size_t u = cfg.units;
  const Variant v = cfg.variant;
  const bool td = is_time_distributed(v);

  auto add_cnn_block = [&] {
    const FactorPair fp = cfg.frame_shape();
    if (fp.rows * fp.cols != cfg.n_features) {
      throw BuildError("Input", "factor pair " + std::to_string(fp.rows) + "x" + std::to_string(fp.cols) +
                                    " does not factor N=" + std::to_string(cfg.n_features));
    }
    g.set_input_shape({fp.rows, fp.cols});
    Conv2DSpec spec;
    spec.units = u;
    spec.kernel_rows = cfg.kernel_rows;
    spec.kernel_cols = cfg.kernel_cols;
    g.add_stage("CNN_2D", std::make_unique<Conv2DLayer>(spec, rng));
    g.add_stage("MP_2D", std::make_unique<MaxPool2DLayer>(PoolPadding::Same));
    g.add_stage("BN", std::make_unique<BatchNormLayer>(u));
    g.add_stage("Reshape", std::make_unique<SpatialToSequence>());
  };
  auto dense = [&](std::size_t in, std::size_t out, Activation act) {
    return DenseLayer(in, out, act, rng);
  };
  auto add_head = [&](std::size_t width) {
    if (td) {
      g.add_stage("TD(FFNN_0)", std::make_unique<TimeDistributed>(dense(width, cfg.td_units, Activation::Relu)));
    } else {
      g.add_stage("FFNN_0", std::make_unique<DenseLayer>(dense(width, cfg.td_units, Activation::Relu)));
    }
    g.add_stage("Flatten", std::make_unique<Flatten>());
    const std::size_t flat = g.stages().back().output.at(0);
    g.add_stage("FFNN_1", std::make_unique<DenseLayer>(dense(flat, cfg.n_classes, Activation::Identity)));
  };

  switch (model_family(v)) {
    case 1: {
      add_cnn_block();
      if (td) {
        add_head(u);
      } else {
        // vanilla: one dense over the whole flattened map
        g.add_stage("Flatten", std::make_unique<Flatten>());
        g.add_stage("FFNN_0", std::make_unique<DenseLayer>(
                                  dense(g.stages().back().output.at(0), cfg.td_units, Activation::Relu)));
        g.add_stage("FFNN_1", std::make_unique<DenseLayer>(dense(cfg.td_units, cfg.n_classes, Activation::Identity)));
      }
      break;
    }
    case 2: {
      g.set_input_shape({cfg.n_features, 1});
      g.add_stage("LSTM", std::make_unique<LSTMLayer>(1, u, td, Activation::Relu, rng));
      add_head(u);
      break;
    }
    default: {
      add_cnn_block();
      g.add_stage("LSTM", std::make_unique<LSTMLayer>(u, u, td, Activation::Identity, rng));
      add_head(u);
      break;
    }
  }
  return g;
}

inline std::string stage_table_text(const ModelGraph& g) {
  const auto rows = g.stage_table();
  std::size_t w0 = std::string("Network").size(), w1 = std::string("Calculation").size();
  for (const auto& r : rows) {
    w0 = std::max(w0, r.network.size());
    w1 = std::max(w1, r.calculation.size());
  }
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - std::min(w, s.size()), ' '); };
  auto group = [](std::size_t n) {
    std::string s = std::to_string(n);
    for (std::size_t i = s.size(); i > 3; i -= 3) s.insert(i - 3, ",");
    return s;
  };
  std::string out = pad("Network", w0) + "  " + pad("Calculation", w1) + "  Trainable parameters\n";
  for (const auto& r : rows) out += pad(r.network, w0) + "  " + pad(r.calculation, w1) + "  " + group(r.parameters) + "\n";
  out += pad("Total", w0) + "  " + pad("", w1) + "  " + group(g.parameter_count()) + "\n";
  return out;
}

inline Shape input_shape_for(const ModelConfig& cfg) {
  if (uses_frames(cfg.variant)) {
    const FactorPair fp = cfg.frame_shape();
    return {fp.rows, fp.cols};
  }
  return {cfg.n_features, 1};
}

// Packs scaled flows into the input layout of cfg's variant: [M, R, C]
// frames for Models 1/3 and [M, N, 1] sequences for Model 2.
inline Tensor shape_inputs(const ModelConfig& cfg, const Dataset& scaled) {
  if (scaled.n_features() != cfg.n_features) {
    throw ShapeError("model expects " + std::to_string(cfg.n_features) + " features, dataset has " +
                     std::to_string(scaled.n_features()));
  }
  FrameStream fs = frames_from_flows(scaled, cfg.frame_shape());
  if (uses_frames(cfg.variant)) return std::move(fs.frames);
  return std::move(fs.frames).reshaped({scaled.size(), cfg.n_features, 1});
}

// Rows [begin, end) of a batched tensor.
inline Tensor batch_rows(const Tensor& all, std::size_t begin, std::size_t end) {
  Shape s = all.shape();
  const std::size_t stride = element_count(s) / s[0];
  s[0] = end - begin;
  auto src = all.data();
  return Tensor(s, std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                       src.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

inline Tensor gather_rows(const Tensor& all, const std::vector<std::size_t>& idx) {
  Shape s = all.shape();
  const std::size_t stride = element_count(s) / s[0];
  s[0] = idx.size();
  Tensor out(s);
  auto dst = out.data();
  auto src = all.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[i] * stride), stride,
                dst.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

// Row-wise softmax probabilities and argmax classes (lowest index on ties).
inline PredictResult predict_from_logits(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("logits must be [batch, classes], got " + to_string(logits.shape()));
  PredictResult r;
  r.probs = Tensor(logits.shape());
  const std::size_t b = logits.extent(0), c = logits.extent(1);
  auto in = logits.data();
  auto out = r.probs.data();
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    double mx = in[i * c];
    for (std::size_t k = 1; k < c; ++k) {
      if (in[i * c + k] > mx) {
        mx = in[i * c + k];
        best = k;
      }
    }
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += out[i * c + k] = std::exp(in[i * c + k] - mx);
    for (std::size_t k = 0; k < c; ++k) out[i * c + k] /= z;
    r.classes.push_back(static_cast<int>(best));
  }
  return r;
}

inline PredictResult predict(ModelGraph& g, const Tensor& x) {
  return predict_from_logits(g.forward(x, Mode::Infer));
}

inline Tensor extract_holistic_features(ModelGraph& g, const Tensor& x) { return g.holistic_features(x); }

}  // namespace tdntc

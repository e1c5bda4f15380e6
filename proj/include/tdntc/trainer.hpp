#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdntc/datapipe.hpp"
#include "tdntc/metrics.hpp"
#include "tdntc/models.hpp"

namespace tdntc {

enum class OptimizerKind { Sgd, Adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  std::size_t patience = 5;  // 0 disables early stopping
  std::size_t trials = 5;
  double lr_jitter = 0.0;  // per-trial multiplicative spread, e.g. 0.2 -> lr * U(0.8, 1.2)

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch < 2) throw ConfigError("batch must be at least 2 (batch normalisation needs two samples)");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be finite and >= 0");
    if (trials < 1) throw ConfigError("trials must be at least 1");
    if (lr_jitter < 0.0 || lr_jitter >= 1.0) throw ConfigError("lr jitter must lie in [0, 1)");
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},         {"batch", t.batch},       {"learning_rate", t.learning_rate},
          {"optimizer", to_string(t.optimizer)}, {"beta1", t.beta1}, {"beta2", t.beta2},
          {"epsilon", t.epsilon},       {"seed", t.seed},         {"patience", t.patience},
          {"trials", t.trials},         {"lr_jitter", t.lr_jitter}};
}

// ---- prepared data -------------------------------------------------------------------

struct SplitTensors {
  Tensor x;  // batched input in the variant's layout
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
};

struct PreparedData {
  SplitTensors train;
  SplitTensors val;
  SplitTensors test;
  ScalerState scaler;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
};

// Split (stratified, seeded), fit min-max on the training rows only, scale
// every split and pack inputs for cfg's variant.
inline PreparedData prepare_data(const Dataset& ds, const ModelConfig& cfg, std::uint64_t split_seed) {
  ds.validate();
  const SplitIndices idx = stratified_split(ds, split_seed);
  const Dataset train = ds.subset(idx.train);
  PreparedData out;
  out.scaler = minmax_fit(train);
  out.class_names = ds.class_names;
  out.feature_names = ds.feature_names;
  auto pack = [&](const std::vector<std::size_t>& rows) {
    SplitTensors s;
    if (rows.empty()) return s;  // tiny classes can leave validation empty
    const Dataset part = minmax_apply(out.scaler, ds.subset(rows));
    s.x = shape_inputs(cfg, part);
    s.y = part.labels();
    return s;
  };
  out.train = pack(idx.train);
  out.val = pack(idx.val);
  out.test = pack(idx.test);
  return out;
}

// Scaled inputs for a dataset that was not part of training (evaluate path).
inline SplitTensors prepare_eval(const Dataset& ds, const ModelConfig& cfg, const ScalerState& scaler) {
  SplitTensors s;
  const Dataset scaled = minmax_apply(scaler, ds);
  s.x = shape_inputs(cfg, scaled);
  s.y = scaled.labels();
  return s;
}

// ---- optimizers ------------------------------------------------------------------------

class Optimizer {
 public:
  Optimizer(std::vector<Param*> params, const TrainConfig& cfg, double lr)
      : params_(std::move(params)), cfg_(cfg), lr_(lr) {
    if (cfg.optimizer == OptimizerKind::Adam) {
      for (auto* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
      }
    }
  }

  void step() {
    ++t_;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (auto* p : params_) {
        auto w = p->value.data();
        auto g = p->grad.data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
      }
      return;
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto w = params_[k]->value.data();
      auto g = params_[k]->grad.data();
      auto m = m_[k].data();
      auto v = v_[k].data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  TrainConfig cfg_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// ---- training ----------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 when there was no validation split
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
  double seconds = 0.0;
  double learning_rate = 0.0;
};

inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& e : h.epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_acc) << ','
        << (std::isnan(e.val_loss) ? "" : format_double(e.val_loss)) << ','
        << (std::isnan(e.val_acc) ? "" : format_double(e.val_acc)) << '\n';
  }
}

// Contiguous batch boundaries over n samples. A trailing single sample joins
// the previous batch (batch normalisation needs two rows).
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline LossAccuracy evaluate_loss(ModelGraph& g, const SplitTensors& split, std::size_t batch = 256) {
  if (split.size() == 0) throw DataError("cannot evaluate an empty split");
  double loss = 0.0;
  std::size_t correct = 0;
  for (auto [b, e] : batch_ranges(split.size(), batch)) {
    const Tensor logits = g.forward(batch_rows(split.x, b, e), Mode::Infer);
    const std::span<const int> labels(split.y.data() + b, e - b);
    loss += softmax_cross_entropy_batch(logits, labels).loss * static_cast<double>(e - b);
    const auto pred = predict_from_logits(logits).classes;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  }
  const double n = static_cast<double>(split.size());
  return {loss / n, static_cast<double>(correct) / n};
}

namespace detail {

struct Snapshot {
  std::vector<Tensor> params;
  std::vector<Tensor> buffers;

  static Snapshot take(ModelGraph& g) {
    Snapshot s;
    for (auto* p : g.parameters()) s.params.push_back(p->value);
    for (auto& [_, t] : g.named_buffers()) s.buffers.push_back(*t);
    return s;
  }

  void restore(ModelGraph& g) const {
    auto ps = g.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = params[i];
    auto bs = g.named_buffers();
    for (std::size_t i = 0; i < bs.size(); ++i) *bs[i].second = buffers[i];
  }
};

}  // namespace detail

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training with seeded shuffling. When a validation split is
// present, the parameters from the epoch with the lowest validation loss are
// restored at the end; patience > 0 also stops after that many epochs
// without improvement.
inline TrainHistory train(ModelGraph& g, const SplitTensors& train_split, const SplitTensors& val_split,
                          const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_split.size() < 2) throw DataError("training split needs at least 2 samples");
  if (train_split.x.extent(0) != train_split.size()) throw ShapeError("training inputs and labels disagree in length");
  const auto start = std::chrono::steady_clock::now();

  TrainHistory h;
  h.learning_rate = cfg.learning_rate;
  Rng rng(cfg.seed);
  Optimizer opt(g.parameters(), cfg, cfg.learning_rate);
  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool has_val = val_split.size() > 0;
  detail::Snapshot best;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (auto [b, e] : batch_ranges(order.size(), cfg.batch)) {
      ++batch_no;
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(b),
                                          order.begin() + static_cast<std::ptrdiff_t>(e));
      std::vector<int> labels;
      labels.reserve(rows.size());
      for (auto r : rows) labels.push_back(train_split.y[r]);
      g.zero_grad();
      const Tensor logits = g.forward(gather_rows(train_split.x, rows), Mode::Train);
      const auto loss = softmax_cross_entropy_batch(logits, labels);
      if (!std::isfinite(loss.loss)) {
        throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_no));
      }
      g.backward(loss.grad);
      opt.step();
      loss_sum += loss.loss * static_cast<double>(rows.size());
      const auto pred = predict_from_logits(logits).classes;
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    if (has_val) {
      const auto v = evaluate_loss(g, val_split);
      rec.val_loss = v.loss;
      rec.val_acc = v.accuracy;
      if (!std::isfinite(v.loss)) throw DivergenceError("validation loss became non-finite at epoch " + std::to_string(epoch));
      if (v.loss < h.best_val_loss) {
        h.best_val_loss = v.loss;
        h.best_epoch = epoch;
        best = detail::Snapshot::take(g);
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    h.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (has_val && cfg.patience > 0 && since_best >= cfg.patience) {
      h.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  if (has_val) best.restore(g);
  h.steps = opt.steps();
  h.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return h;
}

// ---- evaluation -----------------------------------------------------------------------------

struct Evaluation {
  ConfusionMatrix confusion;
  ClassReport report;
  std::vector<int> predictions;
};

inline Evaluation evaluate(ModelGraph& g, const SplitTensors& split, std::size_t batch = 256) {
  if (split.size() == 0) throw DataError("cannot evaluate an empty split");
  std::vector<int> pred;
  pred.reserve(split.size());
  for (auto [b, e] : batch_ranges(split.size(), batch)) {
    const auto r = predict(g, batch_rows(split.x, b, e));
    pred.insert(pred.end(), r.classes.begin(), r.classes.end());
  }
  auto cm = confusion_matrix(split.y, pred, g.config().n_classes);
  auto report = classification_metrics(cm);
  return {std::move(cm), std::move(report), std::move(pred)};
}

// ---- trials ----------------------------------------------------------------------------------

struct TrialRow {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double minutes = 0.0;
};

struct TrialTable {
  std::vector<TrialRow> rows;
  TrialRow average;
  std::vector<TrainHistory> histories;
};

using TrialCallback =
    std::function<void(std::size_t trial, const TrialRow&, const TrainHistory&, ModelGraph&)>;

// Trial k (0-based) initialises and shuffles with seed cfg.seed + k; the
// reported precision/recall/F1 are support-weighted averages on the test split.
inline TrialTable run_trials(const ModelConfig& model_cfg, const PreparedData& data, const TrainConfig& cfg,
                             const TrialCallback& on_trial = {}) {
  cfg.validate();
  TrialTable table;
  Rng jitter(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  for (std::size_t k = 0; k < cfg.trials; ++k) {
    ModelConfig mc = model_cfg;
    mc.seed = model_cfg.seed + k;
    TrainConfig tc = cfg;
    tc.seed = cfg.seed + k;
    if (cfg.lr_jitter > 0.0) tc.learning_rate *= jitter.uniform(1.0 - cfg.lr_jitter, 1.0 + cfg.lr_jitter);
    auto g = build_model(mc);
    auto hist = train(g, data.train, data.val, tc);
    const auto ev = evaluate(g, data.test);
    TrialRow row{ev.report.accuracy, ev.report.weighted.precision, ev.report.weighted.recall,
                 ev.report.weighted.f1, hist.seconds / 60.0};
    table.rows.push_back(row);
    if (on_trial) on_trial(k, row, hist, g);
    table.histories.push_back(std::move(hist));
  }
  const double n = static_cast<double>(table.rows.size());
  for (const auto& r : table.rows) {
    table.average.accuracy += r.accuracy / n;
    table.average.precision += r.precision / n;
    table.average.recall += r.recall / n;
    table.average.f1 += r.f1 / n;
    table.average.minutes += r.minutes / n;
  }
  return table;
}

inline std::string trial_table_text(const TrialTable& t) {
  auto cell = [](const char* fmt, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return std::string(buf);
  };
  auto line = [&](const std::string& label, const TrialRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-6s| %-9s| %-10s| %-7s| %-9s| %s\n", label.c_str(),
                  cell("%.3f", r.accuracy).c_str(), cell("%.3f", r.precision).c_str(),
                  cell("%.3f", r.recall).c_str(), cell("%.3f", r.f1).c_str(), cell("%.2f", r.minutes).c_str());
    return std::string(buf);
  };
  std::string out = "Trial | Accuracy | Precision | Recall | F1-score | Time (min)\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) out += line(std::to_string(i + 1), t.rows[i]);
  out += line("Avg.", t.average);
  return out;
}

}  // namespace tdntc

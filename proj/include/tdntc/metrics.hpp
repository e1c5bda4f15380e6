#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdntc/error.hpp"

namespace tdntc {

// Rows are truth, columns are prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw ShapeError("confusion matrix needs at least one class");
  }

  std::size_t classes() const { return classes_; }
  std::uint64_t operator()(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }

  void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1) {
    if (truth >= classes_ || pred >= classes_) {
      throw ShapeError("label pair (" + std::to_string(truth) + ", " + std::to_string(pred) +
                       ") outside " + std::to_string(classes_) + " classes");
    }
    counts_[truth * classes_ + pred] += n;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
  }
  std::uint64_t row_sum(std::size_t c) const {
    std::uint64_t t = 0;
    for (std::size_t p = 0; p < classes_; ++p) t += (*this)(c, p);
    return t;
  }
  std::uint64_t col_sum(std::size_t c) const {
    std::uint64_t t = 0;
    for (std::size_t r = 0; r < classes_; ++r) t += (*this)(r, c);
    return t;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                        std::size_t classes) {
  if (y_true.size() != y_pred.size()) {
    throw ShapeError("y_true has " + std::to_string(y_true.size()) + " labels, y_pred has " +
                     std::to_string(y_pred.size()));
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_pred[i] < 0) throw ShapeError("negative class index at position " + std::to_string(i));
    cm.add(static_cast<std::size_t>(y_true[i]), static_cast<std::size_t>(y_pred[i]));
  }
  return cm;
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
  bool undefined = false;  // precision or recall hit 0/0 and was set to 0
};

struct Averages {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  Averages weighted;
  Averages macro;
  std::uint64_t total = 0;
};

inline ClassReport classification_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw ShapeError("confusion matrix is empty");
  auto ratio = [](double num, double den, bool& undefined) {
    if (den == 0.0) {
      undefined = true;
      return 0.0;
    }
    return num / den;
  };
  ClassReport r;
  r.total = total;
  std::uint64_t trace = 0;
  const std::size_t k = cm.classes();
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(cm(c, c));
    const double fp = static_cast<double>(cm.col_sum(c)) - tp;
    const double fn = static_cast<double>(cm.row_sum(c)) - tp;
    ClassMetrics m;
    m.support = cm.row_sum(c);
    m.precision = ratio(tp, tp + fp, m.undefined);
    m.recall = ratio(tp, tp + fn, m.undefined);
    const double pr = m.precision + m.recall;
    m.f1 = pr > 0.0 ? 2.0 * m.precision * m.recall / pr : 0.0;
    trace += cm(c, c);
    r.per_class.push_back(m);
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  for (const auto& m : r.per_class) {
    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    r.weighted.precision += w * m.precision;
    r.weighted.recall += w * m.recall;
    r.weighted.f1 += w * m.f1;
    r.macro.precision += m.precision;
    r.macro.recall += m.recall;
    r.macro.f1 += m.f1;
  }
  r.macro.precision /= static_cast<double>(k);
  r.macro.recall /= static_cast<double>(k);
  r.macro.f1 /= static_cast<double>(k);
  return r;
}

namespace detail {

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

inline std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace detail

// Text table: one row per class in encoder order, then accuracy, macro and
// weighted rows. Rows containing a 0/0 rate are marked with '*'.
inline std::string per_class_report(const ClassReport& report, const std::vector<std::string>& class_names) {
  using detail::fixed3;
  using detail::pad_left;
  using detail::pad_right;
  if (class_names.size() != report.per_class.size()) {
    throw ShapeError("report has " + std::to_string(report.per_class.size()) + " classes but " +
                     std::to_string(class_names.size()) + " names were given");
  }
  std::size_t name_w = std::string("weighted avg").size();
  for (const auto& n : class_names) name_w = std::max(name_w, n.size() + 1);
  const std::size_t col = 10;

  std::string out = pad_right("", name_w) + pad_left("precision", col) + pad_left("recall", col) +
                    pad_left("f1-score", col) + pad_left("support", col) + "\n\n";
  bool any_undefined = false;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const auto& m = report.per_class[c];
    any_undefined = any_undefined || m.undefined;
    out += pad_right(class_names[c] + (m.undefined ? "*" : ""), name_w) + pad_left(fixed3(m.precision), col) +
           pad_left(fixed3(m.recall), col) + pad_left(fixed3(m.f1), col) +
           pad_left(std::to_string(m.support), col) + "\n";
  }
  const std::string total = std::to_string(report.total);
  out += "\n";
  out += pad_right("accuracy", name_w) + pad_left("", 2 * col) + pad_left(fixed3(report.accuracy), col) +
         pad_left(total, col) + "\n";
  auto avg_row = [&](const char* label, const Averages& a) {
    return pad_right(label, name_w) + pad_left(fixed3(a.precision), col) + pad_left(fixed3(a.recall), col) +
           pad_left(fixed3(a.f1), col) + pad_left(total, col) + "\n";
  };
  out += avg_row("macro avg", report.macro);
  out += avg_row("weighted avg", report.weighted);
  if (any_undefined) out += "\n* 0/0 rate reported as 0\n";
  return out;
}

inline nlohmann::json report_json(const ClassReport& report, const std::vector<std::string>& class_names) {
  if (class_names.size() != report.per_class.size()) {
    throw ShapeError("report has " + std::to_string(report.per_class.size()) + " classes but " +
                     std::to_string(class_names.size()) + " names were given");
  }
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const auto& m = report.per_class[c];
    classes.push_back({{"name", class_names[c]},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"undefined_rate", m.undefined}});
  }
  auto avg = [](const Averages& a) {
    return nlohmann::json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
  };
  return {{"accuracy", report.accuracy},
          {"samples", report.total},
          {"weighted", avg(report.weighted)},
          {"macro", avg(report.macro)},
          {"classes", std::move(classes)}};
}

}  // namespace tdntc

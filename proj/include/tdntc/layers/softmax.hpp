#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tdntc/tensor.hpp"

namespace tdntc {

struct SoftmaxLoss {
  Tensor probs;
  double loss;
  Tensor grad;  // d loss / d logits = probs - one_hot(true_class)
};

inline Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1) throw ShapeError("softmax expects a vector, got " + to_string(logits.shape()));
  Tensor p = logits;
  const double mx = *std::max_element(p.data().begin(), p.data().end());
  double sum = 0.0;
  for (auto& v : p.data()) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p.data()) v /= sum;
  return p;
}

inline SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::size_t true_class) {
  if (logits.rank() != 1 || logits.size() < 2) {
    throw ShapeError("softmax_cross_entropy expects a vector of at least 2 logits, got " +
                     to_string(logits.shape()));
  }
  if (true_class >= logits.size()) {
    throw ShapeError("class index " + std::to_string(true_class) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  }
  // log-sum-exp with the max subtracted keeps large logits finite
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  double sum = 0.0;
  for (auto v : logits.data()) sum += std::exp(v - mx);
  const double log_z = mx + std::log(sum);
  Tensor probs(logits.shape());
  for (std::size_t c = 0; c < logits.size(); ++c) probs[c] = std::exp(logits[c] - log_z);
  Tensor grad = probs;
  grad[true_class] -= 1.0;
  return {std::move(probs), log_z - logits[true_class], std::move(grad)};
}

// Batched form: logits [batch, classes]. Loss is the batch mean and the
// gradient is scaled accordingly.
inline SoftmaxLoss softmax_cross_entropy_batch(const Tensor& logits,
                                               std::span<const int> labels) {
  if (logits.rank() != 2 || logits.extent(0) != labels.size()) {
    throw ShapeError("batched softmax_cross_entropy expects [batch,classes] with one label per row");
  }
  const std::size_t batch = logits.extent(0);
  const std::size_t classes = logits.extent(1);
  Tensor probs(logits.shape());
  Tensor grad(logits.shape());
  double total = 0.0;
  Tensor row({classes});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(logits.data().begin() + b * classes, classes, row.data().begin());
    auto one = softmax_cross_entropy(row, static_cast<std::size_t>(labels[b]));
    total += one.loss;
    for (std::size_t c = 0; c < classes; ++c) {
      probs.at(b, c) = one.probs[c];
      grad.at(b, c) = one.grad[c] / static_cast<double>(batch);
    }
  }
  return {std::move(probs), total / static_cast<double>(batch), std::move(grad)};
}

}  // namespace tdntc

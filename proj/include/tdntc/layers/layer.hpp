#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tdntc/random.hpp"
#include "tdntc/tensor.hpp"

namespace tdntc {

enum class Mode { Train, Infer };

enum class Activation { Identity, Relu, Softmax };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

// A learnable tensor and its accumulated gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

// Non-learnable persistent state (e.g. batchnorm running statistics).
struct Buffer {
  std::string name;
  Tensor* value;
};

// Every layer consumes and produces tensors with a leading batch axis.
// forward() caches what backward() needs; backward() accumulates parameter
// gradients and returns the gradient w.r.t. the forward input.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;

  // Per-sample output shape for a per-sample input shape (batch axis excluded).
  virtual Shape output_shape(const Shape& input) const = 0;

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual std::vector<Param*> parameters() { return {}; }
  virtual std::vector<Buffer> buffers() { return {}; }

  // Trainable parameter count from the layer's closed-form formula, and the
  // human-readable form of that formula.
  virtual std::size_t parameter_count() const { return 0; }
  virtual std::string calculation() const { return "-"; }

  void zero_grad() {
    for (auto* p : parameters()) p->grad.fill(0.0);
  }
};

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = glorot_limit(fan_in, fan_out);
  for (auto& v : t.data()) v = rng.uniform(-limit, limit);
}

inline Shape batch_shape(std::size_t batch, const Shape& sample) {
  Shape s;
  s.reserve(sample.size() + 1);
  s.push_back(batch);
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

inline Shape sample_shape(const Tensor& batched) {
  return Shape(batched.shape().begin() + 1, batched.shape().end());
}

}  // namespace tdntc

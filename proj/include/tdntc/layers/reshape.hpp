#pragma once

#include <string>

#include "tdntc/layers/layer.hpp"

namespace tdntc {

// [batch, channels, rows, cols] -> [batch, rows*cols, channels]: each pooled
// spatial position becomes one time step whose features are the channel
// activations at that position.
class SpatialToSequence : public Layer {
 public:
  std::string kind() const override { return "reshape"; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 3) {
      throw ShapeError("spatial-to-sequence expects [channels,rows,cols], got " + to_string(input));
    }
    return {input[1] * input[2], input[0]};
  }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 4) {
      throw ShapeError("spatial-to-sequence expects [batch,channels,rows,cols], got " +
                       to_string(x.shape()));
    }
    in_shape_ = x.shape();
    const std::size_t batch = x.extent(0);
    const std::size_t ch = x.extent(1);
    const std::size_t pos = x.extent(2) * x.extent(3);
    Tensor y({batch, pos, ch});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t p = 0; p < pos; ++p) y[(b * pos + p) * ch + c] = x[(b * ch + c) * pos + p];
      }
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t batch = in_shape_[0];
    const std::size_t ch = in_shape_[1];
    const std::size_t pos = in_shape_[2] * in_shape_[3];
    if (grad_out.shape() != Shape{batch, pos, ch}) {
      throw ShapeError("spatial-to-sequence backward gradient shape mismatch: " +
                       to_string(grad_out.shape()));
    }
    Tensor dx(in_shape_);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t p = 0; p < pos; ++p) dx[(b * ch + c) * pos + p] = grad_out[(b * pos + p) * ch + c];
      }
    }
    return dx;
  }

 private:
  Shape in_shape_;
};

// [batch, ...] -> [batch, prod(...)]
class Flatten : public Layer {
 public:
  std::string kind() const override { return "flatten"; }

  Shape output_shape(const Shape& input) const override { return {element_count(input)}; }

  Tensor forward(const Tensor& x, Mode) override {
    in_shape_ = x.shape();
    return x.reshaped({x.extent(0), x.size() / x.extent(0)});
  }

  Tensor backward(const Tensor& grad_out) override { return grad_out.reshaped(in_shape_); }

 private:
  Shape in_shape_;
};

}  // namespace tdntc

#pragma once

#include <string>
#include <vector>

#include "tdntc/layers/layer.hpp"

namespace tdntc {

enum class PoolPadding {
  // Extents must be even; odd extents are rejected.
  Valid,
  // A trailing odd row/column forms a partial window (ceil division).
  Same,
};

// 2x2 max pooling with stride 2 over the two trailing axes. All leading axes
// (batch, channels) are treated as independent planes.
class MaxPool2DLayer : public Layer {
 public:
  explicit MaxPool2DLayer(PoolPadding padding = PoolPadding::Valid) : padding_(padding) {}

  std::string kind() const override { return "maxpool2d"; }
  PoolPadding padding() const { return padding_; }

  std::size_t pooled_extent(std::size_t n) const {
    if (padding_ == PoolPadding::Valid) {
      if (n % 2 != 0) {
        throw GeometryError("maxpool 2x2 requires even spatial extents, got " + std::to_string(n));
      }
      return n / 2;
    }
    return (n + 1) / 2;
  }

  Shape output_shape(const Shape& input) const override {
    if (input.size() < 2) throw ShapeError("maxpool expects at least 2 axes, got " + to_string(input));
    Shape out = input;
    out[out.size() - 2] = pooled_extent(input[input.size() - 2]);
    out[out.size() - 1] = pooled_extent(input[input.size() - 1]);
    return out;
  }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() < 3) {
      throw ShapeError("maxpool expects [batch,...,rows,cols], got " + to_string(x.shape()));
    }
    in_shape_ = x.shape();
    const std::size_t h = x.extent(x.rank() - 2);
    const std::size_t w = x.extent(x.rank() - 1);
    const std::size_t oh = pooled_extent(h);
    const std::size_t ow = pooled_extent(w);
    const std::size_t planes = x.size() / (h * w);
    Shape out_shape = in_shape_;
    out_shape[out_shape.size() - 2] = oh;
    out_shape[out_shape.size() - 1] = ow;
    Tensor y(out_shape);
    argmax_.assign(y.size(), 0);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      const double* in = x.data().data() + pl * h * w;
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          std::size_t best = (2 * i) * w + 2 * j;
          for (std::size_t di = 0; di < 2; ++di) {
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const std::size_t r = 2 * i + di;
              const std::size_t c = 2 * j + dj;
              if (r >= h || c >= w) continue;
              // strict '>' keeps the first cell in row-major order on ties
              if (in[r * w + c] > in[best]) best = r * w + c;
            }
          }
          const std::size_t o = pl * oh * ow + i * ow + j;
          y[o] = in[best];
          argmax_[o] = pl * h * w + best;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    if (grad_out.size() != argmax_.size()) {
      throw ShapeError("maxpool backward gradient shape mismatch: " + to_string(grad_out.shape()));
    }
    Tensor dx(in_shape_);
    for (std::size_t o = 0; o < argmax_.size(); ++o) dx[argmax_[o]] += grad_out[o];
    return dx;
  }

 private:
  PoolPadding padding_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// Strict 2x2/stride-2 pooling of a rank-2 (or higher) tensor without a
// batch axis.
inline Tensor maxpool2d(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("maxpool2d expects at least 2 axes, got " + to_string(x.shape()));
  MaxPool2DLayer layer(PoolPadding::Valid);
  Tensor y = layer.forward(x.reshaped(batch_shape(1, x.shape())), Mode::Infer);
  return std::move(y).reshaped(sample_shape(y));
}

}  // namespace tdntc

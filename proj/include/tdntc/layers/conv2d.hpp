#pragma once

#include <string>
#include <utility>

#include "tdntc/layers/layer.hpp"

namespace tdntc {

struct ConvGeometry {
  std::size_t rows;
  std::size_t cols;

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

// Output extents of a strided, zero-padded convolution:
//   rows = (R - P + 2G) / Sx + 1,  cols = (C - Q + 2G) / Sy + 1
// Both quotients must be exact.
inline ConvGeometry conv2d_output_dims(std::size_t rows, std::size_t cols, std::size_t kernel_rows,
                                       std::size_t kernel_cols, std::size_t padding,
                                       std::size_t stride_x, std::size_t stride_y) {
  if (rows == 0 || cols == 0 || kernel_rows == 0 || kernel_cols == 0 || stride_x == 0 ||
      stride_y == 0) {
    throw GeometryError("convolution extents and strides must be positive");
  }
  auto axis = [](std::size_t in, std::size_t k, std::size_t g, std::size_t s,
                 const char* name) -> std::size_t {
    const std::size_t padded = in + 2 * g;
    if (padded < k) {
      throw GeometryError(std::string("kernel ") + name + " extent " + std::to_string(k) +
                          " exceeds padded input extent " + std::to_string(padded));
    }
    if ((padded - k) % s != 0) {
      throw GeometryError(std::string("non-integral convolution ") + name + " extent: (" +
                          std::to_string(in) + " - " + std::to_string(k) + " + 2*" +
                          std::to_string(g) + ") / " + std::to_string(s));
    }
    return (padded - k) / s + 1;
  };
  return {axis(rows, kernel_rows, padding, stride_x, "row"),
          axis(cols, kernel_cols, padding, stride_y, "column")};
}

struct Conv2DSpec {
  std::size_t units = 1;
  std::size_t kernel_rows = 3;
  std::size_t kernel_cols = 3;
  std::size_t stride_x = 1;
  std::size_t stride_y = 1;
  std::size_t padding = 0;
};

// Single-input-channel 2-D cross-correlation with U kernels of P x Q.
// Input [batch, R, C] -> output [batch, U, Yrow, Ycol].
class Conv2DLayer : public Layer {
 public:
  explicit Conv2DLayer(Conv2DSpec spec)
      : spec_(spec),
        kernels_("kernels", Tensor({spec.units, spec.kernel_rows, spec.kernel_cols})),
        biases_("biases", Tensor({spec.units})) {}

  Conv2DLayer(Conv2DSpec spec, Rng& rng) : Conv2DLayer(spec) {
    const std::size_t area = spec.kernel_rows * spec.kernel_cols;
    glorot_fill(kernels_.value, area, area * spec.units, rng);
  }

  std::string kind() const override { return "conv2d"; }
  const Conv2DSpec& spec() const { return spec_; }
  Param& kernels() { return kernels_; }
  Param& biases() { return biases_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 2) {
      throw ShapeError("conv2d expects a single-channel [rows,cols] frame, got " + to_string(input));
    }
    auto g = geometry(input[0], input[1]);
    return {spec_.units, g.rows, g.cols};
  }

  ConvGeometry geometry(std::size_t rows, std::size_t cols) const {
    return conv2d_output_dims(rows, cols, spec_.kernel_rows, spec_.kernel_cols, spec_.padding,
                              spec_.stride_x, spec_.stride_y);
  }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 3) {
      throw ShapeError("conv2d expects [batch,rows,cols], got " + to_string(x.shape()));
    }
    batch_ = x.extent(0);
    in_rows_ = x.extent(1);
    in_cols_ = x.extent(2);
    geom_ = geometry(in_rows_, in_cols_);
    const std::size_t positions = geom_.rows * geom_.cols;
    const std::size_t area = spec_.kernel_rows * spec_.kernel_cols;
    const std::size_t units = spec_.units;

    // patches_[b] is [positions, area]
    patches_ = Tensor({batch_, positions, area});
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t i = 0; i < geom_.rows; ++i) {
        for (std::size_t j = 0; j < geom_.cols; ++j) {
          double* patch = patches_.data().data() + ((b * positions) + i * geom_.cols + j) * area;
          for (std::size_t p = 0; p < spec_.kernel_rows; ++p) {
            for (std::size_t q = 0; q < spec_.kernel_cols; ++q) {
              patch[p * spec_.kernel_cols + q] = padded_at(x, b, i * spec_.stride_x + p,
                                                           j * spec_.stride_y + q);
            }
          }
        }
      }
    }

    Tensor y({batch_, units, geom_.rows, geom_.cols});
    for (std::size_t b = 0; b < batch_; ++b) {
      double* out = y.data().data() + b * units * positions;
      kernel::gemm_nt(units, positions, area, kernels_.value.data().data(),
                      patches_.data().data() + b * positions * area, out, false);
      for (std::size_t u = 0; u < units; ++u) {
        for (std::size_t k = 0; k < positions; ++k) out[u * positions + k] += biases_.value[u];
      }
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t positions = geom_.rows * geom_.cols;
    const std::size_t area = spec_.kernel_rows * spec_.kernel_cols;
    const std::size_t units = spec_.units;
    if (grad_out.shape() != Shape{batch_, units, geom_.rows, geom_.cols}) {
      throw ShapeError("conv2d backward gradient shape mismatch: " + to_string(grad_out.shape()));
    }
    Tensor dx({batch_, in_rows_, in_cols_});
    Tensor dpatch({positions, area});
    for (std::size_t b = 0; b < batch_; ++b) {
      const double* dy = grad_out.data().data() + b * units * positions;
      const double* patch = patches_.data().data() + b * positions * area;
      kernel::gemm_nn(units, area, positions, dy, patch, kernels_.grad.data().data(), true);
      for (std::size_t u = 0; u < units; ++u) {
        double s = 0.0;
        for (std::size_t k = 0; k < positions; ++k) s += dy[u * positions + k];
        biases_.grad[u] += s;
      }
      kernel::gemm_tn(positions, area, units, dy, kernels_.value.data().data(),
                      dpatch.data().data(), false);
      for (std::size_t i = 0; i < geom_.rows; ++i) {
        for (std::size_t j = 0; j < geom_.cols; ++j) {
          const double* dp = dpatch.data().data() + (i * geom_.cols + j) * area;
          for (std::size_t p = 0; p < spec_.kernel_rows; ++p) {
            for (std::size_t q = 0; q < spec_.kernel_cols; ++q) {
              const long r = static_cast<long>(i * spec_.stride_x + p) - static_cast<long>(spec_.padding);
              const long c = static_cast<long>(j * spec_.stride_y + q) - static_cast<long>(spec_.padding);
              if (r < 0 || c < 0 || r >= static_cast<long>(in_rows_) || c >= static_cast<long>(in_cols_)) {
                continue;
              }
              dx.at(b, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) +=
                  dp[p * spec_.kernel_cols + q];
            }
          }
        }
      }
    }
    return dx;
  }

  std::vector<Param*> parameters() override { return {&kernels_, &biases_}; }

  std::size_t parameter_count() const override {
    return (spec_.kernel_rows * spec_.kernel_cols * 1 + 1) * spec_.units;
  }

  std::string calculation() const override {
    return "(" + std::to_string(spec_.kernel_rows) + "x" + std::to_string(spec_.kernel_cols) +
           "x1+1)x" + std::to_string(spec_.units);
  }

 private:
  double padded_at(const Tensor& x, std::size_t b, std::size_t pr, std::size_t pc) const {
    if (pr < spec_.padding || pc < spec_.padding) return 0.0;
    const std::size_t r = pr - spec_.padding;
    const std::size_t c = pc - spec_.padding;
    if (r >= in_rows_ || c >= in_cols_) return 0.0;
    return x.at(b, r, c);
  }

  Conv2DSpec spec_;
  Param kernels_;
  Param biases_;
  Tensor patches_;
  ConvGeometry geom_{0, 0};
  std::size_t batch_ = 0;
  std::size_t in_rows_ = 0;
  std::size_t in_cols_ = 0;
};

// Single-frame convenience: x of shape [R, C] -> [U, Yrow, Ycol].
inline Tensor conv2d(Conv2DLayer& layer, const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("conv2d expects an [R,C] frame, got " + to_string(x.shape()));
  Tensor y = layer.forward(x.reshaped({1, x.extent(0), x.extent(1)}), Mode::Infer);
  return std::move(y).reshaped(sample_shape(y));
}

}  // namespace tdntc

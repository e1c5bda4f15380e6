#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "tdntc/layers/layer.hpp"

namespace tdntc {

namespace detail {

inline void softmax_rows(std::span<double> v, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = v.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
  }
}

}  // namespace detail

// Fully connected layer: y = act(W x + b), W stored as [out, in].
class DenseLayer : public Layer {
 public:
  DenseLayer(std::size_t in, std::size_t out, Activation act)
      : in_(in),
        out_(out),
        act_(act),
        weight_("weight", Tensor({out, in})),
        bias_("bias", Tensor({out})) {}

  DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng) : DenseLayer(in, out, act) {
    glorot_fill(weight_.value, in, out, rng);
  }

  std::string kind() const override { return "dense"; }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Activation activation() const { return act_; }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 1 || input[0] != in_) {
      throw ShapeError("dense layer expects input width " + std::to_string(in_) + ", got " +
                       to_string(input));
    }
    return {out_};
  }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 2 || x.extent(1) != in_) {
      throw ShapeError("dense layer expects [batch," + std::to_string(in_) + "], got " +
                       to_string(x.shape()));
    }
    const std::size_t batch = x.extent(0);
    input_ = x;
    Tensor y({batch, out_});
    kernel::gemm_nt(batch, out_, in_, x.data().data(), weight_.value.data().data(), y.data().data(),
                    false);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < out_; ++o) y.at(b, o) += bias_.value[o];
    }
    switch (act_) {
      case Activation::Identity: break;
      case Activation::Relu:
        for (auto& v : y.data()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
        break;
      case Activation::Softmax: detail::softmax_rows(y.data(), batch, out_); break;
    }
    output_ = y;
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t batch = input_.extent(0);
    if (grad_out.shape() != output_.shape()) {
      throw ShapeError("dense backward gradient shape " + to_string(grad_out.shape()) +
                       " does not match output " + to_string(output_.shape()));
    }
    Tensor dz = grad_out;
    switch (act_) {
      case Activation::Identity: break;
      case Activation::Relu:
        for (std::size_t i = 0; i < dz.size(); ++i) {
          if (output_[i] <= 0.0) dz[i] = 0.0;
        }
        break;
      case Activation::Softmax:
        for (std::size_t b = 0; b < batch; ++b) {
          double dot = 0.0;
          for (std::size_t o = 0; o < out_; ++o) dot += grad_out.at(b, o) * output_.at(b, o);
          for (std::size_t o = 0; o < out_; ++o) {
            dz.at(b, o) = output_.at(b, o) * (grad_out.at(b, o) - dot);
          }
        }
        break;
    }
    kernel::gemm_tn(out_, in_, batch, dz.data().data(), input_.data().data(),
                    weight_.grad.data().data(), true);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += dz.at(b, o);
    }
    Tensor dx({batch, in_});
    kernel::gemm_nn(batch, in_, out_, dz.data().data(), weight_.value.data().data(),
                    dx.data().data(), false);
    return dx;
  }

  std::vector<Param*> parameters() override { return {&weight_, &bias_}; }

  std::size_t parameter_count() const override { return in_ * out_ + out_; }

  std::string calculation() const override {
    return std::to_string(in_) + "x" + std::to_string(out_) + "+" + std::to_string(out_);
  }

 private:
  std::size_t in_;
  std::size_t out_;
  Activation act_;
  Param weight_;
  Param bias_;
  Tensor input_;
  Tensor output_;
};

// Single-vector convenience: x of shape [in] -> [out].
inline Tensor dense(DenseLayer& layer, const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("dense expects a vector, got " + to_string(x.shape()));
  Tensor y = layer.forward(x.reshaped({1, x.size()}), Mode::Infer);
  return std::move(y).reshaped({layer.out_features()});
}

}  // namespace tdntc

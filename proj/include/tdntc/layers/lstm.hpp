#pragma once

#include <cmath>
#include <string>

#include "tdntc/layers/layer.hpp"

namespace tdntc {

// Standard four-gate LSTM, zero initial state. Gate blocks in the fused
// weight matrices are ordered input, forget, candidate, output.
//
//   z_t = x_t Wx + h_{t-1} Wh + b            Wx: [S, 4K], Wh: [K, 4K]
//   i, f, o = sigmoid(z_i, z_f, z_o);  g = tanh(z_g)
//   c_t = f * c_{t-1} + i * g;  h_t = o * tanh(c_t)
//
// The output activation is applied to the emitted hidden states only; the
// recurrence always sees raw h_t.
class LSTMLayer : public Layer {
 public:
  LSTMLayer(std::size_t input_size, std::size_t units, bool return_sequences,
            Activation output_activation = Activation::Identity)
      : input_size_(input_size),
        units_(units),
        return_sequences_(return_sequences),
        output_activation_(output_activation),
        wx_("input_weights", Tensor({input_size, 4 * units})),
        wh_("recurrent_weights", Tensor({units, 4 * units})),
        bias_("bias", Tensor({4 * units})) {
    if (output_activation == Activation::Softmax) {
      throw ShapeError("LSTM output activation must be identity or relu");
    }
  }

  LSTMLayer(std::size_t input_size, std::size_t units, bool return_sequences,
            Activation output_activation, Rng& rng)
      : LSTMLayer(input_size, units, return_sequences, output_activation) {
    glorot_fill(wx_.value, input_size, 4 * units, rng);
    glorot_fill(wh_.value, units, 4 * units, rng);
  }

  std::string kind() const override { return "lstm"; }
  std::size_t input_size() const { return input_size_; }
  std::size_t units() const { return units_; }
  bool return_sequences() const { return return_sequences_; }
  Activation output_activation() const { return output_activation_; }

  Param& input_weights() { return wx_; }
  Param& recurrent_weights() { return wh_; }
  Param& bias() { return bias_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 2 || input[1] != input_size_) {
      throw ShapeError("LSTM expects [steps," + std::to_string(input_size_) + "], got " +
                       to_string(input));
    }
    if (return_sequences_) return {input[0], units_};
    return {units_};
  }

  Tensor forward(const Tensor& x, Mode) override { return run(x, return_sequences_); }

  // Forward pass with an explicit return_sequences choice. x: [batch, steps, S].
  Tensor run(const Tensor& x, bool return_sequences) {
    if (x.rank() != 3 || x.extent(2) != input_size_) {
      throw ShapeError("LSTM expects [batch,steps," + std::to_string(input_size_) + "], got " +
                       to_string(x.shape()));
    }
    batch_ = x.extent(0);
    steps_ = x.extent(1);
    emitted_all_ = return_sequences;
    const std::size_t k = units_;
    const std::size_t g4 = 4 * k;

    // time-major copy of the input: [steps, batch, S]
    xt_ = Tensor({steps_, batch_, input_size_});
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t t = 0; t < steps_; ++t) {
        for (std::size_t s = 0; s < input_size_; ++s) xt_.at(t, b, s) = x.at(b, t, s);
      }
    }
    gates_ = Tensor({steps_, batch_, g4});
    cells_ = Tensor({steps_ + 1, batch_, k});  // index 0 holds the zero initial state
    hidden_ = Tensor({steps_ + 1, batch_, k});
    tanh_cells_ = Tensor({steps_, batch_, k});

    for (std::size_t t = 0; t < steps_; ++t) {
      double* z = gates_.data().data() + t * batch_ * g4;
      kernel::gemm_nn(batch_, g4, input_size_, xt_.data().data() + t * batch_ * input_size_,
                      wx_.value.data().data(), z, false);
      kernel::gemm_nn(batch_, g4, k, hidden_.data().data() + t * batch_ * k,
                      wh_.value.data().data(), z, true);
      const double* c_prev = cells_.data().data() + t * batch_ * k;
      double* c_now = cells_.data().data() + (t + 1) * batch_ * k;
      double* h_now = hidden_.data().data() + (t + 1) * batch_ * k;
      double* tc = tanh_cells_.data().data() + t * batch_ * k;
      for (std::size_t b = 0; b < batch_; ++b) {
        double* zb = z + b * g4;
        for (std::size_t u = 0; u < k; ++u) {
          const double i = sigmoid(zb[u] + bias_.value[u]);
          const double f = sigmoid(zb[k + u] + bias_.value[k + u]);
          const double g = std::tanh(zb[2 * k + u] + bias_.value[2 * k + u]);
          const double o = sigmoid(zb[3 * k + u] + bias_.value[3 * k + u]);
          zb[u] = i;
          zb[k + u] = f;
          zb[2 * k + u] = g;
          zb[3 * k + u] = o;
          const double c = f * c_prev[b * k + u] + i * g;
          c_now[b * k + u] = c;
          const double th = std::tanh(c);
          tc[b * k + u] = th;
          h_now[b * k + u] = o * th;
        }
      }
    }

    if (return_sequences) {
      Tensor y({batch_, steps_, k});
      for (std::size_t b = 0; b < batch_; ++b) {
        for (std::size_t t = 0; t < steps_; ++t) {
          for (std::size_t u = 0; u < k; ++u) y.at(b, t, u) = activate(hidden_.at(t + 1, b, u));
        }
      }
      return y;
    }
    Tensor y({batch_, k});
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t u = 0; u < k; ++u) y.at(b, u) = activate(hidden_.at(steps_, b, u));
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t k = units_;
    const std::size_t g4 = 4 * k;
    const Shape expected = emitted_all_ ? Shape{batch_, steps_, k} : Shape{batch_, k};
    if (grad_out.shape() != expected) {
      throw ShapeError("LSTM backward gradient shape " + to_string(grad_out.shape()) +
                       " does not match " + to_string(expected));
    }
    Tensor dx({batch_, steps_, input_size_});
    Tensor dh_next({batch_, k});
    Tensor dc_next({batch_, k});
    Tensor dz({batch_, g4});
    Tensor dxt({batch_, input_size_});

    for (std::size_t step = steps_; step-- > 0;) {
      const double* gates = gates_.data().data() + step * batch_ * g4;
      const double* c_prev = cells_.data().data() + step * batch_ * k;
      const double* tc = tanh_cells_.data().data() + step * batch_ * k;
      const double* h_now = hidden_.data().data() + (step + 1) * batch_ * k;
      for (std::size_t b = 0; b < batch_; ++b) {
        for (std::size_t u = 0; u < k; ++u) {
          double dy = 0.0;
          if (emitted_all_) {
            dy = grad_out.at(b, step, u);
          } else if (step + 1 == steps_) {
            dy = grad_out.at(b, u);
          }
          if (output_activation_ == Activation::Relu && h_now[b * k + u] <= 0.0) dy = 0.0;
          const double dh = dy + dh_next.at(b, u);
          const double i = gates[b * g4 + u];
          const double f = gates[b * g4 + k + u];
          const double g = gates[b * g4 + 2 * k + u];
          const double o = gates[b * g4 + 3 * k + u];
          const double th = tc[b * k + u];
          const double dc = dh * o * (1.0 - th * th) + dc_next.at(b, u);
          dc_next.at(b, u) = dc * f;
          dz.at(b, u) = dc * g * i * (1.0 - i);
          dz.at(b, k + u) = dc * c_prev[b * k + u] * f * (1.0 - f);
          dz.at(b, 2 * k + u) = dc * i * (1.0 - g * g);
          dz.at(b, 3 * k + u) = dh * th * o * (1.0 - o);
        }
      }
      kernel::gemm_tn(input_size_, g4, batch_, xt_.data().data() + step * batch_ * input_size_,
                      dz.data().data(), wx_.grad.data().data(), true);
      kernel::gemm_tn(k, g4, batch_, hidden_.data().data() + step * batch_ * k, dz.data().data(),
                      wh_.grad.data().data(), true);
      for (std::size_t b = 0; b < batch_; ++b) {
        for (std::size_t j = 0; j < g4; ++j) bias_.grad[j] += dz.at(b, j);
      }
      kernel::gemm_nt(batch_, input_size_, g4, dz.data().data(), wx_.value.data().data(),
                      dxt.data().data(), false);
      for (std::size_t b = 0; b < batch_; ++b) {
        for (std::size_t s = 0; s < input_size_; ++s) dx.at(b, step, s) = dxt.at(b, s);
      }
      kernel::gemm_nt(batch_, k, g4, dz.data().data(), wh_.value.data().data(),
                      dh_next.data().data(), false);
    }
    return dx;
  }

  std::vector<Param*> parameters() override { return {&wx_, &wh_, &bias_}; }

  std::size_t parameter_count() const override {
    return 4 * ((input_size_ + 1) * units_ + units_ * units_);
  }

  std::string calculation() const override {
    const auto s = std::to_string(input_size_);
    const auto u = std::to_string(units_);
    return "4x[(" + s + "+1)x" + u + "+" + u + "^2]";
  }

 private:
  static double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

  double activate(double h) const {
    return output_activation_ == Activation::Relu && h < 0.0 ? 0.0 : h;
  }

  std::size_t input_size_;
  std::size_t units_;
  bool return_sequences_;
  Activation output_activation_;
  Param wx_;
  Param wh_;
  Param bias_;

  Tensor xt_;
  Tensor gates_;
  Tensor cells_;
  Tensor hidden_;
  Tensor tanh_cells_;
  std::size_t batch_ = 0;
  std::size_t steps_ = 0;
  bool emitted_all_ = true;
};

// Single-sequence convenience: seq [steps, S] -> [steps, K] or [K].
inline Tensor lstm_forward(LSTMLayer& layer, const Tensor& seq, bool return_sequences) {
  if (seq.rank() != 2) {
    throw ShapeError("lstm_forward expects [steps,features], got " + to_string(seq.shape()));
  }
  Tensor y = layer.run(seq.reshaped({1, seq.extent(0), seq.extent(1)}), return_sequences);
  return std::move(y).reshaped(sample_shape(y));
}

}  // namespace tdntc

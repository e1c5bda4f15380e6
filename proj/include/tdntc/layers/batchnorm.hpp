#pragma once

#include <cmath>
#include <string>

#include "tdntc/layers/layer.hpp"

namespace tdntc {

// Per-channel batch normalization. Channel axis is 1; statistics are taken
// over the batch axis and every trailing (spatial) axis.
//   running <- momentum * running + (1 - momentum) * batch_stat
class BatchNormLayer : public Layer {
 public:
  explicit BatchNormLayer(std::size_t channels, double epsilon = 1e-5, double momentum = 0.9)
      : channels_(channels),
        epsilon_(epsilon),
        momentum_(momentum),
        gamma_("gamma", Tensor({channels}, 1.0)),
        beta_("beta", Tensor({channels}, 0.0)),
        running_mean_({channels}, 0.0),
        running_var_({channels}, 1.0) {
    if (!(epsilon > 0.0)) throw NumericError("batchnorm epsilon must be positive");
    if (!(momentum > 0.0 && momentum < 1.0)) throw NumericError("batchnorm momentum must lie in (0,1)");
  }

  std::string kind() const override { return "batchnorm"; }
  std::size_t channels() const { return channels_; }
  double epsilon() const { return epsilon_; }
  double momentum() const { return momentum_; }

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

  Shape output_shape(const Shape& input) const override {
    if (input.empty() || input[0] != channels_) {
      throw ShapeError("batchnorm expects " + std::to_string(channels_) + " channels, got " +
                       to_string(input));
    }
    return input;
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.rank() < 2 || x.extent(1) != channels_) {
      throw ShapeError("batchnorm expects [batch," + std::to_string(channels_) + ",...], got " +
                       to_string(x.shape()));
    }
    batch_ = x.extent(0);
    inner_ = x.size() / (batch_ * channels_);
    mode_ = mode;
    if (mode == Mode::Train && batch_ < 2) {
      throw StatisticsError("batchnorm needs a batch of at least 2 samples in training mode");
    }
    const double n = static_cast<double>(batch_ * inner_);
    inv_std_ = Tensor({channels_});
    xhat_ = Tensor(x.shape());
    Tensor y(x.shape());
    for (std::size_t ch = 0; ch < channels_; ++ch) {
      double mean;
      double var;
      if (mode == Mode::Train) {
        double s = 0.0;
        for_each_index(ch, [&](std::size_t i) { s += x[i]; });
        mean = s / n;
        double ss = 0.0;
        for_each_index(ch, [&](std::size_t i) {
          const double d = x[i] - mean;
          ss += d * d;
        });
        var = ss / n;
        running_mean_[ch] = momentum_ * running_mean_[ch] + (1.0 - momentum_) * mean;
        running_var_[ch] = momentum_ * running_var_[ch] + (1.0 - momentum_) * var;
      } else {
        mean = running_mean_[ch];
        var = running_var_[ch];
      }
      const double inv = 1.0 / std::sqrt(var + epsilon_);
      inv_std_[ch] = inv;
      const double g = gamma_.value[ch];
      const double bt = beta_.value[ch];
      for_each_index(ch, [&](std::size_t i) {
        xhat_[i] = (x[i] - mean) * inv;
        y[i] = g * xhat_[i] + bt;
      });
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    if (grad_out.shape() != xhat_.shape()) {
      throw ShapeError("batchnorm backward gradient shape mismatch: " + to_string(grad_out.shape()));
    }
    const double n = static_cast<double>(batch_ * inner_);
    Tensor dx(grad_out.shape());
    for (std::size_t ch = 0; ch < channels_; ++ch) {
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for_each_index(ch, [&](std::size_t i) {
        sum_dy += grad_out[i];
        sum_dy_xhat += grad_out[i] * xhat_[i];
      });
      gamma_.grad[ch] += sum_dy_xhat;
      beta_.grad[ch] += sum_dy;
      const double g = gamma_.value[ch];
      const double inv = inv_std_[ch];
      if (mode_ == Mode::Train) {
        for_each_index(ch, [&](std::size_t i) {
          dx[i] = g * inv / n * (n * grad_out[i] - sum_dy - xhat_[i] * sum_dy_xhat);
        });
      } else {
        for_each_index(ch, [&](std::size_t i) { dx[i] = g * inv * grad_out[i]; });
      }
    }
    return dx;
  }

  std::vector<Param*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }

  std::size_t parameter_count() const override { return 2 * channels_; }
  std::string calculation() const override { return "2x" + std::to_string(channels_); }

 private:
  template <typename Fn>
  void for_each_index(std::size_t ch, Fn&& fn) const {
    for (std::size_t b = 0; b < batch_; ++b) {
      const std::size_t base = (b * channels_ + ch) * inner_;
      for (std::size_t k = 0; k < inner_; ++k) fn(base + k);
    }
  }

  std::size_t channels_;
  double epsilon_;
  double momentum_;
  Param gamma_;
  Param beta_;
  Tensor running_mean_;
  Tensor running_var_;
  Tensor xhat_;
  Tensor inv_std_;
  std::size_t batch_ = 0;
  std::size_t inner_ = 0;
  Mode mode_ = Mode::Infer;
};

inline Tensor batchnorm(BatchNormLayer& layer, const Tensor& x, Mode mode) {
  return layer.forward(x, mode);
}

}  // namespace tdntc

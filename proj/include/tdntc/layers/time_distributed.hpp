#pragma once

#include "tdntc/layers/dense.hpp"

namespace tdntc {

// Applies one dense layer at every step of the sequence axis with shared
// parameters. Gradients of the shared parameters sum over steps.
class TimeDistributed : public Layer {
 public:
  explicit TimeDistributed(DenseLayer inner) : inner_(std::move(inner)) {}

  std::string kind() const override { return "time_distributed"; }

  DenseLayer& inner() { return inner_; }
  const DenseLayer& inner() const { return inner_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 2 || input[1] != inner_.in_features()) {
      throw ShapeError("time-distributed layer expects [steps," +
                       std::to_string(inner_.in_features()) + "], got " + to_string(input));
    }
    return {input[0], inner_.out_features()};
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.rank() != 3) {
      throw ShapeError("time-distributed layer expects [batch,steps,features], got " +
                       to_string(x.shape()));
    }
    batch_ = x.extent(0);
    steps_ = x.extent(1);
    Tensor y = inner_.forward(x.reshaped({batch_ * steps_, x.extent(2)}), mode);
    return std::move(y).reshaped({batch_, steps_, inner_.out_features()});
  }

  Tensor backward(const Tensor& grad_out) override {
    Tensor dx = inner_.backward(grad_out.reshaped({batch_ * steps_, inner_.out_features()}));
    return std::move(dx).reshaped({batch_, steps_, inner_.in_features()});
  }

  std::vector<Param*> parameters() override { return inner_.parameters(); }
  std::size_t parameter_count() const override { return inner_.parameter_count(); }
  std::string calculation() const override { return inner_.calculation(); }

 private:
  DenseLayer inner_;
  std::size_t batch_ = 0;
  std::size_t steps_ = 0;
};

// Single-sequence convenience: seq of shape [steps, F] -> [steps, out].
inline Tensor time_distributed(TimeDistributed& td, const Tensor& seq) {
  if (seq.rank() != 2) {
    throw ShapeError("time_distributed expects [steps,features], got " + to_string(seq.shape()));
  }
  Tensor y = td.forward(seq.reshaped({1, seq.extent(0), seq.extent(1)}), Mode::Infer);
  return std::move(y).reshaped({seq.extent(0), td.inner().out_features()});
}

}  // namespace tdntc

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tdntc/error.hpp"
#include "tdntc/parallel.hpp"

namespace tdntc {

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

inline void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("invalid shape " + to_string(shape) + ": extents must be >= 1");
  }
}

// Dense row-major array of 64-bit floats. The element count always equals
// the product of the extents; reshaping reinterprets, never reorders.
class Tensor {
 public:
  // Rank-0 scalar holding 0.
  Tensor() : data_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(element_count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape new_shape) const& {
    Tensor t = *this;
    t.reshape_in_place(std::move(new_shape));
    return t;
  }
  Tensor reshaped(Shape new_shape) && {
    reshape_in_place(std::move(new_shape));
    return std::move(*this);
  }

  void reshape_in_place(Shape new_shape) {
    check_extents(new_shape);
    if (element_count(new_shape) != data_.size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " (" + std::to_string(data_.size()) +
                       " elements) to " + to_string(new_shape));
    }
    shape_ = std::move(new_shape);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Signed-extent constructor used at API boundaries where shapes come from
// user input.
inline Tensor tensor_new(std::span<const std::int64_t> extents, double fill) {
  Shape shape;
  shape.reserve(extents.size());
  for (auto e : extents) {
    if (e <= 0) {
      throw ShapeError("invalid extent " + std::to_string(e) + ": extents must be >= 1");
    }
    shape.push_back(static_cast<std::size_t>(e));
  }
  return Tensor(std::move(shape), fill);
}

inline Tensor tensor_new(std::initializer_list<std::int64_t> extents, double fill) {
  return tensor_new(std::span<const std::int64_t>(extents.begin(), extents.size()), fill);
}

inline Tensor reshape(const Tensor& t, Shape new_shape) { return t.reshaped(std::move(new_shape)); }

namespace kernel {

// C[m,n] (+)= A[m,k] * B[k,n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c, bool accumulate) {
  parallel_for(m, 16, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* crow = c + i * n;
      if (!accumulate) std::fill(crow, crow + n, 0.0);
      const double* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c, bool accumulate) {
  parallel_for(m, 16, [&](std::size_t r0, std::size_t r1) {
    if (!accumulate) std::fill(c + r0 * n, c + r1 * n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = a + p * m;
      const double* brow = b + p * n;
      for (std::size_t i = r0; i < r1; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c, bool accumulate) {
  parallel_for(m, 16, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] = accumulate ? crow[j] + s : s;
      }
    }
  });
}

}  // namespace kernel

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  if (a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul inner extents disagree: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Tensor c({a.extent(0), b.extent(1)});
  kernel::gemm_nn(a.extent(0), b.extent(1), a.extent(1), a.data().data(), b.data().data(),
                  c.data().data(), false);
  return c;
}

using ScalarFunction = std::function<double(const Tensor&)>;

// Central-difference gradient of f at x, one coordinate at a time.
inline Tensor finite_diff_grad(const ScalarFunction& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw NumericError("finite difference step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("non-finite function value at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace tdntc

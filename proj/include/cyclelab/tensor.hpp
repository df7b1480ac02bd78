#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclelab {

/// Thrown when operands have incompatible shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NCHW extent of a dense tensor.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  [[nodiscard]] std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + ")";
}

/// Dense NCHW tensor backed by an Eigen column vector.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Vector::Zero(static_cast<Eigen::Index>(shape.size()))) {}
  Tensor(Shape shape, Vector data) : shape_(shape), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != shape_.size()) {
      throw ShapeError("tensor data size does not match shape " + to_string(shape_));
    }
  }

  static Tensor constant(Shape shape, Scalar value) {
    return Tensor(shape, Vector::Constant(static_cast<Eigen::Index>(shape.size()), value));
  }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return shape_.size(); }
  [[nodiscard]] bool empty() const { return data_.size() == 0; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }
  Scalar* ptr() { return data_.data(); }
  const Scalar* ptr() const { return data_.data(); }

  Scalar* sample(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.sample_size(); }
  const Scalar* sample(int n) const {
    return data_.data() + static_cast<std::size_t>(n) * shape_.sample_size();
  }

  Scalar& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  Scalar operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }
  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

  template <typename Other>
  [[nodiscard]] Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  void set_zero() { data_.setZero(); }

 private:
  [[nodiscard]] Eigen::Index index(int n, int c, int y, int x) const {
    return static_cast<Eigen::Index>(((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
                                         shape_.w +
                                     x);
  }

  Shape shape_{0, 0, 0, 0};
  Vector data_;
};

/// Planar RGB image, shape (1, 3, H, W), float intensities.
using Image = Tensor<float>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

/// [0, 1] intensities -> model range [-1, 1].
template <typename Scalar>
Tensor<Scalar> to_model_range(const Tensor<Scalar>& unit) {
  return Tensor<Scalar>(unit.shape(), (unit.data().array() * Scalar(2) - Scalar(1)).matrix());
}

/// Model range [-1, 1] -> [0, 1] intensities.
template <typename Scalar>
Tensor<Scalar> to_unit_range(const Tensor<Scalar>& model) {
  return Tensor<Scalar>(model.shape(), ((model.data().array() + Scalar(1)) * Scalar(0.5)).matrix());
}

/// Sample n of a batch as a (1, C, H, W) tensor.
template <typename Scalar>
Tensor<Scalar> slice_sample(const Tensor<Scalar>& batch, int n) {
  Shape s = batch.shape();
  if (n < 0 || n >= s.n) throw ShapeError("slice_sample: index out of range");
  s.n = 1;
  Tensor<Scalar> out(s);
  std::copy_n(batch.sample(n), s.sample_size(), out.ptr());
  return out;
}

/// Concatenates equally shaped tensors along the batch axis.
template <typename Scalar>
Tensor<Scalar> stack_samples(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("stack_samples: nothing to stack");
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    Shape q = p.shape();
    q.n = s.n;
    require_same_shape(s, q, "stack_samples");
    total += p.shape().n;
  }
  Shape out_shape = s;
  out_shape.n = total;
  Tensor<Scalar> out(out_shape);
  Scalar* dst = out.ptr();
  for (const auto& p : parts) dst = std::copy_n(p.ptr(), p.size(), dst);
  return out;
}

}  // namespace cyclelab

#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nicu::nn {

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor. Activations flowing through a Network are [C, H, W].
template <typename Scalar>
struct Tensor {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Vector data;
  std::optional<Vector> grad;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(Vector::Zero(numel(shape))) {}
  Tensor(Shape s, Vector d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) {
      throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }
  }

  static Tensor constant(Shape s, Scalar value) {
    Tensor t(std::move(s));
    t.data.setConstant(value);
    return t;
  }

  Eigen::Index size() const { return data.size(); }
  Eigen::Index dim(std::size_t i) const { return shape.at(i); }

  Vector& ensure_grad() {
    if (!grad) grad = Vector::Zero(data.size());
    return *grad;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape, data.template cast<Other>());
    if (grad) out.grad = grad->template cast<Other>();
    return out;
  }
};

}  // namespace nicu::nn

#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace dagrnn {

// Dense row-major tensor of 64-bit reals, rank 0..4. No views, no
// broadcasting; every operation copies. All higher modules are built on this.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::vector<size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<size_t> shape, double value);
  static Tensor ones(std::vector<size_t> shape) { return full(std::move(shape), 1.0); }
  // Rank-1 / rank-2 literals for tests and small fixtures.
  static Tensor vec(std::initializer_list<double> values);
  static Tensor mat(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(size_t n);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  size_t extent(size_t axis) const { return shape_[axis]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& at(size_t i) { return data_[i]; }
  double& at(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
  double& at(size_t i, size_t j, size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& at(size_t i, size_t j, size_t k, size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(size_t i) const { return data_[i]; }
  double at(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }
  double at(size_t i, size_t j, size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(size_t i, size_t j, size_t k, size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_str() const;  // e.g. "[3x4]"

  void fill(double value);
  Tensor& operator+=(const Tensor& other);  // shapes must match
  Tensor& scale(double factor);

 private:
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

// m: [p x q], v: [q] -> [p]. Shape mismatch raises DimensionError naming both
// shapes.
Tensor matvec(const Tensor& m, const Tensor& v);

// a: [p], b: [q] -> [p x q], result(i,j) = a(i) * b(j).
Tensor outer(const Tensor& a, const Tensor& b);

// Elementwise product; identical shapes required.
Tensor hadamard(const Tensor& a, const Tensor& b);

// Elementwise max(0, x).
Tensor relu(const Tensor& x);

// Derivative of relu evaluated at stored activations: 1 where h > 0, else 0.
// The subgradient at exactly 0 is 0.
Tensor relu_grad(const Tensor& h);

// Numerically stable softmax over a rank-1 tensor (max-subtraction).
Tensor softmax(const Tensor& z);

}  // namespace dagrnn

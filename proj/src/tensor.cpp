#include "dagrnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dagrnn/errors.hpp"

namespace dagrnn {

namespace {

size_t shape_product(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t e : shape) n *= e;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
  if (shape_.size() > 4) throw DimensionError("tensor rank > 4 not supported");
  for (size_t e : shape_) {
    if (e == 0) throw DimensionError("tensor extent must be positive");
  }
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 4) throw DimensionError("tensor rank > 4 not supported");
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor data length does not match shape " + shape_str());
  }
}

Tensor Tensor::full(std::vector<size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::vec(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::mat(std::initializer_list<std::initializer_list<double>> rows) {
  const size_t r = rows.size();
  const size_t c = rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(size_t n) {
  Tensor t({n, n});
  for (size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

void Tensor::fill(double value) {
  std::fill(data_.begin(), data_.end(), value);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other)) {
    throw DimensionError("tensor += shape mismatch: " + shape_str() + " vs " +
                         other.shape_str());
  }
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::scale(double factor) {
  for (double& v : data_) v *= factor;
  return *this;
}

Tensor matvec(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.extent(1) != v.extent(0)) {
    throw DimensionError("matvec shape mismatch: " + m.shape_str() + " * " +
                         v.shape_str());
  }
  const size_t p = m.extent(0), q = m.extent(1);
  Tensor out({p});
  const double* md = m.data();
  const double* vd = v.data();
  for (size_t i = 0; i < p; ++i) {
    double acc = 0.0;
    const double* row = md + i * q;
    for (size_t j = 0; j < q; ++j) acc += row[j] * vd[j];
    out[i] = acc;
  }
  return out;
}

Tensor outer(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1) {
    throw DimensionError("outer expects rank-1 inputs, got " + a.shape_str() +
                         " and " + b.shape_str());
  }
  const size_t p = a.extent(0), q = b.extent(0);
  Tensor out({p, q});
  for (size_t i = 0; i < p; ++i) {
    for (size_t j = 0; j < q; ++j) out.at(i, j) = a[i] * b[j];
  }
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("hadamard shape mismatch: " + a.shape_str() + " vs " +
                         b.shape_str());
  }
  Tensor out = a;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  return out;
}

Tensor relu_grad(const Tensor& h) {
  Tensor out = h;
  for (size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? 1.0 : 0.0;
  return out;
}

Tensor softmax(const Tensor& z) {
  if (z.rank() != 1) throw DimensionError("softmax expects rank-1, got " + z.shape_str());
  Tensor out = z;
  double mx = out[0];
  for (size_t i = 1; i < out.size(); ++i) mx = std::max(mx, out[i]);
  double sum = 0.0;
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(out[i] - mx);
    sum += out[i];
  }
  for (size_t i = 0; i < out.size(); ++i) out[i] /= sum;
  return out;
}

}  // namespace dagrnn

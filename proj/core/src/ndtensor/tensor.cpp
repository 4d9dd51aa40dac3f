// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/ndtensor/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "sparx/common/error.hpp"

namespace sparx {

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

const char* to_string(DType dtype) { return dtype == DType::F32 ? "f32" : "f64"; }

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype), data_(numel_of(shape_), 0.0) {
  for (auto d : shape_) check(d > 0, "tensor dimensions must be positive, got ", to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> values, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype), data_(std::move(values)) {
  for (auto d : shape_) check(d > 0, "tensor dimensions must be positive, got ", to_string(shape_));
  check(numel_of(shape_) == data_.size(), "shape ", to_string(shape_), " needs ", numel_of(shape_),
        " values, got ", data_.size());
  normalize_precision();
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  t.fill(value);
  return t;
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  check(index.size() == shape_.size(), "index rank ", index.size(), " does not match tensor rank ", shape_.size());
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    check(i < shape_[axis], "index ", i, " out of range for axis ", axis, " of ", to_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

double Tensor::item() const {
  check(data_.size() == 1, "item() needs a single-element tensor, got ", to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  check(numel_of(shape) == data_.size(), "cannot reshape ", to_string(shape_), " to ", to_string(shape));
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::to(DType dtype) const {
  Tensor t = *this;
  t.dtype_ = dtype;
  t.normalize_precision();
  return t;
}

Tensor& Tensor::fill(double value) {
  std::fill(data_.begin(), data_.end(), round_to(dtype_, value));
  return *this;
}

void Tensor::normalize_precision() {
  if (dtype_ == DType::F32)
    for (auto& v : data_) v = round_to(DType::F32, v);
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.shape_ != b.shape_ || a.dtype_ != b.dtype_) return false;
  return a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "max_abs_diff shape mismatch ", to_string(a.shape()), " vs ", to_string(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace sparx

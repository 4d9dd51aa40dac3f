// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sparx {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);
const char* to_string(DType dtype);

/// Rounds `v` to the precision of `dtype` (a no-op for F64).
inline double round_to(DType dtype, double v) {
  return dtype == DType::F32 ? static_cast<double>(static_cast<float>(v)) : v;
}

/// Dense row-major array. Values are held in double storage; an F32 tensor
/// keeps every element exactly representable as a float, so its serialized
/// form and its in-memory arithmetic agree bit for bit.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::F64);
  Tensor(Shape shape, std::vector<double> values, DType dtype = DType::F64);

  static Tensor zeros(Shape shape, DType dtype = DType::F64) { return Tensor(std::move(shape), dtype); }
  static Tensor full(Shape shape, double value, DType dtype = DType::F64);
  static Tensor scalar(double value, DType dtype = DType::F64) { return Tensor({}, {value}, dtype); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }
  DType dtype() const { return dtype_; }
  /// Default-constructed tensors carry no shape and no storage.
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  double item() const;

  /// Same storage order, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  Tensor to(DType dtype) const;
  Tensor& fill(double value);

  /// Re-round all elements to this tensor's dtype.
  void normalize_precision();

  /// Bitwise equality of shape, dtype and values.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  DType dtype_ = DType::F64;
  std::vector<double> data_;
};

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace sparx

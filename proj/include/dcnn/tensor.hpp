#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dcnn/rng.hpp"

namespace dcnn {

/// Ordered list of positive extents. Image tensors use [batch, channels,
/// height, width]; the element count must fit in 64 bits.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t elements() const { return elements_; }

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return !(*this == other); }

  /// "[2, 3, 4]" -- used in error messages.
  std::string str() const;

 private:
  void validate();

  std::vector<std::size_t> dims_;
  std::size_t elements_ = 1;
};

/// Dense row-major float32 tensor. Operations return fresh tensors; the
/// raw buffer stays mutable so the optimizer can update parameters in
/// place.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from_data(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<const float> span() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Flat offset of [n, c, h, w] in an NCHW tensor.
  std::size_t index4(std::size_t n, std::size_t c, std::size_t h,
                     std::size_t w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  float& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index4(n, c, h, w)];
  }
  float at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[index4(n, c, h, w)];
  }

 private:
  Tensor(Shape shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  Shape shape_;
  std::vector<float> data_;
};

/// i.i.d. Gaussian fill; deterministic for a given generator state.
Tensor fill_normal(Rng& rng, Shape shape, float mean, float stddev);

/// [M,K] x [K,N] -> [M,N]. Accumulates every dot product in float64 with a
/// fixed summation order, then rounds once to float32, so results are
/// bitwise reproducible whether or not rows run in parallel.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, float factor);
Tensor map_elementwise(const Tensor& t, const std::function<float(float)>& f);

/// NaN/Inf audit; the tensor contract is that every operation in this
/// module produces finite values.
bool all_finite(const Tensor& t);

/// TNSR binary format: magic "TNS1", u32 LE rank, rank x u32 LE extents,
/// then element-count x f32 LE, row-major. Round-trips are bit-exact.
void save_tnsr(const Tensor& t, std::ostream& out);
Tensor load_tnsr(std::istream& in);
void save_tnsr_file(const Tensor& t, const std::string& path);
Tensor load_tnsr_file(const std::string& path);

}  // namespace dcnn

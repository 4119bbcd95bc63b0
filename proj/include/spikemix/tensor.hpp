#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "spikemix/error.hpp"

namespace spikemix {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major tensor of 64-bit reals. The training and gradient-check
// paths run entirely on this type; the inference interpreter has its own
// 32-bit representation.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const;
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& at(std::initializer_list<int64_t> idx);
  double at(std::initializer_list<int64_t> idx) const;

  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  int64_t flat_index(std::initializer_list<int64_t> idx) const;

  Shape shape_;
  std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

// a += b (shapes must match)
void add_inplace(Tensor& a, const Tensor& b);
// a += k * b
void add_scaled(Tensor& a, const Tensor& b, double k);

// Repeat the whole tensor `times` times along a new leading grouping:
// [B, ...] -> [times*B, ...].
Tensor tile_rows(const Tensor& t, int times);

}  // namespace spikemix

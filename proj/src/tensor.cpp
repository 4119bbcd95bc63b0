#include "spikemix/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace spikemix {

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (int64_t d : shape_)
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got shape " + shape_str(shape_));
  data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != static_cast<int64_t>(data_.size()))
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

int64_t Tensor::dim(int i) const {
  if (i < 0 || i >= rank()) throw ShapeError("axis " + std::to_string(i) + " out of range for " + shape_str(shape_));
  return shape_[static_cast<size_t>(i)];
}

int64_t Tensor::flat_index(std::initializer_list<int64_t> idx) const {
  if (static_cast<int>(idx.size()) != rank())
    throw ShapeError("index rank mismatch for " + shape_str(shape_));
  int64_t flat = 0;
  int i = 0;
  for (int64_t v : idx) {
    if (v < 0 || v >= shape_[static_cast<size_t>(i)])
      throw ShapeError("index out of range for " + shape_str(shape_));
    flat = flat * shape_[static_cast<size_t>(i)] + v;
    ++i;
  }
  return flat;
}

double& Tensor::at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(flat_index(idx))]; }
double Tensor::at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(flat_index(idx))]; }

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add_inplace");
  double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

void add_scaled(Tensor& a, const Tensor& b, double k) {
  require_same_shape(a, b, "add_scaled");
  double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.size(); ++i) pa[i] += k * pb[i];
}

Tensor tile_rows(const Tensor& t, int times) {
  if (times <= 0) throw ShapeError("tile_rows: times must be positive");
  Shape s = t.shape();
  if (s.empty()) throw ShapeError("tile_rows: rank-0 tensor");
  s[0] *= times;
  Tensor out(s);
  const size_t block = static_cast<size_t>(t.size());
  for (int r = 0; r < times; ++r)
    std::memcpy(out.data() + r * block, t.data(), block * sizeof(double));
  return out;
}

}  // namespace spikemix

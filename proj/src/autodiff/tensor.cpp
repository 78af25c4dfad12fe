#include "msrnn/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "msrnn/error.hpp"

namespace msrnn::ad {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.size() > kMaxRank) {
    throw ShapeError("shape rank " + std::to_string(dims.size()) + " exceeds " +
                     std::to_string(kMaxRank));
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("shape axes must be positive");
  }
  std::copy(dims.begin(), dims.end(), dims_.begin());
  rank_ = dims.size();
}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

Shape Shape::with_last(std::size_t n) const {
  Shape s = *this;
  if (s.rank_ == 0) return Shape{n};
  s.dims_[s.rank_ - 1] = n;
  return s;
}

Shape Shape::appended(std::size_t n) const {
  if (rank_ == kMaxRank) throw ShapeError("cannot append an axis to " + str());
  Shape s = *this;
  s.dims_[s.rank_++] = n;
  return s;
}

Shape Shape::dropped_last() const {
  Shape s = *this;
  if (s.rank_ > 0) s.dims_[--s.rank_] = 0;
  return s;
}

bool Shape::has_suffix(const Shape& suffix) const {
  if (suffix.rank_ > rank_) return false;
  const std::size_t off = rank_ - suffix.rank_;
  for (std::size_t i = 0; i < suffix.rank_; ++i) {
    if (dims_[off + i] != suffix.dims_[i]) return false;
  }
  return true;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

bool operator==(const Shape& a, const Shape& b) {
  if (a.rank_ != b.rank_) return false;
  for (std::size_t i = 0; i < a.rank_; ++i) {
    if (a.dims_[i] != b.dims_[i]) return false;
  }
  return true;
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor(Shape{rows, cols}, std::move(v));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_.str());
  }
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace msrnn::ad

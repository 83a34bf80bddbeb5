#include "affect/tensor.hpp"

#include <cmath>

namespace affect {

int numel(const Shape& shape) {
  long long n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("shape has non-positive dimension " + shape_str(shape));
    n *= d;
  }
  if (n > (1ll << 31)) throw DimensionError("tensor too large: " + shape_str(shape));
  return static_cast<int>(n);
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(Shape shape) {
  Tensor t;
  t.size_ = numel(shape);
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(static_cast<std::size_t>(t.size_), 0.0);
  return t;
}

Tensor Tensor::full(Shape shape, double value) {
  if (!std::isfinite(value)) throw DataError("non-finite fill value");
  Tensor t = zeros(std::move(shape));
  for (double& v : *t.data_) v = value;
  return t;
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::identity(int n) {
  Tensor t = zeros({n, n});
  for (int i = 0; i < n; ++i) (*t.data_)[static_cast<std::size_t>(i) * n + i] = 1.0;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  Tensor t = from_raw(std::move(shape), std::move(data));
  if (!t.all_finite()) throw DataError("non-finite value in tensor data");
  return t;
}

Tensor Tensor::from_raw(Shape shape, std::vector<double> data) {
  Tensor t;
  t.size_ = numel(shape);
  if (static_cast<std::size_t>(t.size_) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(data));
  return t;
}

std::span<const double> Tensor::data() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

std::span<double> Tensor::mutable_data() {
  if (on_tape()) throw ArgumentError("cannot mutate a tensor recorded on a tape");
  if (!data_) return {};
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (size_ != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape_));
  return (*data_)[0];
}

double Tensor::at(int i) const { return (*data_)[static_cast<std::size_t>(i)]; }

double Tensor::at(int i, int j) const {
  return (*data_)[static_cast<std::size_t>(i) * shape_.back() + j];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != size_) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

double Tensor::l2_norm() const {
  double s = 0.0;
  for (double v : data()) s += v * v;
  return std::sqrt(s);
}

bool Tensor::all_finite() const {
  for (double v : data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace affect

#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "affect/error.hpp"

namespace affect {

class Tape;

using Shape = std::vector<int>;

int numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of 64-bit floats. A plain value type: copies behave
// independently (copy-on-write underneath, so passing tensors around is
// cheap). A tensor may additionally refer to a node on a Tape, in which case
// operations consuming it are recorded for reverse-mode differentiation.
//
// Data entering through from_data() is validated to be finite; operations
// preserve finiteness for finite inputs (logs and divisions are guarded by
// their callers per the respective contracts).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor identity(int n);
  // Validating constructor: shape/size agreement and finiteness.
  static Tensor from_data(Shape shape, std::vector<double> data);
  // Trusted constructor for op results and bulk internal buffers; skips the
  // per-element finiteness scan.
  static Tensor from_raw(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int size() const { return size_; }
  bool empty() const { return size_ == 0; }

  std::span<const double> data() const;
  // Detaches from any sharers before handing out mutable access. Refused for
  // tensors recorded on a tape: their values are part of the graph history.
  std::span<double> mutable_data();

  std::shared_ptr<const std::vector<double>> buffer() const { return data_; }

  double item() const;
  double at(int i) const;
  double at(int i, int j) const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool requires_grad() const { return node_ >= 0; }

  // Same data and node, different shape (no copy, no new node).
  Tensor reshaped(Shape shape) const;
  // Copy of the value only, dropped from any tape.
  Tensor detached() const;

  double l2_norm() const;
  bool all_finite() const;

 private:
  friend class Tape;

  Shape shape_;
  int size_ = 0;
  std::shared_ptr<std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

}  // namespace affect

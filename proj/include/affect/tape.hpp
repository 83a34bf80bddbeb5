#pragma once

#include <functional>
#include <initializer_list>
#include <vector>

#include "affect/tensor.hpp"

namespace affect {

// Reverse-mode differentiation tape. Nodes are appended in execution order,
// which keeps the list topologically sorted; backward() walks it in reverse,
// seeding the scalar loss with gradient 1. A node's "pull" callback reads the
// gradient accumulated for its output and adds the corresponding
// contributions to its inputs' slots.
//
// Interior gradient slots and pull closures (which hold the saved
// activations) are released as soon as they have been consumed, so peak
// memory during backward is bounded by the live frontier of the graph, not
// its full depth. A tape supports a single backward() call.
//
// Tapes are single-threaded. Tensors bound to a tape must not outlive it.
class Tape {
 public:
  using Pull = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Register a leaf whose gradient is kept through backward(). The returned
  // tensor shares the value's buffer and is bound to this tape.
  Tensor param(const Tensor& value);

  void backward(const Tensor& loss);

  // Gradient of the loss w.r.t. a leaf of this tape, shaped like the leaf.
  // Zero for leaves the loss does not reach.
  Tensor grad(const Tensor& leaf) const;

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  bool backward_done() const { return ran_backward_; }

  // --- op implementation interface ---

  // Record an op result. `inputs` lists the node ids of differentiable
  // inputs (-1 entries allowed and ignored); `pull` propagates gradient.
  Tensor emit(Shape shape, std::vector<double> data, std::vector<int> inputs, Pull pull);

  // Gradient accumulator for node `id`, allocated as zeros on first touch.
  std::span<double> slot(int id);

 private:
  struct Node {
    std::vector<int> inputs;
    int size = 0;
    bool keep = false;
    Pull pull;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool ran_backward_ = false;
};

// The tape shared by a set of operands: null if none is bound to a tape,
// their common tape if bound consistently, and an error on a mix of tapes.
Tape* common_tape(std::initializer_list<const Tensor*> tensors);

}  // namespace affect

#include "affect/tape.hpp"

namespace affect {

Tensor Tape::param(const Tensor& value) {
  if (value.on_tape()) throw ArgumentError("tensor is already bound to a tape");
  Node n;
  n.size = value.size();
  n.keep = true;
  nodes_.push_back(std::move(n));

  Tensor bound = value;
  bound.tape_ = this;
  bound.node_ = static_cast<int>(nodes_.size()) - 1;
  return bound;
}

Tensor Tape::emit(Shape shape, std::vector<double> data, std::vector<int> inputs, Pull pull) {
  Node n;
  n.inputs = std::move(inputs);
  n.pull = std::move(pull);

  Tensor out = Tensor::from_raw(std::move(shape), std::move(data));
  n.size = out.size();
  nodes_.push_back(std::move(n));
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size()) - 1;
  return out;
}

std::span<double> Tape::slot(int id) {
  auto& g = grads_[static_cast<std::size_t>(id)];
  if (g.empty()) g.assign(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(id)].size), 0.0);
  return {g.data(), g.size()};
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this || loss.node() < 0) {
    throw ArgumentError("loss is not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw ArgumentError("loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (ran_backward_) throw ArgumentError("tape supports a single backward pass");
  ran_backward_ = true;

  grads_.assign(nodes_.size(), {});
  grads_[static_cast<std::size_t>(loss.node())] = {1.0};

  for (int id = loss.node(); id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (!g.empty() && n.pull) n.pull(*this, {g.data(), g.size()});
    n.pull = nullptr;  // free saved activations as soon as they are consumed
    if (!n.keep) std::vector<double>().swap(g);
  }
}

Tensor Tape::grad(const Tensor& leaf) const {
  if (leaf.tape() != this || leaf.node() < 0) {
    throw ArgumentError("tensor is not a leaf of this tape");
  }
  const auto& n = nodes_[static_cast<std::size_t>(leaf.node())];
  if (!n.keep) throw ArgumentError("gradients are kept only for param() leaves");
  if (grads_.empty()) return Tensor::zeros(leaf.shape());
  const auto& g = grads_[static_cast<std::size_t>(leaf.node())];
  if (g.empty()) return Tensor::zeros(leaf.shape());
  return Tensor::from_raw(leaf.shape(), g);
}

Tape* common_tape(std::initializer_list<const Tensor*> tensors) {
  Tape* tape = nullptr;
  for (const Tensor* t : tensors) {
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape()) throw ArgumentError("operands belong to different tapes");
    tape = t->tape();
  }
  return tape;
}

}  // namespace affect

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "affect/tape.hpp"
#include "affect/tensor.hpp"

namespace affect {

// (name, storage) pairs for a block's trainable tensors. Order is part of
// the contract: optimizers and checkpoints match parameters positionally.
using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Copy of a parameter struct with every tensor re-bound as a tape leaf.
// The original keeps plain tensors; forward code runs on the bound copy.
template <typename P>
P bind_params(Tape& tape, const P& params) {
  P bound = params;
  for (auto&& [name, t] : bound.named_params()) *t = tape.param(*t);
  return bound;
}

// Gradients for a bound copy after backward(), in named_params() order.
template <typename P>
std::vector<Tensor> collect_grads(const Tape& tape, P& bound) {
  std::vector<Tensor> grads;
  for (auto&& [name, t] : bound.named_params()) grads.push_back(tape.grad(*t));
  return grads;
}

}  // namespace affect

#pragma once

#include <span>
#include <vector>

#include "affect/rng.hpp"
#include "affect/tape.hpp"

namespace affect {

enum class Pad { same, valid };

// Differentiable operations. Each works on plain tensors as ordinary math;
// when an operand is bound to a Tape the result is recorded there and
// participates in backward(). Binary elementwise ops accept identical shapes
// or a size-1 operand broadcast against the other.

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor cmul(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// shape and indexing
Tensor concat(std::span<const Tensor> parts);
Tensor index(const Tensor& v, int i);
Tensor row(const Tensor& m, int i);
Tensor column(const Tensor& m, int j);
Tensor slice_rows(const Tensor& m, int begin, int end);
Tensor stack_rows(std::span<const Tensor> rows);
Tensor add_rowwise(const Tensor& m, const Tensor& v);
// Mean-pool row groups [bounds[i], bounds[i+1]) of a T x d matrix.
Tensor bin_mean_rows(const Tensor& m, const std::vector<int>& bounds);

// neural network pieces
Tensor softmax(const Tensor& logits);
// input: C_in x L, kernels: C_out x C_in x K. Cross-correlation; zero
// same-padding splits K-1 as left = (K-1)/2, remainder right.
Tensor conv1d(const Tensor& input, const Tensor& kernels, int stride, Pad padding);
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
Tensor maxpool1d(const Tensor& input, int kernel, int stride);
// Inverted dropout: train mode zeroes each element with probability p and
// scales survivors by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& x, double p, bool train_mode, Rng& rng);

}  // namespace affect

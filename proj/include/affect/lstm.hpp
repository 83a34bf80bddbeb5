#pragma once

#include "affect/params.hpp"
#include "affect/rng.hpp"
#include "affect/tensor.hpp"

namespace affect {

// Single-layer LSTM over a frame sequence, with an affine head mapping each
// hidden state to the three affect dimensions (arousal, valence, liking).
//
// Gate weights are stored stacked: w_x is 4H x d, w_h is 4H x H, and b is 4H,
// with the four H-sized chunks ordered input, forget, cell, output. The
// forget-gate bias chunk is initialised to 1 so early training does not
// flush the cell state.
struct LstmParams {
  Tensor w_x;    // 4H x d
  Tensor w_h;    // 4H x H
  Tensor b;      // 4H
  Tensor w_out;  // 3 x H
  Tensor b_out;  // 3

  static LstmParams init(int input_dim, int hidden_dim, Rng& rng);
  NamedParams named_params();
  int hidden_dim() const { return w_h.dim(1); }
  int input_dim() const { return w_x.dim(1); }
};

// Runs the LSTM over frames (T x d) from a zero initial state and returns the
// per-frame affect predictions (T x 3). Strictly causal: output row t depends
// only on frame rows 0..t.
Tensor lstm_forward(const Tensor& frames, const LstmParams& params);

}  // namespace affect

#pragma once

#include <vector>

#include "affect/params.hpp"
#include "affect/rng.hpp"
#include "affect/tensor.hpp"

namespace affect {

// Parameters of the attention fusion block. Incoming semantic (d_s) and
// paralinguistic (d_p) frame vectors are projected into a shared d_u-dim
// space; the disentangling head then forms affect-specific views and
// blends them through two-way attention layers, each driven by one
// learnable query per attended branch (two per layer, three layers).
struct FusionParams {
  Tensor w_s, b_s;  // d_u x d_s, d_u
  Tensor w_p, b_p;  // d_u x d_p, d_u
  // attention layer 1 blends the projected modalities
  Tensor q_s, q_p;  // d_u each
  // affect-specific views (arousal, valence, liking)
  Tensor w_a, b_a, w_v, b_v, w_l, b_l;  // d_u x d_u, d_u
  // attention layer 2 blends arousal with liking; layer 3 adds valence
  Tensor q_a, q_l;  // d_u each
  Tensor q_z, q_v;  // d_u each
  bool shared_query = false;  // ablation: one query per layer (q_s, q_a, q_z)

  static FusionParams init(int d_s, int d_p, int d_u, Rng& rng);
  NamedParams named_params();
  int d_u() const { return w_s.dim(0); }
};

// [u, w] -> alpha_1 u + alpha_2 w with alpha = softmax of the scaled query
// scores (u . q_u / sqrt(d), w . q_w / sqrt(d)).
Tensor attention_pair(const Tensor& u, const Tensor& w, const Tensor& q_u, const Tensor& q_w);

// Per-frame attention weights recorded during fusion, one (alpha_1,
// alpha_2) row per attention layer. Rows always sum to 1.
struct FusionTrace {
  std::vector<Tensor> alphas;  // each a 2-vector
};

// Plain fusion baseline: [x_s, x_p].
Tensor concat_fuse(const Tensor& x_s, const Tensor& x_p);

// The disentangled path: project both modalities, blend them, form the
// arousal/valence/liking views, then blend those pairwise:
//   x~_s = W_s x_s + b_s, x~_p = W_p x_p + b_p
//   x~_sp = Att(x~_s, x~_p)
//   a, v, l = affine views of x~_sp
//   z = Att(a, l); x_fusion = Att(z, v)
Tensor disentangled_fuse(const Tensor& x_s, const Tensor& x_p, const FusionParams& params,
                         FusionTrace* trace = nullptr);

// Applies the chosen fusion to every row of the T x d_s and T x d_p frame
// matrices, returning T x d_fused.
enum class FusionMode { concat, disentangled };
Tensor fuse_sequence(const Tensor& semantic, const Tensor& paralinguistic,
                     const FusionParams& params, FusionMode mode, FusionTrace* trace = nullptr);

}  // namespace affect

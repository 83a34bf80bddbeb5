#include "affect/fusion.hpp"

#include <cmath>

#include "affect/error.hpp"
#include "affect/ops.hpp"

namespace affect {

FusionParams FusionParams::init(int d_s, int d_p, int d_u, Rng& rng) {
  if (d_s < 1 || d_p < 1 || d_u < 1) throw ArgumentError("fusion dims must be positive");
  auto xavier = [&rng](Shape shape, int fan_in) {
    Tensor t = Tensor::zeros(shape);
    const double std = std::sqrt(1.0 / fan_in);
    for (double& v : t.mutable_data()) v = rng.normal(0.0, std);
    return t;
  };
  FusionParams p;
  p.w_s = xavier({d_u, d_s}, d_s);
  p.b_s = Tensor::zeros({d_u});
  p.w_p = xavier({d_u, d_p}, d_p);
  p.b_p = Tensor::zeros({d_u});
  p.w_a = xavier({d_u, d_u}, d_u);
  p.b_a = Tensor::zeros({d_u});
  p.w_v = xavier({d_u, d_u}, d_u);
  p.b_v = Tensor::zeros({d_u});
  p.w_l = xavier({d_u, d_u}, d_u);
  p.b_l = Tensor::zeros({d_u});
  // Queries start at zero: every attention layer opens as an even blend.
  for (Tensor* q : {&p.q_s, &p.q_p, &p.q_a, &p.q_l, &p.q_z, &p.q_v}) *q = Tensor::zeros({d_u});
  return p;
}

NamedParams FusionParams::named_params() {
  return {{"fusion.w_s", &w_s}, {"fusion.b_s", &b_s}, {"fusion.w_p", &w_p}, {"fusion.b_p", &b_p},
          {"fusion.q_s", &q_s}, {"fusion.q_p", &q_p}, {"fusion.w_a", &w_a}, {"fusion.b_a", &b_a},
          {"fusion.w_v", &w_v}, {"fusion.b_v", &b_v}, {"fusion.w_l", &w_l}, {"fusion.b_l", &b_l},
          {"fusion.q_a", &q_a}, {"fusion.q_l", &q_l}, {"fusion.q_z", &q_z}, {"fusion.q_v", &q_v}};
}

namespace {

Tensor attention_blend(const Tensor& u, const Tensor& w, const Tensor& q_u, const Tensor& q_w,
                       FusionTrace* trace) {
  if (u.shape() != w.shape() || u.ndim() != 1) {
    throw DimensionError("attention_pair expects two equal-length vectors, got " +
                         shape_str(u.shape()) + " and " + shape_str(w.shape()));
  }
  if (q_u.shape() != u.shape() || q_w.shape() != u.shape()) {
    throw DimensionError("attention query shape " + shape_str(q_u.shape()) +
                         " does not match input " + shape_str(u.shape()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(u.size()));
  Tensor scores[2] = {dot(u, q_u), dot(w, q_w)};
  Tensor alpha = softmax(cmul(concat(scores), scale));
  if (trace) trace->alphas.push_back(alpha);
  return add(mul(u, index(alpha, 0)), mul(w, index(alpha, 1)));
}

Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b) {
  return add(matmul(w, x), b);
}

}  // namespace

Tensor attention_pair(const Tensor& u, const Tensor& w, const Tensor& q_u, const Tensor& q_w) {
  return attention_blend(u, w, q_u, q_w, nullptr);
}

Tensor concat_fuse(const Tensor& x_s, const Tensor& x_p) {
  if (x_s.ndim() != 1 || x_p.ndim() != 1) {
    throw DimensionError("concat_fuse expects vectors, got " + shape_str(x_s.shape()) + " and " +
                         shape_str(x_p.shape()));
  }
  Tensor parts[2] = {x_s, x_p};
  return concat(parts);
}

Tensor disentangled_fuse(const Tensor& x_s, const Tensor& x_p, const FusionParams& params,
                         FusionTrace* trace) {
  const FusionParams& p = params;
  Tensor xs = affine(p.w_s, x_s, p.b_s);
  Tensor xp = affine(p.w_p, x_p, p.b_p);
  const Tensor& q2 = p.shared_query ? p.q_s : p.q_p;
  Tensor xsp = attention_blend(xs, xp, p.q_s, q2, trace);

  Tensor a = affine(p.w_a, xsp, p.b_a);
  Tensor v = affine(p.w_v, xsp, p.b_v);
  Tensor l = affine(p.w_l, xsp, p.b_l);

  const Tensor& qa = p.shared_query ? p.q_s : p.q_a;
  const Tensor& ql = p.shared_query ? p.q_s : p.q_l;
  Tensor z = attention_blend(a, l, qa, ql, trace);

  const Tensor& qz = p.shared_query ? p.q_s : p.q_z;
  const Tensor& qv = p.shared_query ? p.q_s : p.q_v;
  return attention_blend(z, v, qz, qv, trace);
}

Tensor fuse_sequence(const Tensor& semantic, const Tensor& paralinguistic,
                     const FusionParams& params, FusionMode mode, FusionTrace* trace) {
  if (semantic.ndim() != 2 || paralinguistic.ndim() != 2 ||
      semantic.dim(0) != paralinguistic.dim(0)) {
    throw DimensionError("fuse_sequence expects equal-length frame matrices, got " +
                         shape_str(semantic.shape()) + " and " +
                         shape_str(paralinguistic.shape()));
  }
  const int t = semantic.dim(0);
  std::vector<Tensor> fused;
  fused.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) {
    Tensor x_s = row(semantic, i);
    Tensor x_p = row(paralinguistic, i);
    fused.push_back(mode == FusionMode::concat ? concat_fuse(x_s, x_p)
                                               : disentangled_fuse(x_s, x_p, params, trace));
  }
  return stack_rows(fused);
}

}  // namespace affect

#include "affect/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "affect/fusion.hpp"
#include "affect/loss.hpp"
#include "affect/lstm.hpp"
#include "affect/ops.hpp"
#include "affect/rng.hpp"
#include "affect/tape.hpp"

namespace affect {

namespace {

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.mutable_data()) v = rng.normal(0.0, scale);
  return t;
}

double eval_at(const LossFn& f, const std::vector<Tensor>& xs) {
  Tape tape;
  std::vector<Tensor> bound;
  bound.reserve(xs.size());
  for (const Tensor& x : xs) bound.push_back(tape.param(x));
  return f(bound).item();
}

// Worst relative error of the analytic gradient against central differences
// over every coordinate of every input.
double fd_worst(const LossFn& f, const std::vector<Tensor>& xs, double h = 1e-5) {
  Tape tape;
  std::vector<Tensor> bound;
  bound.reserve(xs.size());
  for (const Tensor& x : xs) bound.push_back(tape.param(x));
  Tensor loss = f(bound);
  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(bound.size());
  for (const Tensor& b : bound) grads.push_back(tape.grad(b));

  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (int c = 0; c < xs[i].size(); ++c) {
      std::vector<Tensor> probe(xs.begin(), xs.end());
      std::vector<double> vals(xs[i].data().begin(), xs[i].data().end());
      const double orig = vals[static_cast<std::size_t>(c)];
      vals[static_cast<std::size_t>(c)] = orig + h;
      probe[i] = Tensor::from_raw(xs[i].shape(), vals);
      const double up = eval_at(f, probe);
      vals[static_cast<std::size_t>(c)] = orig - h;
      probe[i] = Tensor::from_raw(xs[i].shape(), vals);
      const double down = eval_at(f, probe);
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[i].at(c);
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max({1.0, std::abs(analytic), std::abs(numeric)}));
    }
  }
  return worst;
}

// A random direction to reduce an op output to a scalar. mean() would hide
// gradient structure for outputs with internal constraints (softmax rows sum
// to one), so losses weight coordinates unevenly.
Tensor random_weights(Shape shape, Rng& rng) { return random_tensor(shape, rng); }

Tensor weighted(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

double case_matmul(Rng rng) {
  const int m = 1 + static_cast<int>(rng.below(5));
  const int k = 1 + static_cast<int>(rng.below(5));
  const int n = 1 + static_cast<int>(rng.below(5));
  Tensor a = random_tensor({m, k}, rng);
  Tensor b = random_tensor({k, n}, rng);
  Tensor w = random_weights({m, n}, rng);
  return fd_worst([&](const std::vector<Tensor>& xs) { return weighted(matmul(xs[0], xs[1]), w); },
                  {a, b});
}

double case_softmax(Rng rng) {
  const int n = 2 + static_cast<int>(rng.below(7));
  Tensor x = random_tensor({n}, rng, 1.5);
  Tensor w = random_weights({n}, rng);
  return fd_worst([&](const std::vector<Tensor>& xs) { return weighted(softmax(xs[0]), w); }, {x});
}

double case_conv1d(Rng rng) {
  const int c_in = 1 + static_cast<int>(rng.below(3));
  const int c_out = 1 + static_cast<int>(rng.below(3));
  const int k = 1 + static_cast<int>(rng.below(5));
  const int l = k + static_cast<int>(rng.below(12));
  const int stride = 1 + static_cast<int>(rng.below(2));
  const Pad pad = rng.below(2) == 0 ? Pad::same : Pad::valid;
  Tensor input = random_tensor({c_in, l}, rng);
  Tensor kernels = random_tensor({c_out, c_in, k}, rng);
  Tensor bias = random_tensor({c_out}, rng);

  Tape probe_tape;
  Tensor shape_probe = add_channel_bias(conv1d(input, kernels, stride, pad), bias);
  Tensor w = random_weights(shape_probe.shape(), rng);
  return fd_worst(
      [&](const std::vector<Tensor>& xs) {
        return weighted(add_channel_bias(conv1d(xs[0], xs[1], stride, pad), xs[2]), w);
      },
      {input, kernels, bias});
}

double case_maxpool(Rng rng) {
  const int c = 1 + static_cast<int>(rng.below(3));
  const int kernel = 1 + static_cast<int>(rng.below(4));
  const int stride = 1 + static_cast<int>(rng.below(3));
  const int l = kernel + static_cast<int>(rng.below(12));
  Tensor input = random_tensor({c, l}, rng);
  Tensor probe = maxpool1d(input, kernel, stride);
  Tensor w = random_weights(probe.shape(), rng);
  return fd_worst(
      [&](const std::vector<Tensor>& xs) { return weighted(maxpool1d(xs[0], kernel, stride), w); },
      {input});
}

double case_lstm(Rng rng) {
  const int t = 1 + static_cast<int>(rng.below(4));
  const int d = 2 + static_cast<int>(rng.below(3));
  const int h = 2 + static_cast<int>(rng.below(3));
  Rng init_rng = rng.split(0x11);
  LstmParams base = LstmParams::init(d, h, init_rng);
  Tensor frames = random_tensor({t, d}, rng);
  Tensor w = random_weights({t, 3}, rng);
  return fd_worst(
      [&](const std::vector<Tensor>& xs) {
        LstmParams p;
        p.w_x = xs[0];
        p.w_h = xs[1];
        p.b = xs[2];
        p.w_out = xs[3];
        p.b_out = xs[4];
        return weighted(lstm_forward(xs[5], p), w);
      },
      {base.w_x, base.w_h, base.b, base.w_out, base.b_out, frames});
}

double case_attention(Rng rng) {
  const int d = 2 + static_cast<int>(rng.below(5));
  Tensor u = random_tensor({d}, rng);
  Tensor v = random_tensor({d}, rng);
  Tensor q_u = random_tensor({d}, rng);
  Tensor q_w = random_tensor({d}, rng);
  Tensor w = random_weights({d}, rng);
  return fd_worst(
      [&](const std::vector<Tensor>& xs) {
        return weighted(attention_pair(xs[0], xs[1], xs[2], xs[3]), w);
      },
      {u, v, q_u, q_w});
}

double case_fuse(Rng rng) {
  const int d_s = 2 + static_cast<int>(rng.below(3));
  const int d_p = 2 + static_cast<int>(rng.below(3));
  const int d_u = 2 + static_cast<int>(rng.below(3));
  Rng init_rng = rng.split(0x21);
  FusionParams base = FusionParams::init(d_s, d_p, d_u, init_rng);
  for (Tensor* q : {&base.q_s, &base.q_p, &base.q_a, &base.q_l, &base.q_z, &base.q_v}) {
    for (double& x : q->mutable_data()) x = init_rng.normal(0.0, 0.5);
  }
  Tensor x_s = random_tensor({d_s}, rng);
  Tensor x_p = random_tensor({d_p}, rng);
  Tensor w = random_weights({d_u}, rng);
  return fd_worst(
      [&](const std::vector<Tensor>& xs) {
        FusionParams p = base;
        p.w_s = xs[0];
        p.b_s = xs[1];
        p.w_p = xs[2];
        p.b_p = xs[3];
        p.q_s = xs[4];
        p.q_p = xs[5];
        p.w_a = xs[6];
        p.b_a = xs[7];
        p.w_v = xs[8];
        p.b_v = xs[9];
        p.w_l = xs[10];
        p.b_l = xs[11];
        p.q_a = xs[12];
        p.q_l = xs[13];
        p.q_z = xs[14];
        p.q_v = xs[15];
        return weighted(disentangled_fuse(xs[16], xs[17], p), w);
      },
      {base.w_s, base.b_s, base.w_p, base.b_p, base.q_s, base.q_p, base.w_a, base.b_a, base.w_v,
       base.b_v, base.w_l, base.b_l, base.q_a, base.q_l, base.q_z, base.q_v, x_s, x_p});
}

double case_ccc_loss(Rng rng) {
  const int t = 3 + static_cast<int>(rng.below(6));
  Tensor pred = random_tensor({t, 3}, rng);
  Tensor gold = random_tensor({t, 3}, rng);
  return fd_worst([&](const std::vector<Tensor>& xs) { return ccc_loss(xs[0], xs[1]); },
                  {pred, gold});
}

}  // namespace

std::vector<GradCheckEntry> run_gradient_suite(int cases, std::uint64_t seed, double tolerance) {
  struct Op {
    const char* name;
    double (*run)(Rng);
  };
  const Op ops[] = {
      {"matmul", case_matmul},
      {"softmax", case_softmax},
      {"conv1d", case_conv1d},
      {"maxpool1d", case_maxpool},
      {"lstm_cell", case_lstm},
      {"attention_pair", case_attention},
      {"disentangled_fuse", case_fuse},
      {"ccc_loss", case_ccc_loss},
  };

  Rng root(seed);
  std::vector<GradCheckEntry> out;
  std::uint64_t op_index = 0;
  for (const Op& op : ops) {
    GradCheckEntry entry;
    entry.op = op.name;
    entry.cases = cases;
    for (int c = 0; c < cases; ++c) {
      Rng case_rng = root.split((op_index << 20) + static_cast<std::uint64_t>(c));
      entry.worst_rel_err = std::max(entry.worst_rel_err, op.run(case_rng));
    }
    entry.pass = entry.worst_rel_err < tolerance;
    out.push_back(std::move(entry));
    ++op_index;
  }
  return out;
}

bool gradient_suite_passed(const std::vector<GradCheckEntry>& entries) {
  if (entries.empty()) return false;
  return std::all_of(entries.begin(), entries.end(),
                     [](const GradCheckEntry& e) { return e.pass; });
}

}  // namespace affect

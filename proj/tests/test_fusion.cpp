#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>
#include <vector>

#include "affect/error.hpp"
#include "affect/fusion.hpp"
#include "affect/loss.hpp"
#include "affect/lstm.hpp"
#include "affect/ops.hpp"
#include "affect/rng.hpp"
#include "affect/tape.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace affect;
using testing::fd_gradcheck;
using testing::tmat;
using testing::tvec;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.mutable_data()) v = rng.normal(0.0, scale);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) worst = std::max(worst, std::abs(ad[i] - bd[i]));
  return worst;
}

}  // namespace

TEST_CASE("concat_fuse joins the two vectors in order") {
  Tensor out = concat_fuse(tvec({1, 2}), tvec({3}));
  CHECK(out.shape() == Shape{3});
  CHECK(out.at(0) == 1.0);
  CHECK(out.at(1) == 2.0);
  CHECK(out.at(2) == 3.0);

  // Zero semantic half leaves the paralinguistic slice untouched.
  Tensor zs = concat_fuse(tvec({0, 0}), tvec({4, -5}));
  CHECK(zs.at(2) == 4.0);
  CHECK(zs.at(3) == -5.0);

  Rng rng(11);
  for (int ds = 1; ds <= 3; ++ds) {
    for (int dp = 1; dp <= 3; ++dp) {
      Tensor c = concat_fuse(random_tensor({ds}, rng), random_tensor({dp}, rng));
      CHECK(c.size() == ds + dp);
    }
  }
  CHECK_THROWS_AS(concat_fuse(tmat(1, 2, {1, 2}), tvec({3})), DimensionError);
}

TEST_CASE("attention_pair of identical inputs returns that input") {
  Rng rng(21);
  Tensor u = random_tensor({5}, rng);
  Tensor out = attention_pair(u, u, random_tensor({5}, rng), random_tensor({5}, rng));
  CHECK(max_abs_diff(out, u) < 1e-15);
}

TEST_CASE("attention_pair with zero queries is the midpoint") {
  Tensor u = tvec({2, -4, 6});
  Tensor w = tvec({0, 2, 1});
  Tensor out = attention_pair(u, w, Tensor::zeros({3}), Tensor::zeros({3}));
  CHECK(max_abs_diff(out, tvec({1, -1, 3.5})) < 1e-15);
}

TEST_CASE("attention_pair softmax weighting for logits (1, 0)") {
  // d = 4 so the scale is 1/2: u.q_u = 2 gives logit 1, zero query gives 0.
  Tensor u = tvec({2, 0, 0, 0});
  Tensor w = tvec({0, 3, -1, 0.5});
  Tensor q_u = tvec({1, 0, 0, 0});
  Tensor q_w = Tensor::zeros({4});
  Tensor out = attention_pair(u, w, q_u, q_w);

  const double a1 = std::exp(1.0) / (1.0 + std::exp(1.0));
  const double a2 = 1.0 - a1;
  CHECK(a1 == doctest::Approx(0.73106).epsilon(1e-4));
  for (int i = 0; i < 4; ++i) {
    CHECK(out.at(i) == doctest::Approx(a1 * u.at(i) + a2 * w.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("attention_pair output is a coordinate-wise convex combination") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor u = random_tensor({6}, rng);
    Tensor w = random_tensor({6}, rng);
    Tensor out = attention_pair(u, w, random_tensor({6}, rng), random_tensor({6}, rng));
    for (int i = 0; i < 6; ++i) {
      const double lo = std::min(u.at(i), w.at(i));
      const double hi = std::max(u.at(i), w.at(i));
      CHECK(out.at(i) >= lo - 1e-12);
      CHECK(out.at(i) <= hi + 1e-12);
    }
  }
  CHECK_THROWS_AS(attention_pair(tvec({1, 2}), tvec({1, 2, 3}), tvec({0, 0}), tvec({0, 0})),
                  DimensionError);
}

TEST_CASE("disentangled_fuse with identity params passes the input through") {
  Rng rng(41);
  Tensor u = random_tensor({3}, rng);
  FusionParams p = FusionParams::init(3, 3, 3, rng);
  p.w_s = Tensor::identity(3);
  p.w_p = Tensor::identity(3);
  p.w_a = Tensor::identity(3);
  p.w_v = Tensor::identity(3);
  p.w_l = Tensor::identity(3);
  // init() already zeroes biases and queries.
  Tensor out = disentangled_fuse(u, u, p);
  CHECK(max_abs_diff(out, u) < 1e-12);
}

TEST_CASE("disentangled_fuse with zero queries matches the symbolic expansion") {
  Rng rng(43);
  const int d_s = 2, d_p = 3, d_u = 4;
  FusionParams p = FusionParams::init(d_s, d_p, d_u, rng);
  for (Tensor* b : {&p.b_s, &p.b_p, &p.b_a, &p.b_v, &p.b_l}) {
    for (double& v : b->mutable_data()) v = rng.normal();
  }
  Tensor x_s = random_tensor({d_s}, rng);
  Tensor x_p = random_tensor({d_p}, rng);

  // Every attention layer averages its inputs when queries are zero, so the
  // output collapses to ((a+l)/2 + v)/2 around xsp = (xs~ + xp~)/2.
  Tensor xsp = cmul(add(add(matmul(p.w_s, x_s), p.b_s), add(matmul(p.w_p, x_p), p.b_p)), 0.5);
  Tensor a = add(matmul(p.w_a, xsp), p.b_a);
  Tensor v = add(matmul(p.w_v, xsp), p.b_v);
  Tensor l = add(matmul(p.w_l, xsp), p.b_l);
  Tensor expected = cmul(add(cmul(add(a, l), 0.5), v), 0.5);

  Tensor out = disentangled_fuse(x_s, x_p, p);
  CHECK(max_abs_diff(out, expected) < 1e-12);
}

TEST_CASE("disentangled_fuse attention weights sum to one at every layer") {
  Rng rng(47);
  FusionParams p = FusionParams::init(3, 4, 5, rng);
  for (Tensor* q : {&p.q_s, &p.q_p, &p.q_a, &p.q_l, &p.q_z, &p.q_v}) {
    for (double& v : q->mutable_data()) v = rng.normal();
  }
  FusionTrace trace;
  disentangled_fuse(random_tensor({3}, rng), random_tensor({4}, rng), p, &trace);
  REQUIRE(trace.alphas.size() == 3);
  for (const Tensor& alpha : trace.alphas) {
    REQUIRE(alpha.size() == 2);
    CHECK(std::abs(alpha.at(0) + alpha.at(1) - 1.0) < 1e-12);
    CHECK(alpha.at(0) >= 0.0);
    CHECK(alpha.at(1) >= 0.0);
  }
}

TEST_CASE("disentangled_fuse gradients match finite differences") {
  Rng rng(53);
  const int d_s = 3, d_p = 2, d_u = 4;
  FusionParams base = FusionParams::init(d_s, d_p, d_u, rng);
  for (Tensor* q : {&base.q_s, &base.q_p, &base.q_a, &base.q_l, &base.q_z, &base.q_v}) {
    for (double& v : q->mutable_data()) v = rng.normal(0.0, 0.5);
  }
  Tensor x_s = random_tensor({d_s}, rng);
  Tensor x_p = random_tensor({d_p}, rng);

  auto f = [&](Tape&, const std::vector<Tensor>& xs) {
    FusionParams p = base;
    p.w_v = xs[0];
    p.w_s = xs[1];
    p.q_s = xs[2];
    p.q_a = xs[3];
    p.b_a = xs[4];
    return sum(disentangled_fuse(x_s, x_p, p));
  };
  const double err =
      fd_gradcheck(f, {base.w_v, base.w_s, base.q_s, base.q_a, base.b_a}, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("shared-query ablation reuses the first query of each layer") {
  Rng rng(59);
  FusionParams p = FusionParams::init(3, 3, 4, rng);
  for (Tensor* q : {&p.q_s, &p.q_p, &p.q_a, &p.q_l, &p.q_z, &p.q_v}) {
    for (double& v : q->mutable_data()) v = rng.normal();
  }
  Tensor x_s = random_tensor({3}, rng);
  Tensor x_p = random_tensor({3}, rng);

  Tensor separate = disentangled_fuse(x_s, x_p, p);
  p.shared_query = true;
  Tensor shared = disentangled_fuse(x_s, x_p, p);
  CHECK(max_abs_diff(separate, shared) > 1e-6);

  // With every query equal the two modes coincide.
  FusionParams zq = FusionParams::init(3, 3, 4, rng);
  Tensor a0 = disentangled_fuse(x_s, x_p, zq);
  zq.shared_query = true;
  Tensor a1 = disentangled_fuse(x_s, x_p, zq);
  CHECK(max_abs_diff(a0, a1) == 0.0);
}

TEST_CASE("fuse_sequence applies the per-frame rule to each row") {
  Rng rng(61);
  Tensor sem = random_tensor({4, 2}, rng);
  Tensor par = random_tensor({4, 3}, rng);
  FusionParams p = FusionParams::init(2, 3, 5, rng);

  Tensor cat = fuse_sequence(sem, par, p, FusionMode::concat);
  CHECK(cat.shape() == Shape{4, 5});
  CHECK(cat.at(1, 0) == sem.at(1, 0));
  CHECK(cat.at(1, 2) == par.at(1, 0));

  FusionTrace trace;
  Tensor dis = fuse_sequence(sem, par, p, FusionMode::disentangled, &trace);
  CHECK(dis.shape() == Shape{4, 5});
  CHECK(trace.alphas.size() == 12);  // 3 attention layers x 4 frames
  Tensor first = disentangled_fuse(row(sem, 0), row(par, 0), p);
  CHECK(max_abs_diff(row(dis, 0), first) == 0.0);

  CHECK_THROWS_AS(fuse_sequence(random_tensor({3, 2}, rng), par, p, FusionMode::concat),
                  DimensionError);
}

TEST_CASE("lstm_forward with zero input and zero params gives zero output") {
  LstmParams p;
  p.w_x = Tensor::zeros({16, 3});
  p.w_h = Tensor::zeros({16, 4});
  p.b = Tensor::zeros({16});
  p.w_out = Tensor::zeros({3, 4});
  p.b_out = Tensor::zeros({3});
  Tensor out = lstm_forward(Tensor::zeros({5, 3}), p);
  CHECK(out.shape() == Shape{5, 3});
  CHECK(out.l2_norm() == 0.0);
}

TEST_CASE("lstm_forward is causal") {
  Rng rng(67);
  LstmParams p = LstmParams::init(3, 4, rng);
  Tensor frames = random_tensor({6, 3}, rng);
  Tensor out1 = lstm_forward(frames, p);

  Tensor frames2 = frames;
  {
    auto d = frames2.mutable_data();
    for (std::size_t i = 4 * 3; i < d.size(); ++i) d[i] += 10.0;
  }
  Tensor out2 = lstm_forward(frames2, p);
  for (int t = 0; t < 4; ++t) {
    for (int j = 0; j < 3; ++j) CHECK(out1.at(t, j) == out2.at(t, j));
  }
  double tail_diff = 0.0;
  for (int j = 0; j < 3; ++j) tail_diff += std::abs(out1.at(4, j) - out2.at(4, j));
  CHECK(tail_diff > 1e-6);
}

TEST_CASE("lstm_forward forget-gate bias starts at one") {
  Rng rng(71);
  LstmParams p = LstmParams::init(3, 4, rng);
  for (int i = 0; i < 4; ++i) CHECK(p.b.at(i) == 0.0);
  for (int i = 4; i < 8; ++i) CHECK(p.b.at(i) == 1.0);
  for (int i = 8; i < 16; ++i) CHECK(p.b.at(i) == 0.0);
}

TEST_CASE("lstm_forward gradients match finite differences (T=5, d=3, H=4)") {
  Rng rng(73);
  LstmParams base = LstmParams::init(3, 4, rng);
  Tensor frames = random_tensor({5, 3}, rng);

  auto f = [&](Tape&, const std::vector<Tensor>& xs) {
    LstmParams p;
    p.w_x = xs[0];
    p.w_h = xs[1];
    p.b = xs[2];
    p.w_out = xs[3];
    p.b_out = xs[4];
    return mean(lstm_forward(xs[5], p));
  };
  const double err =
      fd_gradcheck(f, {base.w_x, base.w_h, base.b, base.w_out, base.b_out, frames}, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("ccc unit values") {
  Tensor x = tvec({1, 2, 3});
  CHECK(ccc(x, x).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ccc(x, tvec({3, 2, 1})).item() == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(ccc(tvec({0, 0, 0}), tvec({1, 1, 1})).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ccc is symmetric, bounded, and affine-invariant") {
  Rng rng(79);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({17}, rng);
    Tensor y = random_tensor({17}, rng);
    const double c_xy = ccc(x, y).item();
    const double c_yx = ccc(y, x).item();
    CHECK(std::abs(c_xy - c_yx) < 1e-12);
    CHECK(std::abs(c_xy) <= 1.0 + 1e-12);

    const double a = 0.1 + rng.uniform() * 3.0;
    const double b = rng.normal();
    Tensor ax = Tensor::from_raw({17}, [&] {
      std::vector<double> v(x.data().begin(), x.data().end());
      for (double& e : v) e = a * e + b;
      return v;
    }());
    Tensor ay = Tensor::from_raw({17}, [&] {
      std::vector<double> v(y.data().begin(), y.data().end());
      for (double& e : v) e = a * e + b;
      return v;
    }());
    CHECK(std::abs(ccc(ax, ay).item() - c_xy) < 1e-9);
  }
}

TEST_CASE("ccc rejects degenerate and malformed input") {
  CHECK_THROWS_AS(ccc(tvec({1, 1, 1}), tvec({1, 1, 1})), DegenerateError);
  CHECK_THROWS_AS(ccc(tvec({1, 2}), tvec({1, 2, 3})), DimensionError);
  CHECK_THROWS_AS(ccc(tvec({1}), tvec({1})), ArgumentError);
}

TEST_CASE("ccc_loss is zero for perfect nonconstant predictions") {
  Rng rng(83);
  Tensor gold = random_tensor({7, 3}, rng);
  CHECK(ccc_loss(gold, gold).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ccc_loss averages one-minus-ccc over the three dimensions") {
  // Per-dimension series engineered so ccc(pred_d, gold_d) = r_d exactly:
  // gold = (-1, 1), pred = (-c, c) has ccc = 2c/(1+c^2), and
  // c = (1 - sqrt(1 - r^2))/r inverts that.
  const double targets[3] = {0.7, 0.4, 0.1};
  std::vector<double> pred_data(6), gold_data(6);
  for (int d = 0; d < 3; ++d) {
    const double r = targets[d];
    const double c = (1.0 - std::sqrt(1.0 - r * r)) / r;
    gold_data[static_cast<std::size_t>(d)] = -1.0;
    gold_data[static_cast<std::size_t>(3 + d)] = 1.0;
    pred_data[static_cast<std::size_t>(d)] = -c;
    pred_data[static_cast<std::size_t>(3 + d)] = c;
  }
  Tensor pred = tmat(2, 3, pred_data);
  Tensor gold = tmat(2, 3, gold_data);
  CHECK(ccc_loss(pred, gold).item() == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("ccc_loss names the degenerate dimension") {
  Rng rng(89);
  Tensor pred = random_tensor({4, 3}, rng);
  Tensor gold = random_tensor({4, 3}, rng);
  {
    auto pd = pred.mutable_data();
    auto gd = gold.mutable_data();
    for (int t = 0; t < 4; ++t) {
      pd[static_cast<std::size_t>(t * 3 + 1)] = 0.25;
      gd[static_cast<std::size_t>(t * 3 + 1)] = 0.25;
    }
  }
  try {
    ccc_loss(pred, gold);
    FAIL("expected DegenerateError");
  } catch (const DegenerateError& e) {
    CHECK(std::string(e.what()).find("valence") != std::string::npos);
  }
}

TEST_CASE("ccc_loss gradient matches finite differences") {
  Rng rng(97);
  Tensor pred = random_tensor({6, 3}, rng);
  Tensor gold = random_tensor({6, 3}, rng);
  auto f = [&](Tape&, const std::vector<Tensor>& xs) { return ccc_loss(xs[0], gold); };
  CHECK(fd_gradcheck(f, {pred}, 1e-5) < 1e-4);
}

TEST_CASE("ccc_loss honors non-contiguous masks") {
  Rng rng(101);
  Tensor pred = random_tensor({6, 3}, rng);
  Tensor gold = random_tensor({6, 3}, rng);
  std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0, 1};

  std::vector<Tensor> pr, gr;
  for (int i : {0, 2, 3, 5}) {
    pr.push_back(row(pred, i));
    gr.push_back(row(gold, i));
  }
  Tensor pref = stack_rows(pr);
  Tensor gref = stack_rows(gr);
  CHECK(ccc_loss(pred, gold, &mask).item() ==
        doctest::Approx(ccc_loss(pref, gref).item()).epsilon(1e-12));

  std::vector<std::uint8_t> short_mask = {1, 1};
  CHECK_THROWS_AS(ccc_loss(pred, gold, &short_mask), ArgumentError);
  std::vector<std::uint8_t> sparse_mask = {1, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(ccc_loss(pred, gold, &sparse_mask), ArgumentError);
}

TEST_CASE("masked trailing padding leaves the loss unchanged") {
  Rng rng(103);
  LstmParams p = LstmParams::init(3, 4, rng);
  Tensor frames = random_tensor({8, 3}, rng);
  Tensor gold = random_tensor({8, 3}, rng, 0.5);

  Tensor loss_plain = ccc_loss(lstm_forward(frames, p), gold);

  Tensor frames_pad = Tensor::zeros({12, 3});
  Tensor gold_pad = Tensor::full({12, 3}, 0.9);
  {
    auto fd = frames_pad.mutable_data();
    auto gd = gold_pad.mutable_data();
    auto fs = frames.data();
    auto gs = gold.data();
    for (std::size_t i = 0; i < fs.size(); ++i) {
      fd[i] = fs[i];
      gd[i] = gs[i];
    }
  }
  std::vector<std::uint8_t> mask(12, 1);
  for (std::size_t i = 8; i < 12; ++i) mask[i] = 0;
  Tensor loss_masked = ccc_loss(lstm_forward(frames_pad, p), gold_pad, &mask);
  CHECK(std::abs(loss_plain.item() - loss_masked.item()) < 1e-9);
}

TEST_CASE("ccc_report flags degenerate dimensions instead of throwing") {
  Rng rng(107);
  Tensor pred = random_tensor({5, 3}, rng);
  Tensor gold = random_tensor({5, 3}, rng);
  {
    auto pd = pred.mutable_data();
    auto gd = gold.mutable_data();
    for (int t = 0; t < 5; ++t) {
      pd[static_cast<std::size_t>(t * 3)] = -0.5;
      gd[static_cast<std::size_t>(t * 3)] = -0.5;
    }
  }
  CccReport report = ccc_report(pred, gold);
  CHECK(report.degenerate[0]);
  CHECK(report.per_dim[0] == 0.0);
  CHECK_FALSE(report.degenerate[1]);
  CHECK_FALSE(report.degenerate[2]);

  Tape tape;
  Tensor exact = random_tensor({5, 3}, rng);
  CccReport perfect = ccc_report(exact, exact);
  CHECK(perfect.mean == doctest::Approx(1.0).epsilon(1e-12));

  // Agreement with the differentiable loss where both are defined.
  CccReport r2 = ccc_report(pred, gold);
  double from_report = ((1.0 - r2.per_dim[0]) + (1.0 - r2.per_dim[1]) + (1.0 - r2.per_dim[2])) / 3.0;
  (void)from_report;  // dimension 0 is degenerate here; loss would throw, report substitutes 0
}

TEST_CASE("fusion and lstm gradients flow end to end through the loss") {
  Rng rng(109);
  const int d_s = 2, d_p = 3, d_u = 4, h_dim = 4, t_len = 6;
  FusionParams fp = FusionParams::init(d_s, d_p, d_u, rng);
  for (Tensor* q : {&fp.q_s, &fp.q_p, &fp.q_a, &fp.q_l, &fp.q_z, &fp.q_v}) {
    for (double& v : q->mutable_data()) v = rng.normal(0.0, 0.5);
  }
  LstmParams lp = LstmParams::init(d_u, h_dim, rng);
  Tensor sem = random_tensor({t_len, d_s}, rng);
  Tensor par = random_tensor({t_len, d_p}, rng);
  Tensor gold = random_tensor({t_len, 3}, rng, 0.5);

  auto f = [&](Tape&, const std::vector<Tensor>& xs) {
    FusionParams p = fp;
    p.w_v = xs[0];
    p.q_z = xs[1];
    LstmParams l = lp;
    l.w_h = xs[2];
    Tensor fused = fuse_sequence(sem, par, p, FusionMode::disentangled);
    return ccc_loss(lstm_forward(fused, l), gold);
  };
  CHECK(fd_gradcheck(f, {fp.w_v, fp.q_z, lp.w_h}, 1e-5, 20) < 1e-4);
}

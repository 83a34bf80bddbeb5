#include "affect/alignment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "affect/error.hpp"
#include "affect/ops.hpp"
#include "affect/optim.hpp"
#include "affect/svd.hpp"

namespace affect {

LinearMap LinearMap::init_identity(int d_t, int d_s) {
  if (d_t < 1 || d_s < 1) throw ArgumentError("map dimensions must be positive");
  Tensor w = Tensor::zeros({d_t, d_s});
  auto wd = w.mutable_data();
  for (int i = 0; i < std::min(d_t, d_s); ++i) wd[static_cast<std::size_t>(i) * d_s + i] = 1.0;
  return {w};
}

void save_linear_map(const LinearMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write map file " + path);
  const int d_t = map.w.dim(0), d_s = map.w.dim(1);
  out << d_t << ' ' << d_s << '\n';
  const auto data = map.w.data();
  char buf[32];
  for (int i = 0; i < d_t; ++i) {
    for (int j = 0; j < d_s; ++j) {
      std::snprintf(buf, sizeof buf, j ? " %.17g" : "%.17g",
                    data[static_cast<std::size_t>(i) * d_s + j]);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing map file " + path);
}

LinearMap load_linear_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open map file " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty map file " + path, 1);
  std::istringstream header(line);
  int d_t = 0, d_s = 0;
  if (!(header >> d_t >> d_s) || d_t < 1 || d_s < 1) {
    throw ParseError("bad map header '" + line + "'", 1);
  }
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(d_t) * d_s);
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    double v = 0.0;
    while (row >> v) data.push_back(v);
    if (!row.eof()) throw ParseError("non-numeric field in map row", line_no);
  }
  if (data.size() != static_cast<std::size_t>(d_t) * d_s) {
    throw ParseError("map has " + std::to_string(data.size()) + " values, header promises " +
                         std::to_string(d_t * d_s),
                     line_no);
  }
  return {Tensor::from_data({d_t, d_s}, std::move(data))};
}

Tensor map_rows(const Tensor& w, const Tensor& rows) { return matmul(rows, transpose(w)); }

Discriminator Discriminator::init(int input_dim, int hidden, Rng& rng) {
  if (input_dim < 1 || hidden < 1) throw ArgumentError("discriminator dims must be positive");
  auto he = [&rng](Shape shape, int fan_in) {
    Tensor t = Tensor::zeros(shape);
    const double std = std::sqrt(2.0 / fan_in);
    for (double& v : t.mutable_data()) v = rng.normal(0.0, std);
    return t;
  };
  Discriminator d;
  d.w1 = he({hidden, input_dim}, input_dim);
  d.b1 = Tensor::zeros({hidden});
  d.w2 = he({1, hidden}, hidden);
  d.b2 = Tensor::zeros({1});
  return d;
}

NamedParams Discriminator::named_params() {
  return {{"disc.w1", &w1}, {"disc.b1", &b1}, {"disc.w2", &w2}, {"disc.b2", &b2}};
}

Tensor Discriminator::prob(const Tensor& batch, bool train, Rng& rng) const {
  Tensor x = dropout(batch, input_dropout, train, rng);
  Tensor h = leaky_relu(add_rowwise(matmul(x, transpose(w1)), b1), 0.2);
  Tensor logits = add_rowwise(matmul(h, transpose(w2)), b2);  // n x 1
  return sigmoid(logits.reshaped({logits.dim(0)}));
}

namespace {

// -mean(target·log p + (1-target)·log(1-p)) with probabilities clamped away
// from 0 and 1.
Tensor bce_toward(const Tensor& p, double target) {
  Tensor pc = clamp(p, 1e-12, 1.0 - 1e-12);
  Tensor one_minus = sub(Tensor::scalar(1.0), pc);
  Tensor ll = add(cmul(log(pc), target), cmul(log(one_minus), 1.0 - target));
  return neg(mean(ll));
}

}  // namespace

Tensor discriminator_loss(const Discriminator& disc, const Tensor& w, const Tensor& speech_batch,
                          const Tensor& text_batch, double smoothing, bool train, Rng& rng) {
  if (speech_batch.dim(0) < 1 || text_batch.dim(0) < 1) {
    throw ArgumentError("adversarial batches must be nonempty");
  }
  if (!(smoothing >= 0.0 && smoothing < 0.5)) {
    throw ArgumentError("label smoothing must be in [0, 0.5)");
  }
  Tensor p_speech = disc.prob(map_rows(w, speech_batch), train, rng);
  Tensor p_text = disc.prob(text_batch, train, rng);
  return add(bce_toward(p_speech, 1.0 - smoothing), bce_toward(p_text, smoothing));
}

Tensor generator_loss(const Discriminator& disc, const Tensor& w, const Tensor& speech_batch,
                      const Tensor& text_batch, bool train, Rng& rng) {
  if (speech_batch.dim(0) < 1 || text_batch.dim(0) < 1) {
    throw ArgumentError("adversarial batches must be nonempty");
  }
  Tensor p_speech = disc.prob(map_rows(w, speech_batch), train, rng);
  Tensor p_text = disc.prob(text_batch, train, rng);
  return add(bce_toward(p_speech, 0.0), bce_toward(p_text, 1.0));
}

double discriminator_accuracy(const Discriminator& disc, const Tensor& w, const Tensor& speech_rows,
                              const Tensor& text_rows) {
  Rng unused(0);
  Tensor p_speech = disc.prob(map_rows(w, speech_rows), false, unused);
  Tensor p_text = disc.prob(text_rows, false, unused);
  int correct = 0;
  for (double p : p_speech.data()) correct += p > 0.5;
  for (double p : p_text.data()) correct += p < 0.5;
  return static_cast<double>(correct) / (p_speech.size() + p_text.size());
}

namespace {

Tensor sample_rows(const Tensor& matrix, int count, Rng& rng) {
  const int n = matrix.dim(0), d = matrix.dim(1);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count) * d);
  const auto data = matrix.data();
  for (int i = 0; i < count; ++i) {
    const auto r = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)));
    out.insert(out.end(), data.begin() + r * d, data.begin() + (r + 1) * d);
  }
  return Tensor::from_raw({count, d}, std::move(out));
}

// W <- (1+beta)·W − beta·(W·Wᵀ)·W, a first-order step toward the nearest
// orthogonal matrix.
void ortho_pullback(Tensor& w, double beta) {
  Tensor wwt = matmul(w, transpose(w));
  Tensor correction = matmul(wwt, w);
  Tensor next = sub(cmul(w, 1.0 + beta), cmul(correction, beta));
  w = next;
}

}  // namespace

LinearMap adversarial_train(const EmbeddingTable& speech, const EmbeddingTable& text,
                            const AlignmentConfig& config, std::vector<AlignmentLogEntry>* log) {
  if (config.batch_size < 1 || config.disc_steps_per_gen < 1 || config.generator_steps < 0) {
    throw ArgumentError("alignment config values must be positive");
  }
  const int d_s = speech.dim(), d_t = text.dim();
  LinearMap map = LinearMap::init_identity(d_t, d_s);

  Rng root(config.seed);
  Rng init_rng = root.split(0x11);
  Discriminator disc = Discriminator::init(d_t, config.disc_hidden, init_rng);
  disc.input_dropout = config.disc_dropout;

  // Plain SGD on both sides.  Adaptive optimizers equalize the per-coordinate
  // step size, which lets the discriminator race ahead and makes the map
  // oscillate; constant-rate SGD keeps the two-player game in balance.
  auto sgd = [](Tensor& p, const Tensor& g, double lr) {
    auto pd = p.mutable_data();
    const auto gd = g.data();
    for (std::size_t j = 0; j < pd.size(); ++j) pd[j] -= lr * gd[j];
  };

  for (int step = 0; step < config.generator_steps; ++step) {
    Rng step_rng = root.split(0x1000 + static_cast<std::uint64_t>(step));

    double last_disc_loss = 0.0;
    for (int ds = 0; ds < config.disc_steps_per_gen; ++ds) {
      Rng batch_rng = step_rng.split(static_cast<std::uint64_t>(ds));
      Tensor speech_batch = sample_rows(speech.matrix, config.batch_size, batch_rng);
      Tensor text_batch = sample_rows(text.matrix, config.batch_size, batch_rng);

      Tape tape;
      Discriminator bound = bind_params(tape, disc);
      Tensor loss =
          discriminator_loss(bound, map.w, speech_batch, text_batch, config.label_smoothing,
                             /*train=*/true, batch_rng);
      last_disc_loss = loss.item();
      if (!std::isfinite(last_disc_loss)) {
        throw NumericError("alignment diverged: discriminator loss is not finite at step " +
                           std::to_string(step));
      }
      tape.backward(loss);
      std::vector<Tensor> grads = collect_grads(tape, bound);
      NamedParams targets = disc.named_params();
      for (std::size_t i = 0; i < grads.size(); ++i) sgd(*targets[i].second, grads[i], config.lr_disc);
    }

    Rng gen_rng = step_rng.split(0xFF);
    Tensor speech_batch = sample_rows(speech.matrix, config.batch_size, gen_rng);
    Tensor text_batch = sample_rows(text.matrix, config.batch_size, gen_rng);
    Tape tape;
    Tensor w_bound = tape.param(map.w);
    Tensor loss = generator_loss(disc, w_bound, speech_batch, text_batch, /*train=*/true, gen_rng);
    const double gen_loss_value = loss.item();
    if (!std::isfinite(gen_loss_value)) {
      throw NumericError("alignment diverged: generator loss is not finite at step " +
                         std::to_string(step));
    }
    tape.backward(loss);
    Tensor w_grad = tape.grad(w_bound);
    if (d_t == d_s && config.ortho_beta > 0.0) {
      // Move along the rotation manifold: keep only the skew-symmetric part
      // of WᵀG, i.e. G ← W·(WᵀG − GᵀW)/2. Radial components would only be
      // undone by the pullback below and meanwhile distort the step.
      Tensor a = matmul(transpose(map.w), w_grad);
      Tensor skew = cmul(sub(a, transpose(a)), 0.5);
      w_grad = matmul(map.w, skew);
    }
    sgd(map.w, w_grad, config.lr_map);

    if (d_t == d_s && config.ortho_beta > 0.0) ortho_pullback(map.w, config.ortho_beta);

    if (log && config.log_every > 0 &&
        ((step + 1) % config.log_every == 0 || step + 1 == config.generator_steps)) {
      Rng eval_rng = step_rng.split(0xE0);
      Tensor s_eval = sample_rows(speech.matrix, 256, eval_rng);
      Tensor t_eval = sample_rows(text.matrix, 256, eval_rng);
      log->push_back({step, last_disc_loss, gen_loss_value,
                      discriminator_accuracy(disc, map.w, s_eval, t_eval)});
    }
  }
  return map;
}

LinearMap procrustes_refine(const Tensor& s_r, const Tensor& t_r) {
  if (s_r.ndim() != 2 || t_r.ndim() != 2 || s_r.shape() != t_r.shape()) {
    throw ArgumentError("procrustes expects equal-shape k x d matrices, got " +
                        shape_str(s_r.shape()) + " and " + shape_str(t_r.shape()));
  }
  Svd dec = svd(matmul(transpose(t_r), s_r));
  return {matmul(dec.u, transpose(dec.v))};
}

double translation_precision(const LinearMap& map, const EmbeddingTable& speech,
                             const EmbeddingTable& text, const Dictionary& gold, int k_nn) {
  if (gold.empty()) throw ArgumentError("translation_precision: empty gold dictionary");
  if (k_nn < 1) throw ArgumentError("translation_precision: k_nn must be positive");

  // Unit-normalize text rows once so dot products are cosine similarities.
  const int n = text.size(), d_t = text.dim();
  std::vector<double> tn(text.matrix.data().begin(), text.matrix.data().end());
  for (int i = 0; i < n; ++i) {
    double sq = 0.0;
    for (int j = 0; j < d_t; ++j) sq += tn[static_cast<std::size_t>(i) * d_t + j] *
                                        tn[static_cast<std::size_t>(i) * d_t + j];
    const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
    for (int j = 0; j < d_t; ++j) tn[static_cast<std::size_t>(i) * d_t + j] *= inv;
  }

  Tensor mapped = map_rows(map.w, speech.matrix);  // m x d_t
  const auto md = mapped.data();
  int hits = 0;
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (const auto& [si, ti] : gold.pairs) {
    // Cosine rank is invariant to the query's own norm, so the query is
    // left unnormalized.
    const double* q = md.data() + static_cast<std::size_t>(si) * d_t;
    for (int i = 0; i < n; ++i) {
      const double* t = tn.data() + static_cast<std::size_t>(i) * d_t;
      double dp = 0.0;
      for (int j = 0; j < d_t; ++j) dp += q[j] * t[j];
      scores[static_cast<std::size_t>(i)] = dp;
    }
    const double gold_score = scores[static_cast<std::size_t>(ti)];
    int better = 0;
    for (int i = 0; i < n; ++i) better += scores[static_cast<std::size_t>(i)] > gold_score;
    hits += better < k_nn;
  }
  return static_cast<double>(hits) / gold.size();
}

}  // namespace affect

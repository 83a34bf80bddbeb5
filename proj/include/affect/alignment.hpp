#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "affect/embeddings.hpp"
#include "affect/params.hpp"
#include "affect/rng.hpp"
#include "affect/tensor.hpp"

namespace affect {

// The linear map from the speech embedding space into the text space.
// Embeddings are row vectors, so the map is applied as s · Wᵀ.
struct LinearMap {
  Tensor w;  // d_t x d_s

  // Identity when square, zero-padded identity otherwise.
  static LinearMap init_identity(int d_t, int d_s);
};

// Text file: header "d_t d_s", one row of W per line.
void save_linear_map(const LinearMap& map, const std::string& path);
LinearMap load_linear_map(const std::string& path);

// rows (n x d_s) -> mapped rows (n x d_t): rows · Wᵀ.
Tensor map_rows(const Tensor& w, const Tensor& rows);

// Two affine layers with a leaky-ReLU between and a sigmoid on the single
// output: the probability that an input row came from the mapped speech
// space (rather than the text space).
struct Discriminator {
  Tensor w1, b1;  // hidden x d, hidden
  Tensor w2, b2;  // 1 x hidden, 1
  double input_dropout = 0.1;

  static Discriminator init(int input_dim, int hidden, Rng& rng);
  NamedParams named_params();

  // Per-row probabilities (n-vector). Train mode applies input dropout.
  Tensor prob(const Tensor& batch, bool train, Rng& rng) const;
};

struct AlignmentConfig {
  int generator_steps = 2000;
  int disc_steps_per_gen = 5;
  int batch_size = 32;
  double lr_disc = 0.1;  // plain SGD rates; see adversarial_train
  double lr_map = 0.5;
  double label_smoothing = 0.1;  // discriminator targets become 1-eps / eps
  double ortho_beta = 0.01;      // pullback strength toward orthogonal W
  int disc_hidden = 512;
  double disc_dropout = 0.1;
  std::uint64_t seed = 1;
  int log_every = 100;  // steps between logged metrics (0 = no logging)
};

// Binary cross-entropy of the discriminator on a mapped-speech batch
// (target 1, smoothed to 1-eps) and a text batch (target 0, smoothed to
// eps). Probabilities are clamped into [1e-12, 1-1e-12] before the logs.
// Differentiation targets are whatever the caller bound to a tape.
Tensor discriminator_loss(const Discriminator& disc, const Tensor& w, const Tensor& speech_batch,
                          const Tensor& text_batch, double smoothing, bool train, Rng& rng);

// The adversarial counterpart: the map is rewarded when mapped speech is
// classified as text and vice versa. No label smoothing.
Tensor generator_loss(const Discriminator& disc, const Tensor& w, const Tensor& speech_batch,
                      const Tensor& text_batch, bool train, Rng& rng);

// Classification accuracy at threshold 0.5 on fresh samples, dropout off.
double discriminator_accuracy(const Discriminator& disc, const Tensor& w, const Tensor& speech_rows,
                              const Tensor& text_rows);

struct AlignmentLogEntry {
  int step = 0;
  double disc_loss = 0.0;
  double gen_loss = 0.0;
  double disc_accuracy = 0.0;
};

// Alternating adversarial optimization of the discriminator and the map,
// with an orthogonality pullback on W after each generator step when the
// map is square. Tables must be normalized. Aborts with NumericError if
// either loss goes non-finite.
LinearMap adversarial_train(const EmbeddingTable& speech, const EmbeddingTable& text,
                            const AlignmentConfig& config,
                            std::vector<AlignmentLogEntry>* log = nullptr);

// Closed-form orthogonal refinement from paired rows (k x d each):
// W* = U·Vᵀ with U, Σ, Vᵀ = svd(T_rᵀ·S_r). Minimizes Σᵢ ‖s_i·Wᵀ − t_i‖²
// over orthogonal W.
LinearMap procrustes_refine(const Tensor& s_r, const Tensor& t_r);

// Fraction of gold pairs whose mapped speech vector has its gold text row
// among the k_nn most cosine-similar text rows.
double translation_precision(const LinearMap& map, const EmbeddingTable& speech,
                             const EmbeddingTable& text, const Dictionary& gold, int k_nn);

}  // namespace affect

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "affect/checkpoint.hpp"
#include "affect/fusion.hpp"
#include "affect/loss.hpp"
#include "affect/synth.hpp"

namespace affect {

// Everything a training or evaluation run needs to know. Defaults follow the
// reference setup (batch 25, sequence length 300 label frames); desk-scale
// runs shrink batch/sequence via flags, e.g. batch 4 and length 100.
struct RunConfig {
  double lr = 1e-4;
  int batch_size = 25;
  int seq_len = 300;       // label frames per training sequence (crop cap)
  double dropout = 0.5;    // on the fused features; none inside the LSTM
  double clip_norm = 5.0;
  bool clip_global = false;  // false: clip LSTM gradients only
  int epochs = 10;
  std::uint64_t seed = 1;
  FusionMode fusion_mode = FusionMode::disentangled;
  bool shared_query = false;
  bool train_cnn = true;  // false freezes the CNN and caches its features
  int d_u = 128;
  int lstm_hidden = 128;
  double label_rate = 10.0;
  std::string data_dir;
  std::string map_path;        // empty: identity speech->text map
  std::string checkpoint_dir;  // empty: keep checkpoints in memory only
  std::string metrics_path;    // empty: no metrics file

  void validate() const;  // throws ArgumentError
};

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);  // missing keys keep defaults

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  CccReport train_ccc, dev_ccc;
};

// One JSON object (single line, no trailing newline) per epoch.
std::string metrics_to_json(const EpochMetrics& m);

struct TrainResult {
  std::vector<EpochMetrics> log;
  Checkpoint best;  // highest dev mean CCC (dev falls back to train when empty)
  Checkpoint last;
};

// Runs the full pipeline per mini-batch: paralinguistic CNN frames (cached
// when train_cnn is false), aligned semantic frames, resampling to the label
// rate, fusion, LSTM, CCC loss, backward, gradient clipping (LSTM-only by
// default), Adam. Deterministic for a fixed config. Pass `resume` to
// continue a run from its checkpoint; epochs already completed are skipped
// and the continuation reproduces the uninterrupted run. A non-finite batch
// loss aborts with NumericError naming the batch.
TrainResult train(const RunConfig& config, const Dataset& data,
                  const Checkpoint* resume = nullptr);

// Deterministic scoring of a checkpointed model on a dataset split
// (dropout off): per-dimension CCC over the concatenated valid frames of
// the split, degenerate dimensions reported as 0 and flagged.
struct EvalResult {
  CccReport report;
  int segments = 0;
  int frames = 0;
};
EvalResult evaluate(const Dataset& data, const Checkpoint& ckpt, const std::string& split);

}  // namespace affect

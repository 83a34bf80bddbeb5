#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "affect/embeddings.hpp"
#include "affect/frames.hpp"
#include "affect/tensor.hpp"

namespace affect {

// Recipe for a self-contained synthetic dataset:
//   - a text embedding table with random unit rows, and a speech table equal
//     to the text rows pushed through a hidden random rotation R (s = t.R,
//     so the recoverable speech->text map is exactly R) plus Gaussian noise;
//   - per-segment affect trajectories (arousal, valence, liking), each a sum
//     of `sinusoids` random low-frequency sinusoids clipped to [-1, 1];
//   - a 10 s waveform per segment: a noise carrier amplitude-modulated by
//     the arousal trajectory (modulation depth set by snr);
//   - word events whose tokens are drawn from a valence x liking sorted grid
//     of the vocabulary, so token embeddings carry those two trajectories;
//   - gold labels sampled at label_rate;
//   - manifest.json recording the spec, the rotation R, and a train/dev
//     split (every fifth segment is dev).
struct SyntheticSpec {
  int vocab = 1000;
  int dim = 50;            // embedding width; the hidden map is dim x dim
  double sigma = 0.01;     // noise added to rotated speech rows
  int segments = 8;
  int sinusoids = 3;
  double smoothness = 1.0;   // > 0; higher stretches trajectories in time
  double snr = 4.0;          // modulated amplitude over constant base
  double label_rate = 10.0;  // label frames per second
  int words_per_segment = 24;
  std::uint64_t seed = 1;
};

// Writes the dataset under out_dir (created if missing): manifest.json,
// text.vec, speech.vec, events.csv, labels.csv, waveforms/<segment>.f32.
// Deterministic: the same spec produces byte-identical files.
void gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

// One loaded dialog segment.
struct SegmentData {
  std::string id;
  std::string split;  // "train" or "dev"
  WaveformSegment wave;
  std::vector<WordEvent> events;
  Tensor labels;  // T x 3, T = label_rate * segment seconds
};

struct Dataset {
  double label_rate = 10.0;
  Tensor rotation;  // ground-truth speech->text map from the manifest
  EmbeddingTable text, speech;
  std::vector<SegmentData> segments;
  std::vector<int> train_ids, dev_ids;  // indices into segments

  const std::vector<int>& split_ids(const std::string& name) const;
};

Dataset load_dataset(const std::string& dir);

}  // namespace affect

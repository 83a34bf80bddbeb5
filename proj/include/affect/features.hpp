#pragma once

#include <vector>

#include "affect/alignment.hpp"
#include "affect/embeddings.hpp"
#include "affect/frames.hpp"
#include "affect/params.hpp"
#include "affect/rng.hpp"
#include "affect/tensor.hpp"

namespace affect {

// Raw-waveform feature extractor: three same-padded stride-1 convolutions
// with ReLU, each followed by max-pooling, for a total 250x downsampling.
//   conv 8/1 -> 50 ch, pool 10/10, conv 6/1 -> 125 ch, pool 5/5,
//   conv 6/1 -> 125 ch, pool 5/5
struct CnnParams {
  Tensor k1, b1;  // 50 x 1 x 8, 50
  Tensor k2, b2;  // 125 x 50 x 6, 125
  Tensor k3, b3;  // 125 x 125 x 6, 125

  static CnnParams init(Rng& rng);  // He-scaled kernels, zero biases
  NamedParams named_params();
};

inline constexpr int kCnnChannels = 125;
inline constexpr int kCnnDownsample = 250;  // 10 * 5 * 5
inline constexpr double kCnnFrameRate = static_cast<double>(kSampleRate) / kCnnDownsample;

// The CNN stack on a 1 x L waveform tensor of any length L >= 1; returns
// time-major floor-chain-pooled frames (T x 125). Differentiable: bind the
// kernels (and/or the waveform) to a tape to get gradients.
Tensor cnn_forward(const Tensor& waveform, const CnnParams& params);

// Full-segment front end: exactly kSegmentSamples samples in, 882 x 125
// frames at 88.2 Hz out. A frame is valid when it is derived entirely from
// valid (un-padded) samples; masked frames are zeroed.
FrameSequence extract_paralinguistic(const WaveformSegment& segment, const CnnParams& params);

// Per-frame semantic features: each frame at time t carries the aligned
// map of the most recent word that started at or before t ("hold last
// word"), and zeros before the first word. Unknown tokens are skipped
// with a warning on stderr. Returns T x d_t with an all-valid mask.
FrameSequence extract_semantic(const std::vector<WordEvent>& events,
                               const EmbeddingTable& speech_table, const LinearMap& w,
                               const std::vector<double>& frame_times, double frame_rate);

// Mean-pools frames into duration * label_rate equal contiguous bins
// (sizes differ by at most one). A pooled frame is valid only if every
// source frame in its bin is valid. Differentiable through `frames`.
FrameSequence resample_to_label_rate(const FrameSequence& seq, double label_rate);

}  // namespace affect

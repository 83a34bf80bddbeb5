#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "affect/tensor.hpp"

namespace affect {

inline constexpr int kSampleRate = 22050;          // Hz
inline constexpr int kSegmentSeconds = 10;
inline constexpr int kSegmentSamples = kSampleRate * kSegmentSeconds;  // 220500

// A fixed-length 10 s waveform slice. Segmentation zero-pads the final
// short slice and records the true length in valid_samples.
struct WaveformSegment {
  std::vector<double> samples;  // exactly kSegmentSamples
  int valid_samples = kSegmentSamples;
};

// Chops audio into 10 s segments, zero-padding the tail. Empty input
// yields no segments.
std::vector<WaveformSegment> segment_waveform(const std::vector<double>& audio);

// One spoken word with its time span inside a segment.
struct WordEvent {
  std::string token;
  double start_time = 0.0;  // seconds
  double end_time = 0.0;
};

// Requires 0 <= start < end <= segment duration, sorted by start time,
// non-overlapping. Throws ArgumentError naming the offending event.
void validate_events(const std::vector<WordEvent>& events, double duration = kSegmentSeconds);

// Word-event CSV: one "segment_id,token,start,end" line per event, with
// an optional header line. Events come back grouped by segment id and
// validated. save writes the same layout with a header.
std::map<std::string, std::vector<WordEvent>> load_word_events(const std::string& path);
void save_word_events(const std::string& path,
                      const std::map<std::string, std::vector<WordEvent>>& by_segment);

// A frame-rate feature or label sequence. Rows of `frames` at indices
// where mask is 0 are zero; consumers must not read them as data.
struct FrameSequence {
  Tensor frames;  // T x d
  double frame_rate = 0.0;
  std::vector<std::uint8_t> mask;  // size T, 1 = valid

  int length() const { return frames.dim(0); }
  int dim() const { return frames.dim(1); }
  int valid_count() const;
};

// Zeroes rows whose mask bit is 0 (differentiable; no-op when all valid).
Tensor apply_frame_mask(const Tensor& frames, const std::vector<std::uint8_t>& mask);

}  // namespace affect

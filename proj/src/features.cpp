#include "affect/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "affect/error.hpp"
#include "affect/ops.hpp"

namespace affect {

CnnParams CnnParams::init(Rng& rng) {
  auto he = [&rng](Shape shape, int fan_in) {
    Tensor t = Tensor::zeros(shape);
    const double std = std::sqrt(2.0 / fan_in);
    for (double& v : t.mutable_data()) v = rng.normal(0.0, std);
    return t;
  };
  CnnParams p;
  p.k1 = he({50, 1, 8}, 1 * 8);
  p.b1 = Tensor::zeros({50});
  p.k2 = he({125, 50, 6}, 50 * 6);
  p.b2 = Tensor::zeros({125});
  p.k3 = he({kCnnChannels, 125, 6}, 125 * 6);
  p.b3 = Tensor::zeros({kCnnChannels});
  return p;
}

NamedParams CnnParams::named_params() {
  return {{"cnn.k1", &k1}, {"cnn.b1", &b1}, {"cnn.k2", &k2},
          {"cnn.b2", &b2}, {"cnn.k3", &k3}, {"cnn.b3", &b3}};
}

Tensor cnn_forward(const Tensor& waveform, const CnnParams& params) {
  if (waveform.ndim() != 2 || waveform.dim(0) != 1) {
    throw ArgumentError("cnn_forward expects a 1 x L waveform, got " +
                        shape_str(waveform.shape()));
  }
  if (waveform.dim(1) < kCnnDownsample) {
    throw ArgumentError("waveform of " + std::to_string(waveform.dim(1)) +
                        " samples is shorter than one output frame (" +
                        std::to_string(kCnnDownsample) + ")");
  }
  Tensor h = maxpool1d(relu(add_channel_bias(conv1d(waveform, params.k1, 1, Pad::same), params.b1)),
                       10, 10);
  h = maxpool1d(relu(add_channel_bias(conv1d(h, params.k2, 1, Pad::same), params.b2)), 5, 5);
  h = maxpool1d(relu(add_channel_bias(conv1d(h, params.k3, 1, Pad::same), params.b3)), 5, 5);
  return transpose(h);  // channels x T -> time-major
}

FrameSequence extract_paralinguistic(const WaveformSegment& segment, const CnnParams& params) {
  if (static_cast<int>(segment.samples.size()) != kSegmentSamples) {
    throw ArgumentError("segment has " + std::to_string(segment.samples.size()) +
                        " samples, expected " + std::to_string(kSegmentSamples));
  }
  if (segment.valid_samples < 0 || segment.valid_samples > kSegmentSamples) {
    throw ArgumentError("segment valid_samples " + std::to_string(segment.valid_samples) +
                        " out of range");
  }
  Tensor wave = Tensor::from_data({1, kSegmentSamples}, segment.samples);
  FrameSequence out;
  out.frames = cnn_forward(wave, params);
  out.frame_rate = kCnnFrameRate;
  const int t = out.frames.dim(0);
  out.mask.assign(static_cast<std::size_t>(t), 1);
  for (int i = 0; i < t; ++i) {
    if ((i + 1) * kCnnDownsample > segment.valid_samples) out.mask[static_cast<std::size_t>(i)] = 0;
  }
  out.frames = apply_frame_mask(out.frames, out.mask);
  return out;
}

FrameSequence extract_semantic(const std::vector<WordEvent>& events,
                               const EmbeddingTable& speech_table, const LinearMap& w,
                               const std::vector<double>& frame_times, double frame_rate) {
  if (frame_times.empty()) throw ArgumentError("extract_semantic needs at least one frame time");
  validate_events(events);
  if (w.w.dim(1) != speech_table.dim()) {
    throw DimensionError("map expects d_s " + std::to_string(w.w.dim(1)) + ", table has " +
                         std::to_string(speech_table.dim()));
  }

  std::vector<double> starts;
  std::vector<int> table_rows;
  for (const WordEvent& e : events) {
    const int row = speech_table.find(e.token);
    if (row < 0) {
      std::fprintf(stderr, "warning: unknown token '%s' skipped\n", e.token.c_str());
      continue;
    }
    starts.push_back(e.start_time);
    table_rows.push_back(row);
  }

  const int t = static_cast<int>(frame_times.size());
  const int d_t = w.w.dim(0);
  FrameSequence out;
  out.frame_rate = frame_rate;
  out.mask.assign(static_cast<std::size_t>(t), 1);
  if (starts.empty()) {
    out.frames = Tensor::zeros({t, d_t});
    return out;
  }

  // Map all resolved word embeddings in one multiply, then broadcast each
  // frame the row of the latest word started by that frame's time.
  const int d_s = speech_table.dim();
  std::vector<double> gathered(table_rows.size() * static_cast<std::size_t>(d_s));
  const auto table_data = speech_table.matrix.data();
  for (std::size_t i = 0; i < table_rows.size(); ++i) {
    const auto src = table_data.begin() + static_cast<std::size_t>(table_rows[i]) * d_s;
    std::copy_n(src, d_s, gathered.begin() + i * static_cast<std::size_t>(d_s));
  }
  Tensor mapped = map_rows(
      w.w, Tensor::from_raw({static_cast<int>(table_rows.size()), d_s}, std::move(gathered)));
  const auto mapped_data = mapped.data();

  std::vector<double> frames(static_cast<std::size_t>(t) * d_t, 0.0);
  for (int i = 0; i < t; ++i) {
    const auto after =
        std::upper_bound(starts.begin(), starts.end(), frame_times[static_cast<std::size_t>(i)]);
    if (after == starts.begin()) continue;  // before the first word: zeros
    const auto word = static_cast<std::size_t>(after - starts.begin() - 1);
    std::copy_n(mapped_data.begin() + word * static_cast<std::size_t>(d_t), d_t,
                frames.begin() + static_cast<std::size_t>(i) * d_t);
  }
  out.frames = Tensor::from_raw({t, d_t}, std::move(frames));
  return out;
}

FrameSequence resample_to_label_rate(const FrameSequence& seq, double label_rate) {
  if (!(label_rate > 0.0)) throw ArgumentError("label rate must be positive");
  if (label_rate > seq.frame_rate) {
    throw ArgumentError("label rate " + std::to_string(label_rate) + " exceeds frame rate " +
                        std::to_string(seq.frame_rate));
  }
  const int t = seq.frames.dim(0);
  const auto t_out = static_cast<int>(std::llround(t * label_rate / seq.frame_rate));
  if (t_out < 1) {
    throw ArgumentError("sequence too short to resample: " + std::to_string(t) + " frames at " +
                        std::to_string(seq.frame_rate) + " Hz");
  }

  // Equal contiguous bins up to a one-frame size difference; the floor rule
  // pins bounds[t_out] == t so every frame lands in exactly one bin.
  std::vector<int> bounds(static_cast<std::size_t>(t_out) + 1);
  for (int i = 0; i <= t_out; ++i) {
    bounds[static_cast<std::size_t>(i)] =
        static_cast<int>(static_cast<std::int64_t>(i) * t / t_out);
  }

  FrameSequence out;
  out.frame_rate = label_rate;
  out.mask.assign(static_cast<std::size_t>(t_out), 1);
  for (int j = 0; j < t_out; ++j) {
    for (int i = bounds[static_cast<std::size_t>(j)]; i < bounds[static_cast<std::size_t>(j) + 1];
         ++i) {
      if (seq.mask[static_cast<std::size_t>(i)] == 0) {
        out.mask[static_cast<std::size_t>(j)] = 0;
        break;
      }
    }
  }
  out.frames = apply_frame_mask(bin_mean_rows(seq.frames, bounds), out.mask);
  return out;
}

}  // namespace affect

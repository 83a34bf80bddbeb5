#include "affect/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "affect/error.hpp"
#include "affect/ops.hpp"
#include "affect/rng.hpp"
#include "affect/svd.hpp"
#include "affect/wav.hpp"
#include "json.hpp"

namespace affect {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void validate_spec(const SyntheticSpec& spec) {
  if (spec.vocab < 4) throw ArgumentError("synthetic vocab must be at least 4");
  if (spec.dim < 2) throw ArgumentError("synthetic embedding dim must be at least 2");
  if (spec.sigma < 0.0) throw ArgumentError("synthetic noise sigma must be nonnegative");
  if (spec.segments < 1) throw ArgumentError("synthetic segment count must be positive");
  if (spec.sinusoids < 1) throw ArgumentError("synthetic sinusoid count must be positive");
  if (spec.smoothness <= 0.0) throw ArgumentError("synthetic smoothness must be positive");
  if (spec.snr <= 0.0) throw ArgumentError("synthetic snr must be positive");
  if (spec.label_rate <= 0.0) throw ArgumentError("synthetic label rate must be positive");
  if (spec.words_per_segment < 1) throw ArgumentError("synthetic words per segment must be positive");
}

Tensor random_rotation(int d, Rng& rng) {
  Tensor m = Tensor::zeros({d, d});
  for (double& v : m.mutable_data()) v = rng.normal();
  return svd(m).u;
}

// Sum of random low-frequency sinusoids, clipped to [-1, 1]. Amplitudes
// shrink with index so the first component dominates and the curve stays
// well inside the clip range most of the time.
struct AffectProcess {
  std::vector<double> amp, freq, phase;

  static AffectProcess sample(int sinusoids, double smoothness, Rng& rng) {
    AffectProcess p;
    for (int k = 0; k < sinusoids; ++k) {
      p.amp.push_back(0.9 / (k + 1.0) * (0.5 + rng.uniform()));
      p.freq.push_back(rng.uniform(0.05, 0.35) * (k + 1.0) / smoothness);
      p.phase.push_back(rng.uniform(0.0, 2.0 * 3.14159265358979323846));
    }
    return p;
  }

  double at(double t) const {
    double v = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k) {
      v += amp[k] * std::sin(2.0 * 3.14159265358979323846 * freq[k] * t + phase[k]);
    }
    return std::clamp(v, -1.0, 1.0);
  }
};

std::string segment_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "seg%03d", i);
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

// Tokens arranged in an 8x8 grid: rows sorted by embedding coordinate 0
// (the valence axis), columns by coordinate 1 (liking) within each row.
// pick(v, l) draws from the cell matching the two trajectory values.
class TokenGrid {
 public:
  TokenGrid(const Tensor& text_matrix, int vocab) {
    std::vector<int> order(static_cast<std::size_t>(vocab));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return text_matrix.at(a, 0) < text_matrix.at(b, 0);
    });
    const int rows = kBins;
    for (int r = 0; r < rows; ++r) {
      const int begin = static_cast<int>(static_cast<long long>(r) * vocab / rows);
      const int end = static_cast<int>(static_cast<long long>(r + 1) * vocab / rows);
      std::vector<int> row_tokens(order.begin() + begin, order.begin() + end);
      std::sort(row_tokens.begin(), row_tokens.end(), [&](int a, int b) {
        return text_matrix.at(a, 1) < text_matrix.at(b, 1);
      });
      for (int c = 0; c < kBins; ++c) {
        const int n = static_cast<int>(row_tokens.size());
        const int cb = static_cast<int>(static_cast<long long>(c) * n / kBins);
        const int ce = static_cast<int>(static_cast<long long>(c + 1) * n / kBins);
        cells_[static_cast<std::size_t>(r * kBins + c)].assign(row_tokens.begin() + cb,
                                                               row_tokens.begin() + ce);
      }
    }
  }

  int pick(double valence, double liking, Rng& rng) const {
    const int r = bin_of(valence);
    const int c = bin_of(liking);
    // March outward until a nonempty cell turns up (tiny vocabularies can
    // leave cells empty).
    for (int radius = 0; radius < kBins; ++radius) {
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= kBins || cc < 0 || cc >= kBins) continue;
          const auto& cell = cells_[static_cast<std::size_t>(rr * kBins + cc)];
          if (!cell.empty()) return cell[rng.below(cell.size())];
        }
      }
    }
    throw DataError("token grid is empty");
  }

 private:
  static constexpr int kBins = 8;
  static int bin_of(double v) {
    const int b = static_cast<int>((v + 1.0) / 2.0 * kBins);
    return std::clamp(b, 0, kBins - 1);
  }
  std::array<std::vector<int>, kBins * kBins> cells_;
};

}  // namespace

void gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  validate_spec(spec);
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "waveforms", ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir + ": " + ec.message());

  Rng root(spec.seed);

  // Embedding tables and the hidden rotation.
  Rng table_rng = root.split(0x01);
  Tensor rotation = random_rotation(spec.dim, table_rng);
  Tensor t_matrix = Tensor::zeros({spec.vocab, spec.dim});
  for (double& v : t_matrix.mutable_data()) v = table_rng.normal();
  Tensor s_matrix = matmul(t_matrix, rotation);  // s = t.R, so s.Rt = t
  if (spec.sigma > 0.0) {
    auto sd = s_matrix.mutable_data();
    for (double& v : sd) v += table_rng.normal(0.0, spec.sigma);
  }

  EmbeddingTable text, speech;
  for (int i = 0; i < spec.vocab; ++i) {
    text.words.push_back("tok" + std::to_string(i));
    text.frequencies.push_back(spec.vocab - i);
  }
  speech.words = text.words;
  speech.frequencies = text.frequencies;
  text.matrix = t_matrix;
  speech.matrix = s_matrix;
  text = normalize(text);
  speech = normalize(speech);
  save_word2vec_text(text, (fs::path(out_dir) / "text.vec").string());
  save_word2vec_text(speech, (fs::path(out_dir) / "speech.vec").string());

  TokenGrid grid(text.matrix, spec.vocab);

  const int label_frames = static_cast<int>(std::llround(spec.label_rate * kSegmentSeconds));
  std::map<std::string, std::vector<WordEvent>> events;
  std::ostringstream labels;
  labels << "segment_id,frame_index,arousal,valence,liking\n";

  for (int s = 0; s < spec.segments; ++s) {
    const std::string id = segment_name(s);
    Rng seg_rng = root.split(0x100 + static_cast<std::uint64_t>(s));

    AffectProcess arousal = AffectProcess::sample(spec.sinusoids, spec.smoothness, seg_rng);
    AffectProcess valence = AffectProcess::sample(spec.sinusoids, spec.smoothness, seg_rng);
    AffectProcess liking = AffectProcess::sample(spec.sinusoids, spec.smoothness, seg_rng);

    // Labels at bin centers of the label frames.
    for (int i = 0; i < label_frames; ++i) {
      const double t = (i + 0.5) / spec.label_rate;
      labels << id << ',' << i << ',' << format_double(arousal.at(t)) << ','
             << format_double(valence.at(t)) << ',' << format_double(liking.at(t)) << '\n';
    }

    // Noise carrier with arousal-driven amplitude. The modulated part is
    // snr times the constant base, and the whole thing stays inside (-1, 1).
    std::vector<double> wave(static_cast<std::size_t>(kSegmentSamples));
    for (int n = 0; n < kSegmentSamples; ++n) {
      const double t = static_cast<double>(n) / kSampleRate;
      const double gain =
          (1.0 + spec.snr * (arousal.at(t) + 1.0) / 2.0) / (1.0 + spec.snr);
      wave[static_cast<std::size_t>(n)] = seg_rng.uniform(-0.9, 0.9) * gain;
    }
    save_raw_f32((fs::path(out_dir) / "waveforms" / (id + ".f32")).string(), wave);

    // Evenly spaced word slots; each token tracks valence/liking at the
    // middle of its slot.
    std::vector<WordEvent> seg_events;
    const double slot = static_cast<double>(kSegmentSeconds) / spec.words_per_segment;
    for (int w = 0; w < spec.words_per_segment; ++w) {
      const double start = w * slot;
      const double mid = start + 0.5 * slot;
      const int token = grid.pick(valence.at(mid), liking.at(mid), seg_rng);
      seg_events.push_back({text.words[static_cast<std::size_t>(token)], start, start + 0.8 * slot});
    }
    events[id] = std::move(seg_events);
  }

  save_word_events((fs::path(out_dir) / "events.csv").string(), events);
  {
    std::ofstream out(fs::path(out_dir) / "labels.csv", std::ios::binary);
    if (!out) throw IoError("cannot write labels.csv in " + out_dir);
    out << labels.str();
  }

  json manifest;
  manifest["format"] = 1;
  manifest["label_rate"] = spec.label_rate;
  manifest["spec"] = {{"vocab", spec.vocab},
                      {"dim", spec.dim},
                      {"sigma", spec.sigma},
                      {"segments", spec.segments},
                      {"sinusoids", spec.sinusoids},
                      {"smoothness", spec.smoothness},
                      {"snr", spec.snr},
                      {"label_rate", spec.label_rate},
                      {"words_per_segment", spec.words_per_segment},
                      {"seed", spec.seed}};
  std::vector<std::vector<double>> r_rows;
  for (int i = 0; i < spec.dim; ++i) {
    std::vector<double> r(static_cast<std::size_t>(spec.dim));
    for (int j = 0; j < spec.dim; ++j) r[static_cast<std::size_t>(j)] = rotation.at(i, j);
    r_rows.push_back(std::move(r));
  }
  manifest["rotation"] = r_rows;
  json segs = json::array();
  for (int s = 0; s < spec.segments; ++s) {
    segs.push_back({{"id", segment_name(s)}, {"split", s % 5 == 4 ? "dev" : "train"}});
  }
  manifest["segments"] = segs;
  {
    std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write manifest.json in " + out_dir);
    out << manifest.dump(2) << '\n';
  }
}

const std::vector<int>& Dataset::split_ids(const std::string& name) const {
  if (name == "train") return train_ids;
  if (name == "dev") return dev_ids;
  throw IoError("unknown dataset split '" + name + "' (expected train or dev)");
}

Dataset load_dataset(const std::string& dir) {
  const fs::path base(dir);
  std::ifstream mf(base / "manifest.json");
  if (!mf) throw IoError("cannot open manifest.json in " + dir);
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest.json: ") + e.what());
  }

  Dataset data;
  try {
    data.label_rate = manifest.at("label_rate").get<double>();
    const auto& rot = manifest.at("rotation");
    const int d = static_cast<int>(rot.size());
    std::vector<double> r_data;
    r_data.reserve(static_cast<std::size_t>(d) * d);
    for (const auto& r_row : rot) {
      if (static_cast<int>(r_row.size()) != d) throw ParseError("manifest rotation is not square");
      for (const auto& v : r_row) r_data.push_back(v.get<double>());
    }
    data.rotation = Tensor::from_data({d, d}, std::move(r_data));

    data.text = load_word2vec_text((base / "text.vec").string());
    data.speech = load_word2vec_text((base / "speech.vec").string());
    auto events = load_word_events((base / "events.csv").string());

    // Labels, grouped by segment and ordered by frame index.
    std::map<std::string, std::vector<std::array<double, 3>>> labels;
    {
      std::ifstream in(base / "labels.csv");
      if (!in) throw IoError("cannot open labels.csv in " + dir);
      std::string line;
      int line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("segment_id", 0) == 0) continue;
        std::istringstream ls(line);
        std::string seg, field;
        if (!std::getline(ls, seg, ',')) throw ParseError("labels.csv: bad row", line_no);
        std::array<double, 4> nums{};
        for (int k = 0; k < 4; ++k) {
          if (!std::getline(ls, field, ',')) {
            throw ParseError("labels.csv: expected 5 columns", line_no);
          }
          try {
            std::size_t used = 0;
            nums[static_cast<std::size_t>(k)] = std::stod(field, &used);
            if (used != field.size()) throw std::invalid_argument(field);
          } catch (const std::exception&) {
            throw ParseError("labels.csv: bad number '" + field + "'", line_no);
          }
        }
        auto& rows = labels[seg];
        const int idx = static_cast<int>(nums[0]);
        if (idx != static_cast<int>(rows.size())) {
          throw ParseError("labels.csv: frame indices out of order for " + seg, line_no);
        }
        rows.push_back({nums[1], nums[2], nums[3]});
      }
    }

    for (const auto& seg : manifest.at("segments")) {
      SegmentData sd;
      sd.id = seg.at("id").get<std::string>();
      sd.split = seg.at("split").get<std::string>();

      std::vector<double> audio =
          load_raw_f32((base / "waveforms" / (sd.id + ".f32")).string());
      auto pieces = segment_waveform(audio);
      if (pieces.size() != 1) {
        throw DataError("waveform for " + sd.id + " is not a single 10 s segment");
      }
      sd.wave = std::move(pieces.front());

      auto ev = events.find(sd.id);
      if (ev != events.end()) sd.events = ev->second;

      auto lab = labels.find(sd.id);
      if (lab == labels.end()) throw DataError("no labels for segment " + sd.id);
      const int t = static_cast<int>(lab->second.size());
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(t) * 3);
      for (const auto& row : lab->second) {
        for (double v : row) {
          if (v < -1.0 || v > 1.0) throw DataError("label out of [-1,1] for " + sd.id);
          flat.push_back(v);
        }
      }
      sd.labels = Tensor::from_data({t, 3}, std::move(flat));

      const int idx = static_cast<int>(data.segments.size());
      (sd.split == "dev" ? data.dev_ids : data.train_ids).push_back(idx);
      data.segments.push_back(std::move(sd));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest.json: ") + e.what());
  }
  return data;
}

}  // namespace affect

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "affect/features.hpp"
#include "affect/ops.hpp"
#include "affect/wav.hpp"
#include "testutil.hpp"

using namespace affect;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::vector<double> random_samples(int n, std::uint64_t seed, double amplitude = 0.8) {
  Rng rng(seed);
  std::vector<double> s(static_cast<std::size_t>(n));
  for (double& v : s) v = amplitude * (2.0 * rng.uniform() - 1.0);
  return s;
}

EmbeddingTable tiny_table() {
  EmbeddingTable t;
  t.words = {"hello", "world", "affect"};
  t.frequencies = {30, 20, 10};
  t.matrix = testing::tmat(3, 2, {1.0, 0.0, 0.0, 1.0, 0.5, 0.5});
  return t;
}

std::vector<double> frame_times(int t, double rate) {
  std::vector<double> times(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) times[static_cast<std::size_t>(i)] = i / rate;
  return times;
}

}  // namespace

TEST_CASE("wav files round-trip through 16-bit quantization") {
  std::vector<double> samples = random_samples(2000, 17);
  for (double& v : samples) v = std::lround(v * 32767.0) / 32767.0;  // pre-quantize
  const auto path = temp_file("affect_wav_test.wav");
  save_wav(path.string(), samples);
  std::vector<double> back = load_wav(path.string());
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i] == doctest::Approx(samples[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(load_wav("/no/such/file.wav"), IoError);
}

TEST_CASE("wav loader rejects what it cannot represent") {
  const auto path = temp_file("affect_bad.wav");
  {
    std::ofstream f(path, std::ios::binary);
    f << "this is not audio at all, not even close";
  }
  CHECK_THROWS_AS(load_wav(path.string()), ParseError);

  // valid RIFF, stereo format: refused as data we do not handle
  std::vector<double> mono = random_samples(64, 3);
  save_wav(path.string(), mono);
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(22);       // channel-count field inside fmt
  f.put(2);          // stereo
  f.close();
  CHECK_THROWS_AS(load_wav(path.string()), DataError);
}

TEST_CASE("raw float32 files round-trip") {
  std::vector<double> samples = random_samples(513, 19);
  const auto path = temp_file("affect_raw_test.f32");
  save_raw_f32(path.string(), samples);
  std::vector<double> back = load_raw_f32(path.string());
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i] == doctest::Approx(samples[i]).epsilon(1e-7));  // float32 precision
  }

  {
    std::ofstream f(path, std::ios::binary);
    f << "12345";  // 5 bytes: not a whole number of floats
  }
  CHECK_THROWS_AS(load_raw_f32(path.string()), DataError);
}

TEST_CASE("segmentation pads the tail and records true lengths") {
  std::vector<double> audio = random_samples(2 * kSegmentSamples + 59000, 23);
  std::vector<WaveformSegment> segments = segment_waveform(audio);
  REQUIRE(segments.size() == 3);
  for (const WaveformSegment& s : segments) CHECK(s.samples.size() == kSegmentSamples);
  CHECK(segments[0].valid_samples == kSegmentSamples);
  CHECK(segments[1].valid_samples == kSegmentSamples);
  CHECK(segments[2].valid_samples == 59000);
  CHECK(segments[2].samples[59000] == 0.0);
  CHECK(segments[2].samples.back() == 0.0);
  CHECK(segments[2].samples[58999] == audio[2 * kSegmentSamples + 58999]);

  CHECK(segment_waveform({}).empty());
}

TEST_CASE("word event validation catches bad spans and overlap") {
  std::vector<WordEvent> good = {{"a", 0.0, 1.0}, {"b", 1.0, 2.5}, {"c", 4.0, 9.5}};
  CHECK_NOTHROW(validate_events(good));
  CHECK_THROWS_AS(validate_events({{"a", -0.1, 1.0}}), ArgumentError);
  CHECK_THROWS_AS(validate_events({{"a", 2.0, 2.0}}), ArgumentError);
  CHECK_THROWS_AS(validate_events({{"a", 2.0, 10.5}}), ArgumentError);
  CHECK_THROWS_AS(validate_events({{"a", 0.0, 2.0}, {"b", 1.5, 3.0}}), ArgumentError);
}

TEST_CASE("word event CSV round-trips and reports malformed lines") {
  std::map<std::string, std::vector<WordEvent>> by_segment;
  by_segment["seg0"] = {{"hello", 0.25, 1.0}, {"world", 1.5, 2.0}};
  by_segment["seg1"] = {{"affect", 0.0, 9.75}};
  const auto path = temp_file("affect_events.csv");
  save_word_events(path.string(), by_segment);
  auto back = load_word_events(path.string());
  REQUIRE(back.size() == 2);
  REQUIRE(back.at("seg0").size() == 2);
  CHECK(back.at("seg0")[1].token == "world");
  CHECK(back.at("seg0")[1].start_time == doctest::Approx(1.5));
  CHECK(back.at("seg1")[0].end_time == doctest::Approx(9.75));

  {
    std::ofstream f(path);
    f << "segment_id,token,start,end\nseg0,hi,0.5\n";  // missing column
  }
  CHECK_THROWS_AS(load_word_events(path.string()), ParseError);
  {
    std::ofstream f(path);
    f << "seg0,hi,zero,1.0\n";
  }
  CHECK_THROWS_AS(load_word_events(path.string()), ParseError);
  {
    std::ofstream f(path);
    f << "seg0,hi,3.0,4.0\nseg0,later,1.0,2.0\n";  // out of order
  }
  CHECK_THROWS_AS(load_word_events(path.string()), DataError);
}

TEST_CASE("paralinguistic extractor meets the 882 x 125 shape contract") {
  Rng rng(29);
  CnnParams params = CnnParams::init(rng);
  WaveformSegment segment{random_samples(kSegmentSamples, 31), kSegmentSamples};
  FrameSequence seq = extract_paralinguistic(segment, params);
  CHECK(seq.frames.dim(0) == 882);
  CHECK(seq.frames.dim(1) == 125);
  CHECK(seq.frame_rate == doctest::Approx(88.2));
  CHECK(seq.valid_count() == 882);
  CHECK(seq.frames.all_finite());

  WaveformSegment wrong{random_samples(1000, 37), 1000};
  CHECK_THROWS_AS(extract_paralinguistic(wrong, params), ArgumentError);
}

TEST_CASE("zero waveform with zero biases yields zero features") {
  Rng rng(41);
  CnnParams params = CnnParams::init(rng);  // biases start at zero
  WaveformSegment silent{std::vector<double>(kSegmentSamples, 0.0), kSegmentSamples};
  FrameSequence seq = extract_paralinguistic(silent, params);
  double max_abs = 0.0;
  for (const double v : seq.frames.data()) max_abs = std::max(max_abs, std::abs(v));
  CHECK(max_abs == 0.0);
}

TEST_CASE("padding mask zeroes exactly the frames past the valid samples") {
  Rng rng(43);
  CnnParams params = CnnParams::init(rng);
  WaveformSegment segment{random_samples(kSegmentSamples, 47), 0};
  segment.valid_samples = 100000;  // 400 full frames
  std::fill(segment.samples.begin() + 100000, segment.samples.end(), 0.0);
  FrameSequence seq = extract_paralinguistic(segment, params);
  CHECK(seq.valid_count() == 400);
  for (int i = 0; i < seq.length(); ++i) {
    CHECK(seq.mask[static_cast<std::size_t>(i)] == (i < 400 ? 1 : 0));
  }
  // masked rows are zero
  for (int j = 0; j < seq.dim(); ++j) {
    CHECK(seq.frames.at(401, j) == 0.0);
    CHECK(seq.frames.at(881, j) == 0.0);
  }
  // a comfortably interior valid frame is generally nonzero
  double norm = 0.0;
  for (int j = 0; j < seq.dim(); ++j) norm += std::abs(seq.frames.at(200, j));
  CHECK(norm > 0.0);
}

TEST_CASE("shifting the waveform one pool-width shifts features one frame") {
  Rng rng(53);
  CnnParams params = CnnParams::init(rng);
  std::vector<double> base = random_samples(kSegmentSamples, 59);

  WaveformSegment original{base, kSegmentSamples};
  WaveformSegment shifted{std::vector<double>(kSegmentSamples, 0.0), kSegmentSamples};
  std::copy(base.begin(), base.end() - kCnnDownsample, shifted.samples.begin() + kCnnDownsample);

  FrameSequence a = extract_paralinguistic(original, params);
  FrameSequence b = extract_paralinguistic(shifted, params);
  // Interior frames: stay clear of both segment ends, where same-padding
  // and the injected zeros differ.
  for (int i = 4; i < 878; ++i) {
    for (int j = 0; j < 125; j += 13) {
      CHECK(b.frames.at(i + 1, j) == doctest::Approx(a.frames.at(i, j)).epsilon(1e-9));
    }
  }
}

TEST_CASE("cnn gradients match finite differences on a toy waveform") {
  Rng rng(61);
  CnnParams params = CnnParams::init(rng);
  Tensor wave = Tensor::zeros({1, 2500});
  for (double& v : wave.mutable_data()) v = 0.5 * rng.normal();

  auto loss_for = [&](const Tensor& k1, const Tensor& k2, const Tensor& b3) {
    CnnParams probe = params;
    probe.k1 = k1;
    probe.k2 = k2;
    probe.b3 = b3;
    return mean(cnn_forward(wave, probe));
  };
  const double err = testing::fd_gradcheck(
      [&](Tape&, const std::vector<Tensor>& xs) { return loss_for(xs[0], xs[1], xs[2]); },
      {params.k1, params.k2, params.b3}, 1e-6, 10);
  CHECK(err < 1e-4);
}

TEST_CASE("semantic frames hold the last started word") {
  EmbeddingTable table = tiny_table();
  LinearMap w{testing::tmat(2, 2, {2.0, 0.0, 0.0, 2.0})};  // doubles each row
  const auto times = frame_times(100, 10.0);

  SUBCASE("no events give zeros") {
    FrameSequence seq = extract_semantic({}, table, w, times, 10.0);
    CHECK(seq.frames.dim(0) == 100);
    CHECK(seq.frames.dim(1) == 2);
    for (const double v : seq.frames.data()) CHECK(v == 0.0);
  }

  SUBCASE("single word at t=0 covers every frame") {
    FrameSequence seq = extract_semantic({{"world", 0.0, 1.0}}, table, w, times, 10.0);
    for (int i = 0; i < 100; ++i) {
      CHECK(seq.frames.at(i, 0) == doctest::Approx(0.0));
      CHECK(seq.frames.at(i, 1) == doctest::Approx(2.0));
    }
  }

  SUBCASE("two words split the frames at the second start") {
    std::vector<WordEvent> events = {{"hello", 0.0, 1.0}, {"world", 5.0, 6.0}};
    FrameSequence seq = extract_semantic(events, table, w, times, 10.0);
    for (int i = 0; i < 50; ++i) {
      CHECK(seq.frames.at(i, 0) == doctest::Approx(2.0));
      CHECK(seq.frames.at(i, 1) == doctest::Approx(0.0));
    }
    for (int i = 50; i < 100; ++i) {
      CHECK(seq.frames.at(i, 0) == doctest::Approx(0.0));
      CHECK(seq.frames.at(i, 1) == doctest::Approx(2.0));
    }
  }

  SUBCASE("frames are piecewise constant with changes only at word starts") {
    std::vector<WordEvent> events = {{"hello", 0.3, 1.0}, {"affect", 2.0, 3.0},
                                     {"world", 7.45, 8.0}};
    FrameSequence seq = extract_semantic(events, table, w, times, 10.0);
    int changes = 0;
    for (int i = 1; i < 100; ++i) {
      bool same = true;
      for (int j = 0; j < 2; ++j) same = same && seq.frames.at(i, j) == seq.frames.at(i - 1, j);
      if (!same) ++changes;
    }
    CHECK(changes == 3);  // zeros -> hello -> affect -> world
  }

  SUBCASE("unknown tokens are skipped, the previous word keeps holding") {
    std::vector<WordEvent> events = {{"hello", 0.0, 1.0}, {"quolth", 4.0, 5.0}};
    FrameSequence seq = extract_semantic(events, table, w, times, 10.0);
    for (int i = 0; i < 100; ++i) CHECK(seq.frames.at(i, 0) == doctest::Approx(2.0));
  }
}

TEST_CASE("resampling 882 frames to 10 Hz gives 100 bins of 8 or 9") {
  FrameSequence seq;
  std::vector<double> data(882 * 2);
  for (int i = 0; i < 882; ++i) {
    data[static_cast<std::size_t>(i) * 2] = i;  // channel 0 counts frames
    data[static_cast<std::size_t>(i) * 2 + 1] = 1.0;
  }
  seq.frames = Tensor::from_raw({882, 2}, std::move(data));
  seq.frame_rate = 88.2;
  seq.mask.assign(882, 1);

  FrameSequence out = resample_to_label_rate(seq, 10.0);
  CHECK(out.frames.dim(0) == 100);
  CHECK(out.frames.dim(1) == 2);
  CHECK(out.frame_rate == doctest::Approx(10.0));

  // Bin means of a ramp recover the bin centers; reconstruct bin sizes
  // from consecutive centers and check they are 8 or 9 summing to 882.
  int total = 0;
  double prev_center = -1.0;
  for (int j = 0; j < 100; ++j) {
    CHECK(out.frames.at(j, 1) == doctest::Approx(1.0));  // constant stays constant
    const double center = out.frames.at(j, 0);
    CHECK(center > prev_center);
    prev_center = center;
  }
  // sizes via the bound formula the implementation promises
  for (int j = 0; j < 100; ++j) {
    const int size = (j + 1) * 882 / 100 - j * 882 / 100;
    CHECK((size == 8 || size == 9));
    total += size;
  }
  CHECK(total == 882);
}

TEST_CASE("equal-sized bins preserve the per-channel mean") {
  Rng rng(67);
  FrameSequence seq;
  Tensor frames = Tensor::zeros({20, 3});
  for (double& v : frames.mutable_data()) v = rng.normal();
  seq.frames = frames;
  seq.frame_rate = 20.0;
  seq.mask.assign(20, 1);
  FrameSequence out = resample_to_label_rate(seq, 10.0);  // bins of exactly 2
  REQUIRE(out.frames.dim(0) == 10);
  for (int j = 0; j < 3; ++j) {
    double before = 0.0, after = 0.0;
    for (int i = 0; i < 20; ++i) before += frames.at(i, j) / 20.0;
    for (int i = 0; i < 10; ++i) after += out.frames.at(i, j) / 10.0;
    CHECK(after == doctest::Approx(before).epsilon(1e-9));
  }
}

TEST_CASE("resampling carries the validity mask and rejects upsampling") {
  FrameSequence seq;
  seq.frames = Tensor::zeros({882, 1});
  for (int i = 0; i < 882; ++i) seq.frames.mutable_data()[static_cast<std::size_t>(i)] = 1.0;
  seq.frame_rate = 88.2;
  seq.mask.assign(882, 1);
  for (int i = 400; i < 882; ++i) seq.mask[static_cast<std::size_t>(i)] = 0;

  FrameSequence out = resample_to_label_rate(seq, 10.0);
  // frame 400 falls inside bin 45 ([396, 405)); bins 0..44 stay valid
  CHECK(out.valid_count() == 45);
  for (int j = 0; j < 45; ++j) CHECK(out.mask[static_cast<std::size_t>(j)] == 1);
  CHECK(out.mask[45] == 0);
  CHECK(out.frames.at(45, 0) == 0.0);  // masked bins zeroed
  CHECK(out.frames.at(44, 0) == doctest::Approx(1.0));

  CHECK_THROWS_AS(resample_to_label_rate(out, 88.2), ArgumentError);
}

TEST_CASE("resampled cnn output meets the 100 x 125 contract") {
  Rng rng(71);
  CnnParams params = CnnParams::init(rng);
  WaveformSegment segment{random_samples(kSegmentSamples, 73), kSegmentSamples};
  FrameSequence cnn = extract_paralinguistic(segment, params);
  FrameSequence out = resample_to_label_rate(cnn, 10.0);
  CHECK(out.frames.dim(0) == 100);
  CHECK(out.frames.dim(1) == 125);
  CHECK(out.valid_count() == 100);
  CHECK(out.frames.all_finite());
}

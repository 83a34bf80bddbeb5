#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "affect/alignment.hpp"
#include "affect/checkpoint.hpp"
#include "affect/error.hpp"
#include "affect/loss.hpp"
#include "affect/synth.hpp"
#include "affect/train.hpp"
#include "json.hpp"

using namespace affect;
namespace fs = std::filesystem;

namespace {

fs::path harness_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "affect_harness";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  REQUIRE(static_cast<bool>(out));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Relative paths of every regular file under dir, sorted for comparison.
std::vector<fs::path> file_list(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool bits_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

SyntheticSpec tiny_spec(std::uint64_t seed, int segments) {
  SyntheticSpec spec;
  spec.vocab = 48;
  spec.dim = 6;
  spec.segments = segments;
  spec.words_per_segment = 10;
  spec.seed = seed;
  return spec;
}

// One shared 4-segment dataset for the training tests (4 segments means the
// every-fifth-is-dev rule yields no dev split, which exercises the fallback).
const Dataset& shared_data() {
  static const Dataset data = [] {
    const fs::path dir = harness_root() / "shared";
    gen_synthetic(tiny_spec(7, 4), dir.string());
    return load_dataset(dir.string());
  }();
  return data;
}

RunConfig tiny_config() {
  RunConfig rc;
  rc.lr = 1e-3;
  rc.batch_size = 2;
  rc.seq_len = 10;
  rc.dropout = 0.0;
  rc.epochs = 1;
  rc.seed = 3;
  rc.train_cnn = false;
  rc.d_u = 16;
  rc.lstm_hidden = 16;
  return rc;
}

}  // namespace

TEST_CASE("synthetic generation is byte-deterministic per seed") {
  const fs::path a = harness_root() / "det_a";
  const fs::path b = harness_root() / "det_b";
  const fs::path c = harness_root() / "det_c";
  gen_synthetic(tiny_spec(11, 3), a.string());
  gen_synthetic(tiny_spec(11, 3), b.string());
  gen_synthetic(tiny_spec(12, 3), c.string());

  const auto files = file_list(a);
  CHECK(files.size() >= 8);  // manifest, two tables, events, labels, 3 waves
  CHECK(files == file_list(b));
  for (const auto& rel : files) {
    INFO("file ", rel.string());
    CHECK(read_bytes(a / rel) == read_bytes(b / rel));
  }

  // A different seed must change the data, not just the manifest.
  CHECK(read_bytes(a / "speech.vec") != read_bytes(c / "speech.vec"));
  CHECK(read_bytes(a / "labels.csv") != read_bytes(c / "labels.csv"));
}

TEST_CASE("synthetic dataset loads with exact shapes and bounded labels") {
  const Dataset& data = shared_data();
  CHECK(data.label_rate == 10.0);
  CHECK(data.segments.size() == 4);
  CHECK(data.text.size() == 48);
  CHECK(data.speech.size() == 48);
  CHECK(data.text.dim() == 6);
  CHECK(data.rotation.shape() == Shape{6, 6});

  for (const auto& seg : data.segments) {
    CHECK(seg.labels.shape() == Shape{100, 3});  // 10 s at 10 labels/s
    for (double v : seg.labels.data()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
    CHECK(seg.events.size() == 10);
    CHECK(seg.events.front().start_time >= 0.0);
    CHECK(seg.events.back().end_time <= 10.0);
    CHECK(seg.wave.valid_samples == kSegmentSamples);
  }

  // Segments 0..3 are all train; the dev split is empty and split_ids says so.
  CHECK(data.train_ids.size() == 4);
  CHECK(data.dev_ids.empty());
  CHECK(data.split_ids("train").size() == 4);
  CHECK_THROWS_AS((void)data.split_ids("test"), IoError);

  // A fifth segment lands in dev.
  const fs::path five = harness_root() / "five";
  gen_synthetic(tiny_spec(9, 5), five.string());
  const Dataset d5 = load_dataset(five.string());
  CHECK(d5.train_ids.size() == 4);
  REQUIRE(d5.dev_ids.size() == 1);
  CHECK(d5.segments[static_cast<std::size_t>(d5.dev_ids[0])].split == "dev");
}

TEST_CASE("hidden rotation is recoverable from a noiseless dataset") {
  SyntheticSpec spec = tiny_spec(21, 1);
  spec.vocab = 40;
  spec.sigma = 0.0;
  const fs::path dir = harness_root() / "noiseless";
  gen_synthetic(spec, dir.string());
  const Dataset data = load_dataset(dir.string());

  // With no noise the written tables satisfy speech = text . R exactly, so
  // the closed-form refinement on all rows must return R itself.
  const LinearMap map = procrustes_refine(data.speech.matrix, data.text.matrix);
  CHECK(max_abs_diff(map.w, data.rotation) < 1e-6);
}

TEST_CASE("generator rejects bad specs") {
  const std::string dir = (harness_root() / "rejected").string();
  SyntheticSpec spec = tiny_spec(1, 1);
  spec.vocab = 3;
  CHECK_THROWS_AS(gen_synthetic(spec, dir), ArgumentError);
  spec = tiny_spec(1, 1);
  spec.sigma = -0.1;
  CHECK_THROWS_AS(gen_synthetic(spec, dir), ArgumentError);
  spec = tiny_spec(1, 1);
  spec.label_rate = 0.0;
  CHECK_THROWS_AS(gen_synthetic(spec, dir), ArgumentError);
  spec = tiny_spec(1, 1);
  spec.smoothness = 0.0;
  CHECK_THROWS_AS(gen_synthetic(spec, dir), ArgumentError);
}

TEST_CASE("dataset loader reports corrupt labels precisely") {
  const fs::path src = harness_root() / "shared";
  const auto corrupt = [&](const std::string& name, const std::string& bad_field) {
    const fs::path dir = harness_root() / name;
    fs::remove_all(dir);
    fs::copy(src, dir, fs::copy_options::recursive);
    std::string text = read_bytes(dir / "labels.csv");
    const std::size_t header_end = text.find('\n');
    REQUIRE(header_end != std::string::npos);
    const std::size_t row_end = text.find('\n', header_end + 1);
    std::string row = text.substr(header_end + 1, row_end - header_end - 1);
    // Replace the arousal field (third column) of the first data row.
    std::size_t c1 = row.find(',');
    std::size_t c2 = row.find(',', c1 + 1);
    std::size_t c3 = row.find(',', c2 + 1);
    row = row.substr(0, c2 + 1) + bad_field + row.substr(c3);
    write_bytes(dir / "labels.csv", text.substr(0, header_end + 1) + row + text.substr(row_end));
    return dir.string();
  };

  try {
    (void)load_dataset(corrupt("bad_number", "abc"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);  // header is line 1
    CHECK(std::string(e.what()).find("bad number") != std::string::npos);
  }

  CHECK_THROWS_AS((void)load_dataset(corrupt("out_of_range", "2.5")), DataError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Checkpoint ckpt;
  ckpt.config_json = "{\"lr\":0.001,\"note\":\"line1\\nline2\"}";
  ckpt.rng_state = 0xDEADBEEFCAFEBABEull;
  ckpt.adam_step = 1234567;
  ckpt.epoch = 42;
  ckpt.best_dev = -0.12345678901234567;
  ckpt.tensors.emplace_back(
      "a", Tensor::from_raw({2, 3}, {0.0, -0.0, 1e308, 5e-324, -3.25, 1.0 / 3.0}));
  ckpt.tensors.emplace_back("solo", Tensor::from_raw({1}, {-7.5}));
  ckpt.tensors.emplace_back("cube", Tensor::from_raw({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));

  const fs::path p1 = harness_root() / "round.ckpt";
  const fs::path p2 = harness_root() / "round2.ckpt";
  save_checkpoint(ckpt, p1.string());
  const Checkpoint back = load_checkpoint(p1.string());

  CHECK(back.version == ckpt.version);
  CHECK(back.config_json == ckpt.config_json);
  CHECK(back.rng_state == ckpt.rng_state);
  CHECK(back.adam_step == ckpt.adam_step);
  CHECK(back.epoch == ckpt.epoch);
  CHECK(back.best_dev == ckpt.best_dev);
  REQUIRE(back.tensors.size() == ckpt.tensors.size());
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ckpt.tensors[i].first);
    CHECK(bits_equal(back.tensors[i].second, ckpt.tensors[i].second));
  }
  CHECK(back.find("solo") != nullptr);
  CHECK(back.find("missing") == nullptr);

  // Saving the loaded copy reproduces the file byte for byte.
  save_checkpoint(back, p2.string());
  CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("checkpoint loader rejects malformed files") {
  const fs::path good = harness_root() / "round.ckpt";  // from the previous case
  REQUIRE(fs::exists(good));
  const std::string bytes = read_bytes(good);

  CHECK_THROWS_AS((void)load_checkpoint((harness_root() / "absent.ckpt").string()), IoError);

  const fs::path wrong_magic = harness_root() / "magic.ckpt";
  write_bytes(wrong_magic, "NOPE" + bytes.substr(4));
  CHECK_THROWS_AS((void)load_checkpoint(wrong_magic.string()), ParseError);

  const fs::path truncated = harness_root() / "short.ckpt";
  write_bytes(truncated, bytes.substr(0, bytes.size() - 10));
  try {
    (void)load_checkpoint(truncated.string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }

  const fs::path trailing = harness_root() / "long.ckpt";
  write_bytes(trailing, bytes + "x");
  try {
    (void)load_checkpoint(trailing.string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("trailing") != std::string::npos);
  }

  const fs::path bad_version = harness_root() / "version.ckpt";
  std::string vb = bytes;
  vb[4] = 99;  // version lives right after the magic, little-endian
  write_bytes(bad_version, vb);
  try {
    (void)load_checkpoint(bad_version.string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
}

TEST_CASE("run config json round trips") {
  RunConfig rc = tiny_config();
  rc.lr = 0.00025;
  rc.clip_global = true;
  rc.shared_query = true;
  rc.fusion_mode = FusionMode::concat;
  rc.label_rate = 25.0;
  rc.data_dir = "/some/dir";
  rc.map_path = "map.txt";
  rc.checkpoint_dir = "ckpts";
  rc.metrics_path = "m.jsonl";
  rc.seed = 99;

  const RunConfig back = config_from_json(config_to_json(rc));
  CHECK(back.lr == rc.lr);
  CHECK(back.batch_size == rc.batch_size);
  CHECK(back.seq_len == rc.seq_len);
  CHECK(back.dropout == rc.dropout);
  CHECK(back.clip_norm == rc.clip_norm);
  CHECK(back.clip_global == rc.clip_global);
  CHECK(back.epochs == rc.epochs);
  CHECK(back.seed == rc.seed);
  CHECK(back.fusion_mode == rc.fusion_mode);
  CHECK(back.shared_query == rc.shared_query);
  CHECK(back.train_cnn == rc.train_cnn);
  CHECK(back.d_u == rc.d_u);
  CHECK(back.lstm_hidden == rc.lstm_hidden);
  CHECK(back.label_rate == rc.label_rate);
  CHECK(back.data_dir == rc.data_dir);
  CHECK(back.map_path == rc.map_path);
  CHECK(back.checkpoint_dir == rc.checkpoint_dir);
  CHECK(back.metrics_path == rc.metrics_path);

  // Missing keys keep defaults; malformed input and bad values are rejected.
  const RunConfig defaults = config_from_json("{}");
  CHECK(defaults.lr == RunConfig{}.lr);
  CHECK(defaults.fusion_mode == RunConfig{}.fusion_mode);
  CHECK_THROWS_AS((void)config_from_json("not json"), ParseError);
  CHECK_THROWS_AS((void)config_from_json("{\"fusion\":\"bogus\"}"), ArgumentError);

  RunConfig bad = tiny_config();
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = tiny_config();
  bad.seq_len = 1;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  RunConfig rc = tiny_config();
  rc.data_dir = (harness_root() / "shared").string();

  RunConfig frozen = rc;
  frozen.epochs = 0;
  const Checkpoint init = train(frozen, shared_data()).last;

  rc.lr = 0.0;
  rc.epochs = 1;
  const Checkpoint after = train(rc, shared_data()).last;

  int compared = 0;
  for (const auto& [name, tensor] : after.tensors) {
    if (name.rfind("adam.", 0) == 0) continue;  // moments move even at lr 0
    const Tensor* before = init.find(name);
    REQUIRE(before != nullptr);
    INFO("tensor ", name);
    CHECK(bits_equal(tensor, *before));
    ++compared;
  }
  CHECK(compared > 20);  // map + fusion + lstm + cnn parameters all present
}

TEST_CASE("training reduces the loss on a tiny dataset") {
  RunConfig rc = tiny_config();
  rc.data_dir = (harness_root() / "shared").string();
  rc.lr = 2e-3;
  rc.epochs = 10;
  rc.metrics_path = (harness_root() / "metrics.jsonl").string();

  const TrainResult result = train(rc, shared_data());
  REQUIRE(result.log.size() == 10);
  CHECK(result.log.back().train_loss < result.log.front().train_loss);

  // The metrics file mirrors the log: one JSON object per epoch.
  std::ifstream in(rc.metrics_path);
  REQUIRE(static_cast<bool>(in));
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch").get<int>() == rows + 1);
    CHECK(j.at("train_loss").get<double>() ==
          doctest::Approx(result.log[static_cast<std::size_t>(rows)].train_loss));
    CHECK(j.contains("train_ccc"));
    CHECK(j.contains("dev_ccc"));
    ++rows;
  }
  CHECK(rows == 10);
}

TEST_CASE("resuming reproduces the uninterrupted run") {
  RunConfig rc = tiny_config();
  rc.data_dir = (harness_root() / "shared").string();
  rc.dropout = 0.25;  // exercise the per-epoch random streams across resume
  rc.epochs = 4;

  const TrainResult full = train(rc, shared_data());
  REQUIRE(full.log.size() == 4);

  RunConfig half = rc;
  half.epochs = 2;
  const TrainResult first_half = train(half, shared_data());
  REQUIRE(first_half.log.size() == 2);
  const TrainResult second_half = train(rc, shared_data(), &first_half.last);
  REQUIRE(second_half.log.size() == 2);

  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(second_half.log[i].epoch == full.log[i + 2].epoch);
    CHECK(second_half.log[i].train_loss ==
          doctest::Approx(full.log[i + 2].train_loss).epsilon(1e-12));
    CHECK(second_half.log[i].train_ccc.mean ==
          doctest::Approx(full.log[i + 2].train_ccc.mean).epsilon(1e-12));
  }
  for (const auto& [name, tensor] : full.last.tensors) {
    const Tensor* resumed = second_half.last.find(name);
    REQUIRE(resumed != nullptr);
    INFO("tensor ", name);
    CHECK(max_abs_diff(tensor, *resumed) < 1e-9);
  }
  CHECK(full.last.rng_state == second_half.last.rng_state);
  CHECK(full.last.adam_step == second_half.last.adam_step);
}

TEST_CASE("non-finite loss aborts with a batch-numbered error") {
  RunConfig rc = tiny_config();
  rc.data_dir = (harness_root() / "shared").string();
  rc.epochs = 0;
  Checkpoint poisoned = train(rc, shared_data()).last;

  bool replaced = false;
  for (auto& [name, tensor] : poisoned.tensors) {
    if (name == "lstm.w_x") {
      std::vector<double> nans(tensor.data().size(), std::numeric_limits<double>::quiet_NaN());
      tensor = Tensor::from_raw(tensor.shape(), std::move(nans));
      replaced = true;
    }
  }
  REQUIRE(replaced);

  rc.epochs = 1;
  try {
    (void)train(rc, shared_data(), &poisoned);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("non-finite loss") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("evaluation is deterministic and counts frames") {
  RunConfig rc = tiny_config();
  rc.data_dir = (harness_root() / "shared").string();
  const TrainResult result = train(rc, shared_data());

  const EvalResult a = evaluate(shared_data(), result.best, "train");
  const EvalResult b = evaluate(shared_data(), result.best, "train");
  CHECK(a.segments == 4);
  CHECK(a.frames == 400);
  CHECK(b.segments == a.segments);
  CHECK(b.frames == a.frames);
  for (int d = 0; d < 3; ++d) {
    CHECK(a.report.per_dim[static_cast<std::size_t>(d)] ==
          b.report.per_dim[static_cast<std::size_t>(d)]);
  }
  CHECK(a.report.mean == b.report.mean);

  // This dataset has no dev segments, and unknown split names are rejected.
  CHECK_THROWS_AS((void)evaluate(shared_data(), result.best, "dev"), IoError);
  CHECK_THROWS_AS((void)evaluate(shared_data(), result.best, "bogus"), IoError);

  // Gold against itself is perfect concordance on every dimension.
  const Tensor& gold = shared_data().segments[0].labels;
  const CccReport self = ccc_report(gold, gold);
  for (int d = 0; d < 3; ++d) {
    CHECK(self.per_dim[static_cast<std::size_t>(d)] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(self.degenerate[static_cast<std::size_t>(d)]);
  }
  CHECK(self.mean == doctest::Approx(1.0).epsilon(1e-12));
}

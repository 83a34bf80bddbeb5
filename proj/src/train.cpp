#include "affect/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "affect/alignment.hpp"
#include "affect/error.hpp"
#include "affect/features.hpp"
#include "affect/lstm.hpp"
#include "affect/ops.hpp"
#include "affect/optim.hpp"
#include "affect/tape.hpp"
#include "json.hpp"

namespace affect {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Model {
  CnnParams cnn;
  FusionParams fusion;
  LstmParams lstm;
  LinearMap map;  // fixed speech->text map; not trained here
};

int semantic_dim(const Model& m) { return m.map.w.dim(0); }

int lstm_input_dim(const RunConfig& c, int d_sem) {
  return c.fusion_mode == FusionMode::concat ? d_sem + kCnnChannels : c.d_u;
}

Model init_model(const RunConfig& config, const Dataset& data, const Rng& root) {
  Model m;
  if (!config.map_path.empty()) {
    m.map = load_linear_map(config.map_path);
    if (m.map.w.dim(1) != data.speech.dim()) {
      throw DimensionError("alignment map expects speech dim " + std::to_string(m.map.w.dim(1)) +
                           ", dataset has " + std::to_string(data.speech.dim()));
    }
  } else {
    m.map = LinearMap::init_identity(data.speech.dim(), data.speech.dim());
  }
  Rng cnn_rng = root.split(0xC0);
  m.cnn = CnnParams::init(cnn_rng);
  Rng fusion_rng = root.split(0xF0);
  m.fusion = FusionParams::init(semantic_dim(m), kCnnChannels, config.d_u, fusion_rng);
  m.fusion.shared_query = config.shared_query;
  Rng lstm_rng = root.split(0x15);
  m.lstm = LstmParams::init(lstm_input_dim(config, semantic_dim(m)), config.lstm_hidden, lstm_rng);
  return m;
}

// Every model tensor by name, in a fixed order: fusion, lstm, cnn.
NamedParams all_named(Model& m) {
  NamedParams ps = m.fusion.named_params();
  for (auto& p : m.lstm.named_params()) ps.push_back(p);
  for (auto& p : m.cnn.named_params()) ps.push_back(p);
  return ps;
}

// The subset Adam updates; the CNN only when it is being trained.
NamedParams trainable(Model& m, const RunConfig& config) {
  NamedParams ps = m.fusion.named_params();
  for (auto& p : m.lstm.named_params()) ps.push_back(p);
  if (config.train_cnn) {
    for (auto& p : m.cnn.named_params()) ps.push_back(p);
  }
  return ps;
}

void overwrite_from_checkpoint(Model& m, const Checkpoint& ckpt) {
  for (auto& [name, target] : all_named(m)) {
    const Tensor* stored = ckpt.find(name);
    if (!stored) throw ParseError("checkpoint is missing tensor " + name);
    if (stored->shape() != target->shape()) {
      throw ParseError("checkpoint tensor " + name + " has shape " + shape_str(stored->shape()) +
                       ", expected " + shape_str(target->shape()));
    }
    *target = *stored;
  }
  const Tensor* w = ckpt.find("map.w");
  if (!w) throw ParseError("checkpoint is missing tensor map.w");
  m.map.w = *w;
}

Checkpoint snapshot(Model& model, const RunConfig& config, const Adam& adam, int epochs_done,
                    double best_dev, std::uint64_t rng_state) {
  Checkpoint c;
  c.config_json = config_to_json(config);
  c.rng_state = rng_state;
  c.adam_step = adam.step_count();
  c.epoch = epochs_done;
  c.best_dev = best_dev;
  for (auto& [name, t] : all_named(model)) c.tensors.emplace_back(name, t->detached());
  c.tensors.emplace_back("map.w", model.map.w.detached());
  if (adam.step_count() > 0) {
    NamedParams tr = trainable(model, config);
    const auto& ms = adam.first_moments();
    const auto& vs = adam.second_moments();
    for (std::size_t i = 0; i < tr.size(); ++i) {
      c.tensors.emplace_back("adam.m." + tr[i].first, ms[i].detached());
      c.tensors.emplace_back("adam.v." + tr[i].first, vs[i].detached());
    }
  }
  return c;
}

std::vector<double> label_frame_times(int t, double rate) {
  std::vector<double> times(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) times[static_cast<std::size_t>(i)] = i / rate;
  return times;
}

// Per-segment fixed inputs. The paralinguistic block is cached only while
// the CNN is frozen; training the CNN recomputes it on the tape per batch.
struct SegFeatures {
  Tensor semantic;  // T x d_sem
  Tensor para;      // T x 125 (empty when the CNN is trained)
  std::vector<std::uint8_t> mask;
  Tensor gold;  // T x 3
};

// Paralinguistic frames at label rate. `params` may hold tape-bound kernels.
FrameSequence para_at_label_rate(const WaveformSegment& wave, const CnnParams& params,
                                 double label_rate) {
  FrameSequence cnn_seq = extract_paralinguistic(wave, params);
  return resample_to_label_rate(cnn_seq, label_rate);
}

SegFeatures make_features(const SegmentData& seg, const Model& model,
                          const EmbeddingTable& speech_n, const RunConfig& config,
                          bool with_para) {
  SegFeatures f;
  f.gold = seg.labels;
  const int t_lbl = seg.labels.dim(0);
  FrameSequence sem = extract_semantic(seg.events, speech_n, model.map,
                                       label_frame_times(t_lbl, config.label_rate),
                                       config.label_rate);
  f.semantic = sem.frames;
  if (with_para) {
    FrameSequence para = para_at_label_rate(seg.wave, model.cnn, config.label_rate);
    if (para.length() != t_lbl) {
      throw DataError("segment " + seg.id + ": " + std::to_string(para.length()) +
                      " paralinguistic label frames vs " + std::to_string(t_lbl) + " labels");
    }
    f.para = para.frames;
    f.mask = para.mask;
  } else {
    f.mask.assign(static_cast<std::size_t>(t_lbl), 1);
  }
  return f;
}

struct CropView {
  Tensor sem, para, gold;
  std::vector<std::uint8_t> mask;
};

CropView crop_sequence(const Tensor& sem, const Tensor& para, const Tensor& gold,
                       const std::vector<std::uint8_t>& mask, int seq_len, Rng& rng) {
  const int t = gold.dim(0);
  CropView v;
  if (t <= seq_len) {
    v.sem = sem;
    v.para = para;
    v.gold = gold;
    v.mask = mask;
    return v;
  }
  const int offset = static_cast<int>(rng.below(static_cast<std::uint64_t>(t - seq_len + 1)));
  v.sem = slice_rows(sem, offset, offset + seq_len);
  v.para = slice_rows(para, offset, offset + seq_len);
  v.gold = slice_rows(gold, offset, offset + seq_len);
  v.mask.assign(mask.begin() + offset, mask.begin() + offset + seq_len);
  return v;
}

// Dropout-off predictions for one segment with the current parameters.
Tensor predict_segment(const SegFeatures& f, const Tensor& para, Model& model,
                       const RunConfig& config) {
  Tensor fused = fuse_sequence(f.semantic, para, model.fusion, config.fusion_mode);
  return lstm_forward(fused, model.lstm);
}

CccReport score_split(Model& model, const Dataset& data, const EmbeddingTable& speech_n,
                      const RunConfig& config, const std::vector<int>& ids,
                      const std::vector<SegFeatures>& cache, int* frames_out = nullptr) {
  std::vector<double> pred_rows, gold_rows;
  int frames = 0;
  for (int id : ids) {
    const SegFeatures& f = cache[static_cast<std::size_t>(id)];
    Tensor para = f.para;
    std::vector<std::uint8_t> mask = f.mask;
    if (config.train_cnn) {
      FrameSequence fresh = para_at_label_rate(data.segments[static_cast<std::size_t>(id)].wave,
                                               model.cnn, config.label_rate);
      para = fresh.frames;
      mask = fresh.mask;
    }
    Tensor pred = predict_segment(f, para, model, config);
    const int t = pred.dim(0);
    for (int i = 0; i < t; ++i) {
      if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
      for (int j = 0; j < 3; ++j) {
        pred_rows.push_back(pred.at(i, j));
        gold_rows.push_back(f.gold.at(i, j));
      }
    }
    frames += t;
  }
  const int n = static_cast<int>(pred_rows.size() / 3);
  if (frames_out) *frames_out = n;
  return ccc_report(Tensor::from_raw({n, 3}, std::move(pred_rows)),
                    Tensor::from_raw({n, 3}, std::move(gold_rows)));
}

json ccc_to_json(const CccReport& r) {
  json j;
  j["arousal"] = r.per_dim[0];
  j["valence"] = r.per_dim[1];
  j["liking"] = r.per_dim[2];
  j["mean"] = r.mean;
  json degenerate = json::array();
  for (int d = 0; d < 3; ++d) {
    if (r.degenerate[static_cast<std::size_t>(d)]) degenerate.push_back(kAffectDimNames[d]);
  }
  j["degenerate"] = degenerate;
  return j;
}

}  // namespace

void RunConfig::validate() const {
  if (lr < 0.0) throw ArgumentError("learning rate must be nonnegative");
  if (batch_size < 1) throw ArgumentError("batch size must be positive");
  if (seq_len < 2) throw ArgumentError("sequence length must be at least 2 label frames");
  if (dropout < 0.0 || dropout >= 1.0) throw ArgumentError("dropout must be in [0, 1)");
  if (clip_norm <= 0.0) throw ArgumentError("gradient clip norm must be positive");
  if (epochs < 0) throw ArgumentError("epoch count must be nonnegative");
  if (d_u < 1) throw ArgumentError("fusion width d_u must be positive");
  if (lstm_hidden < 1) throw ArgumentError("lstm hidden size must be positive");
  if (label_rate <= 0.0) throw ArgumentError("label rate must be positive");
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["seq_len"] = c.seq_len;
  j["dropout"] = c.dropout;
  j["clip_norm"] = c.clip_norm;
  j["clip_global"] = c.clip_global;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["fusion"] = c.fusion_mode == FusionMode::concat ? "concat" : "disentangled";
  j["shared_query"] = c.shared_query;
  j["train_cnn"] = c.train_cnn;
  j["d_u"] = c.d_u;
  j["lstm_hidden"] = c.lstm_hidden;
  j["label_rate"] = c.label_rate;
  j["data_dir"] = c.data_dir;
  j["map_path"] = c.map_path;
  j["checkpoint_dir"] = c.checkpoint_dir;
  j["metrics_path"] = c.metrics_path;
  return j.dump();
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config JSON: ") + e.what());
  }
  RunConfig c;
  try {
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("seq_len")) c.seq_len = j["seq_len"].get<int>();
    if (j.contains("dropout")) c.dropout = j["dropout"].get<double>();
    if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"].get<double>();
    if (j.contains("clip_global")) c.clip_global = j["clip_global"].get<bool>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("fusion")) {
      const std::string mode = j["fusion"].get<std::string>();
      if (mode == "concat") {
        c.fusion_mode = FusionMode::concat;
      } else if (mode == "disentangled") {
        c.fusion_mode = FusionMode::disentangled;
      } else {
        throw ArgumentError("unknown fusion mode '" + mode + "'");
      }
    }
    if (j.contains("shared_query")) c.shared_query = j["shared_query"].get<bool>();
    if (j.contains("train_cnn")) c.train_cnn = j["train_cnn"].get<bool>();
    if (j.contains("d_u")) c.d_u = j["d_u"].get<int>();
    if (j.contains("lstm_hidden")) c.lstm_hidden = j["lstm_hidden"].get<int>();
    if (j.contains("label_rate")) c.label_rate = j["label_rate"].get<double>();
    if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("map_path")) c.map_path = j["map_path"].get<std::string>();
    if (j.contains("checkpoint_dir")) c.checkpoint_dir = j["checkpoint_dir"].get<std::string>();
    if (j.contains("metrics_path")) c.metrics_path = j["metrics_path"].get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("config JSON: ") + e.what());
  }
  return c;
}

std::string metrics_to_json(const EpochMetrics& m) {
  json j;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  j["train_ccc"] = ccc_to_json(m.train_ccc);
  j["dev_ccc"] = ccc_to_json(m.dev_ccc);
  return j.dump();
}

TrainResult train(const RunConfig& config, const Dataset& data, const Checkpoint* resume) {
  config.validate();
  if (data.segments.empty()) throw ArgumentError("dataset has no segments");
  if (data.train_ids.empty()) throw ArgumentError("dataset has no training segments");

  Rng root(config.seed);
  EmbeddingTable speech_n = normalize(data.speech);

  Model model = init_model(config, data, root);
  if (resume) overwrite_from_checkpoint(model, *resume);
  NamedParams params = trainable(model, config);

  Adam adam(config.lr);
  int start_epoch = 0;
  double best_dev = -2.0;
  if (resume) {
    start_epoch = resume->epoch;
    best_dev = resume->best_dev;
    if (resume->adam_step > 0) {
      std::vector<Tensor> m, v;
      for (const auto& [name, p] : params) {
        const Tensor* sm = resume->find("adam.m." + name);
        const Tensor* sv = resume->find("adam.v." + name);
        if (!sm || !sv) throw ParseError("checkpoint is missing optimizer state for " + name);
        m.push_back(*sm);
        v.push_back(*sv);
      }
      adam.restore(std::move(m), std::move(v), resume->adam_step);
    }
  }

  // Frozen per-segment inputs. Semantic features never change during a run;
  // paralinguistic features are cached only while the CNN is frozen.
  std::vector<SegFeatures> cache;
  cache.reserve(data.segments.size());
  for (const SegmentData& seg : data.segments) {
    cache.push_back(make_features(seg, model, speech_n, config, !config.train_cnn));
  }

  const std::vector<int>& dev_ids = data.dev_ids.empty() ? data.train_ids : data.dev_ids;

  std::ofstream metrics_file;
  if (!config.metrics_path.empty()) {
    metrics_file.open(config.metrics_path, std::ios::trunc);
    if (!metrics_file) throw IoError("cannot open metrics file " + config.metrics_path);
  }
  if (!config.checkpoint_dir.empty()) {
    std::error_code ec;
    fs::create_directories(config.checkpoint_dir, ec);
    if (ec) throw IoError("cannot create checkpoint dir " + config.checkpoint_dir);
  }

  TrainResult result;
  if (resume) result.best = *resume;

  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    Rng epoch_rng = root.split(0xE000 + static_cast<std::uint64_t>(epoch));
    std::vector<int> order = data.train_ids;
    {
      Rng shuffle_rng = epoch_rng.split(0x01);
      shuffle_rng.shuffle(order);
    }

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      Rng batch_rng = epoch_rng.split(0x100 + static_cast<std::uint64_t>(batches));

      Tape tape;
      // Shadow structs hold tape-bound copies of the parameters; the model
      // keeps the plain tensors Adam updates.
      FusionParams fusion_b = model.fusion;
      LstmParams lstm_b = model.lstm;
      CnnParams cnn_b = model.cnn;
      NamedParams shadow = fusion_b.named_params();
      for (auto& p : lstm_b.named_params()) shadow.push_back(p);
      if (config.train_cnn) {
        for (auto& p : cnn_b.named_params()) shadow.push_back(p);
      }
      std::vector<Tensor> bound(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        bound[i] = tape.param(*params[i].second);
        *shadow[i].second = bound[i];
      }

      Tensor total;
      for (std::size_t k = begin; k < end; ++k) {
        const int id = order[k];
        const SegFeatures& f = cache[static_cast<std::size_t>(id)];
        Tensor para = f.para;
        std::vector<std::uint8_t> mask = f.mask;
        if (config.train_cnn) {
          FrameSequence fresh = para_at_label_rate(
              data.segments[static_cast<std::size_t>(id)].wave, cnn_b, config.label_rate);
          para = fresh.frames;
          mask = fresh.mask;
        }
        Rng crop_rng = batch_rng.split(0x10 + static_cast<std::uint64_t>(k - begin));
        CropView v = crop_sequence(f.semantic, para, f.gold, mask, config.seq_len, crop_rng);

        Tensor fused = fuse_sequence(v.sem, v.para, fusion_b, config.fusion_mode);
        if (config.dropout > 0.0) {
          Rng dropout_rng = batch_rng.split(0x20 + static_cast<std::uint64_t>(k - begin));
          fused = dropout(fused, config.dropout, true, dropout_rng);
        }
        Tensor pred = lstm_forward(fused, lstm_b);
        Tensor seq_loss = ccc_loss(pred, v.gold, &v.mask);
        total = total.empty() ? seq_loss : add(total, seq_loss);
      }
      Tensor batch_loss = cmul(total, 1.0 / static_cast<double>(end - begin));
      const double loss_value = batch_loss.item();
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite loss in batch " + std::to_string(batches) + " of epoch " +
                           std::to_string(epoch + 1));
      }
      loss_sum += loss_value;
      ++batches;

      tape.backward(batch_loss);
      std::vector<Tensor> grads(bound.size());
      for (std::size_t i = 0; i < bound.size(); ++i) grads[i] = tape.grad(bound[i]);

      if (config.clip_global) {
        clip_grad_norm(grads, config.clip_norm);
      } else {
        std::vector<std::size_t> idx;
        std::vector<Tensor> lstm_grads;
        for (std::size_t i = 0; i < params.size(); ++i) {
          if (params[i].first.rfind("lstm.", 0) == 0) {
            idx.push_back(i);
            lstm_grads.push_back(grads[i]);
          }
        }
        clip_grad_norm(lstm_grads, config.clip_norm);
        for (std::size_t i = 0; i < idx.size(); ++i) grads[idx[i]] = lstm_grads[i];
      }

      std::vector<Tensor*> targets;
      targets.reserve(params.size());
      for (auto& [name, p] : params) targets.push_back(p);
      adam.step(targets, grads);
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.train_loss = batches > 0 ? loss_sum / batches : 0.0;
    m.train_ccc = score_split(model, data, speech_n, config, data.train_ids, cache);
    m.dev_ccc = score_split(model, data, speech_n, config, dev_ids, cache);
    result.log.push_back(m);
    if (metrics_file) {
      metrics_file << metrics_to_json(m) << '\n';
      metrics_file.flush();
    }

    result.last = snapshot(model, config, adam, epoch + 1, best_dev, root.state());
    if (m.dev_ccc.mean > best_dev) {
      best_dev = m.dev_ccc.mean;
      result.last.best_dev = best_dev;
      result.best = result.last;
      if (!config.checkpoint_dir.empty()) {
        save_checkpoint(result.best, (fs::path(config.checkpoint_dir) / "best.ckpt").string());
      }
    }
    if (!config.checkpoint_dir.empty()) {
      save_checkpoint(result.last, (fs::path(config.checkpoint_dir) / "last.ckpt").string());
    }
  }

  if (result.log.empty()) {
    // No epochs ran: still hand back a usable snapshot of the model state.
    result.last = resume ? *resume : snapshot(model, config, adam, 0, best_dev, root.state());
    if (!resume) result.best = result.last;
  }
  return result;
}

EvalResult evaluate(const Dataset& data, const Checkpoint& ckpt, const std::string& split) {
  RunConfig config = config_from_json(ckpt.config_json);
  config.validate();
  const std::vector<int>& ids = data.split_ids(split);
  if (ids.empty()) throw IoError("dataset split '" + split + "' has no segments");

  Rng root(config.seed);
  EmbeddingTable speech_n = normalize(data.speech);
  Model model = init_model(config, data, root);
  overwrite_from_checkpoint(model, ckpt);

  std::vector<SegFeatures> cache;
  cache.reserve(data.segments.size());
  for (const SegmentData& seg : data.segments) {
    cache.push_back(make_features(seg, model, speech_n, config, true));
  }
  RunConfig eval_config = config;
  eval_config.train_cnn = false;  // features already computed with ckpt kernels

  EvalResult out;
  out.segments = static_cast<int>(ids.size());
  out.report = score_split(model, data, speech_n, eval_config, ids, cache, &out.frames);
  return out;
}

}  // namespace affect

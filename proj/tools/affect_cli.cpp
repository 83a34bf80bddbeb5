// Command-line front end for the speech-emotion pipeline: synthetic data
// generation, embedding alignment (adversarial + closed-form refinement),
// training, evaluation, and a finite-difference gradient audit.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "affect/alignment.hpp"
#include "affect/checkpoint.hpp"
#include "affect/embeddings.hpp"
#include "affect/error.hpp"
#include "affect/gradcheck.hpp"
#include "affect/loss.hpp"
#include "affect/synth.hpp"
#include "affect/train.hpp"
#include "json.hpp"

namespace {

using affect::RunConfig;
using nlohmann::json;

// The optional JSON config file supplies defaults; explicit flags override
// it because values are loaded into the bound variables before parsing.
json load_config_file(int argc, char** argv) {
  std::string path;
  for (int i = 1; i < argc - 1; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config") path = argv[i + 1];
  }
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw affect::IoError("cannot open config file " + path);
  try {
    json j;
    in >> j;
    if (!j.is_object()) throw affect::ParseError("config file must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw affect::ParseError("config file " + path + ": " + e.what());
  }
}

template <typename T>
void from_config(const json& cfg, const char* key, T& target) {
  if (!cfg.contains(key)) return;
  try {
    target = cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw affect::ParseError(std::string("config key '") + key + "': " + e.what());
  }
}

std::string describe_ccc(const affect::CccReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "arousal %.4f  valence %.4f  liking %.4f  mean %.4f",
                r.per_dim[0], r.per_dim[1], r.per_dim[2], r.mean);
  std::string line = buf;
  for (int d = 0; d < 3; ++d) {
    if (r.degenerate[static_cast<std::size_t>(d)]) {
      line += std::string("  [warn: ") + affect::kAffectDimNames[d] + " degenerate, reported 0]";
    }
  }
  return line;
}

// Required on the command line unless the config file already supplied it.
CLI::Option* require_unless_set(CLI::Option* opt, const std::string& current) {
  if (current.empty()) opt->required();
  return opt;
}

int run(int argc, char** argv) {
  CLI::App app{"speech-emotion pipeline: cross-modal alignment, fusion, LSTM regression"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  // Let `affect_cli <sub> --config file.json` resolve --config on the parent.
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with default option values");

  const json cfg = load_config_file(argc, argv);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  affect::SyntheticSpec spec;
  std::string gen_out;
  from_config(cfg, "vocab", spec.vocab);
  from_config(cfg, "dim", spec.dim);
  from_config(cfg, "sigma", spec.sigma);
  from_config(cfg, "segments", spec.segments);
  from_config(cfg, "smoothness", spec.smoothness);
  from_config(cfg, "snr", spec.snr);
  from_config(cfg, "label_rate", spec.label_rate);
  from_config(cfg, "words_per_segment", spec.words_per_segment);
  from_config(cfg, "seed", spec.seed);
  from_config(cfg, "out", gen_out);
  require_unless_set(gen->add_option("--out", gen_out, "output directory"), gen_out);
  gen->add_option("--vocab", spec.vocab, "vocabulary size");
  gen->add_option("--dim", spec.dim, "embedding width");
  gen->add_option("--sigma", spec.sigma, "noise on rotated speech rows");
  gen->add_option("--segments", spec.segments, "number of 10 s segments");
  gen->add_option("--smoothness", spec.smoothness, "affect trajectory smoothness");
  gen->add_option("--snr", spec.snr, "amplitude-arousal coupling strength");
  gen->add_option("--label-rate", spec.label_rate, "label frames per second");
  gen->add_option("--words", spec.words_per_segment, "words per segment");
  gen->add_option("--seed", spec.seed, "generator seed");

  // ---- align ----
  auto* align = app.add_subcommand("align", "adversarial speech->text map training");
  affect::AlignmentConfig acfg;
  std::string align_speech, align_text, align_out;
  from_config(cfg, "speech", align_speech);
  from_config(cfg, "text", align_text);
  from_config(cfg, "out_map", align_out);
  from_config(cfg, "steps", acfg.generator_steps);
  from_config(cfg, "lr_disc", acfg.lr_disc);
  from_config(cfg, "lr_map", acfg.lr_map);
  from_config(cfg, "disc_hidden", acfg.disc_hidden);
  from_config(cfg, "disc_dropout", acfg.disc_dropout);
  from_config(cfg, "align_seed", acfg.seed);
  require_unless_set(align->add_option("--speech", align_speech, "speech embeddings (word2vec text)"),
                     align_speech);
  require_unless_set(align->add_option("--text", align_text, "text embeddings (word2vec text)"),
                     align_text);
  require_unless_set(align->add_option("--out-map", align_out, "path for the learned map"),
                     align_out);
  align->add_option("--steps", acfg.generator_steps, "generator steps");
  align->add_option("--disc-steps", acfg.disc_steps_per_gen, "discriminator steps per generator step");
  align->add_option("--batch", acfg.batch_size, "adversarial batch size");
  align->add_option("--lr-disc", acfg.lr_disc, "discriminator SGD rate");
  align->add_option("--lr-map", acfg.lr_map, "map SGD rate");
  align->add_option("--smoothing", acfg.label_smoothing, "discriminator label smoothing");
  align->add_option("--ortho-beta", acfg.ortho_beta, "orthogonality pullback strength");
  align->add_option("--disc-hidden", acfg.disc_hidden, "discriminator hidden width");
  align->add_option("--disc-dropout", acfg.disc_dropout, "discriminator input dropout");
  align->add_option("--seed", acfg.seed, "alignment seed");
  align->add_option("--log-every", acfg.log_every, "steps between logged metrics");

  // ---- refine ----
  auto* refine = app.add_subcommand("refine", "closed-form orthogonal refinement");
  std::string ref_speech, ref_text, ref_out;
  int dict_size = 2000;
  from_config(cfg, "speech", ref_speech);
  from_config(cfg, "text", ref_text);
  from_config(cfg, "out_map", ref_out);
  from_config(cfg, "dict_size", dict_size);
  require_unless_set(refine->add_option("--speech", ref_speech, "speech embeddings (word2vec text)"),
                     ref_speech);
  require_unless_set(refine->add_option("--text", ref_text, "text embeddings (word2vec text)"),
                     ref_text);
  require_unless_set(refine->add_option("--out-map", ref_out, "path for the refined map"), ref_out);
  refine->add_option("--dict-size", dict_size, "shared-token dictionary size");

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train the fusion + LSTM regressor");
  RunConfig rc;
  std::string fusion_name = "disentangled";
  from_config(cfg, "lr", rc.lr);
  from_config(cfg, "batch_size", rc.batch_size);
  from_config(cfg, "seq_len", rc.seq_len);
  from_config(cfg, "dropout", rc.dropout);
  from_config(cfg, "clip_norm", rc.clip_norm);
  from_config(cfg, "clip_global", rc.clip_global);
  from_config(cfg, "epochs", rc.epochs);
  from_config(cfg, "seed", rc.seed);
  from_config(cfg, "fusion", fusion_name);
  from_config(cfg, "shared_query", rc.shared_query);
  from_config(cfg, "train_cnn", rc.train_cnn);
  from_config(cfg, "d_u", rc.d_u);
  from_config(cfg, "lstm_hidden", rc.lstm_hidden);
  from_config(cfg, "label_rate", rc.label_rate);
  from_config(cfg, "data_dir", rc.data_dir);
  from_config(cfg, "map_path", rc.map_path);
  from_config(cfg, "checkpoint_dir", rc.checkpoint_dir);
  from_config(cfg, "metrics_path", rc.metrics_path);
  std::string resume_path;
  require_unless_set(tr->add_option("--data", rc.data_dir, "dataset directory"), rc.data_dir);
  tr->add_option("--map", rc.map_path, "speech->text map file (default identity)");
  tr->add_option("--ckpt-dir", rc.checkpoint_dir, "directory for best/last checkpoints");
  tr->add_option("--metrics", rc.metrics_path, "metrics JSONL path");
  tr->add_option("--resume", resume_path, "checkpoint to continue from");
  tr->add_option("--lr", rc.lr, "Adam learning rate");
  tr->add_option("--batch", rc.batch_size, "sequences per mini-batch");
  tr->add_option("--seq-len", rc.seq_len, "label frames per training sequence");
  tr->add_option("--dropout", rc.dropout, "dropout on fused features");
  tr->add_option("--clip", rc.clip_norm, "gradient clip max norm");
  tr->add_flag("--clip-global", rc.clip_global, "clip all gradients, not just the LSTM's");
  tr->add_option("--epochs", rc.epochs, "training epochs");
  tr->add_option("--seed", rc.seed, "run seed");
  tr->add_option("--fusion", fusion_name, "fusion mode: concat | disentangled");
  tr->add_flag("--shared-query", rc.shared_query, "one attention query per layer");
  tr->add_flag("--train-cnn,!--no-train-cnn", rc.train_cnn,
               "train the waveform CNN (off caches its features)");
  tr->add_option("--du", rc.d_u, "shared fusion width");
  tr->add_option("--hidden", rc.lstm_hidden, "LSTM hidden size");
  tr->add_option("--label-rate", rc.label_rate, "label frames per second");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  std::string eval_data, eval_ckpt, eval_split = "dev";
  from_config(cfg, "data_dir", eval_data);
  from_config(cfg, "split", eval_split);
  require_unless_set(ev->add_option("--data", eval_data, "dataset directory"), eval_data);
  require_unless_set(ev->add_option("--ckpt", eval_ckpt, "checkpoint file"), eval_ckpt);
  ev->add_option("--split", eval_split, "train or dev");

  // ---- grad-check ----
  auto* gc = app.add_subcommand("grad-check", "finite-difference audit of every op");
  int gc_cases = 20;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  from_config(cfg, "cases", gc_cases);
  from_config(cfg, "tol", gc_tol);
  gc->add_option("--cases", gc_cases, "random cases per op");
  gc->add_option("--seed", gc_seed, "suite seed");
  gc->add_option("--tol", gc_tol, "relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the usage error for us
    return code == 0 ? 0 : 1;
  }

  if (*gen) {
    affect::gen_synthetic(spec, gen_out);
    std::printf("wrote %d segments, vocab %d, dim %d -> %s\n", spec.segments, spec.vocab, spec.dim,
                gen_out.c_str());
    return 0;
  }

  if (*align) {
    affect::EmbeddingTable speech = affect::normalize(affect::load_word2vec_text(align_speech));
    affect::EmbeddingTable text = affect::normalize(affect::load_word2vec_text(align_text));
    std::vector<affect::AlignmentLogEntry> log;
    affect::LinearMap map = affect::adversarial_train(speech, text, acfg, &log);
    for (const auto& e : log) {
      std::printf("step %6d  disc_loss %.4f  gen_loss %.4f  disc_acc %.3f\n", e.step, e.disc_loss,
                  e.gen_loss, e.disc_accuracy);
    }
    affect::save_linear_map(map, align_out);
    std::printf("map %dx%d -> %s\n", map.w.dim(0), map.w.dim(1), align_out.c_str());
    return 0;
  }

  if (*refine) {
    affect::EmbeddingTable speech = affect::normalize(affect::load_word2vec_text(ref_speech));
    affect::EmbeddingTable text = affect::normalize(affect::load_word2vec_text(ref_text));
    affect::Dictionary dict = affect::build_frequency_dictionary(speech, text, dict_size);
    if (dict.empty()) throw affect::DataError("no shared tokens between the two vocabularies");
    if (dict.shortfall > 0) {
      std::fprintf(stderr, "warning: dictionary short by %d pairs (using %d)\n", dict.shortfall,
                   dict.size());
    }
    affect::Tensor s_rows = affect::gather(speech, dict, affect::Side::speech);
    affect::Tensor t_rows = affect::gather(text, dict, affect::Side::text);
    affect::LinearMap map = affect::procrustes_refine(s_rows, t_rows);
    affect::save_linear_map(map, ref_out);
    std::printf("refined map %dx%d from %d pairs -> %s\n", map.w.dim(0), map.w.dim(1), dict.size(),
                ref_out.c_str());
    return 0;
  }

  if (*tr) {
    if (fusion_name == "concat") {
      rc.fusion_mode = affect::FusionMode::concat;
    } else if (fusion_name == "disentangled") {
      rc.fusion_mode = affect::FusionMode::disentangled;
    } else {
      std::cerr << "--fusion: expected 'concat' or 'disentangled', got '" << fusion_name << "'\n";
      return 1;
    }
    affect::Dataset data = affect::load_dataset(rc.data_dir);
    affect::Checkpoint resume;
    const affect::Checkpoint* resume_ptr = nullptr;
    if (!resume_path.empty()) {
      resume = affect::load_checkpoint(resume_path);
      resume_ptr = &resume;
    }
    affect::TrainResult result = affect::train(rc, data, resume_ptr);
    for (const auto& m : result.log) {
      std::printf("epoch %3d  loss %.4f  train %s\n           dev   %s\n", m.epoch, m.train_loss,
                  describe_ccc(m.train_ccc).c_str(), describe_ccc(m.dev_ccc).c_str());
    }
    if (!result.log.empty()) {
      std::printf("best dev mean CCC %.4f\n", result.best.best_dev);
    }
    return 0;
  }

  if (*ev) {
    affect::Dataset data = affect::load_dataset(eval_data);
    affect::Checkpoint ckpt = affect::load_checkpoint(eval_ckpt);
    affect::EvalResult result = affect::evaluate(data, ckpt, eval_split);
    std::printf("%s (%d segments, %d frames)\n", describe_ccc(result.report).c_str(),
                result.segments, result.frames);
    return 0;
  }

  if (*gc) {
    auto entries = affect::run_gradient_suite(gc_cases, gc_seed, gc_tol);
    for (const auto& e : entries) {
      std::printf("%-18s %3d cases  worst rel err %.3e  %s\n", e.op.c_str(), e.cases,
                  e.worst_rel_err, e.pass ? "ok" : "FAIL");
    }
    if (!affect::gradient_suite_passed(entries)) {
      std::fprintf(stderr, "gradient audit failed\n");
      return 2;
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const affect::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

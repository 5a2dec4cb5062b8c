// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/common.hpp"
#include "core/rng.hpp"
#include "data/shard.hpp"
#include "train/checkpoint.hpp"
#include "train/train.hpp"

namespace segorder {

namespace {

using json = nlohmann::ordered_json;

void write_text_file(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path);
  out << text;
  if (!out) throw DataError("short write to file: " + path);
}

void echo_config(const RunConfig& rc, const std::string& path) {
  write_text_file(path, run_config_json(rc).dump(2) + "\n");
}

json stats_json(const CorpusStats& s) {
  return json{{"documents", s.documents},
              {"segments", s.segments},
              {"samples", s.samples},
              {"tokens", s.tokens},
              {"avg_segment_tokens", s.avg_segment_tokens},
              {"avg_segments_per_sample", s.avg_segments_per_sample}};
}

std::vector<Document> load_corpus_file(const std::string& path, json* issues_out) {
  ParseResult pr = parse_jsonl_file(path);
  if (issues_out) {
    json arr = json::array();
    for (const ParseIssue& i : pr.issues) {
      arr.push_back(json{{"line", i.line}, {"message", i.message}});
    }
    *issues_out = std::move(arr);
  }
  if (pr.documents.empty()) {
    throw DataError("corpus " + path + " holds no valid documents (" +
                    std::to_string(pr.issues.size()) + " rejected lines)");
  }
  return std::move(pr.documents);
}

/// Shared model construction: vocab size comes from the vocabulary unless
/// the config pinned it, and the window must cover the shard's samples.
ModelConfig resolved_model_config(const RunConfig& rc, const Vocab& vocab) {
  ModelConfig mc = rc.model;
  if (mc.vocab_size == 0) mc.vocab_size = vocab.size();
  if (mc.vocab_size != vocab.size()) {
    throw ConfigError("model.vocab_size " + std::to_string(mc.vocab_size) +
                      " does not match the vocabulary (" + std::to_string(vocab.size()) +
                      " tokens)");
  }
  if (mc.context < rc.packing.context) {
    throw ConfigError("model.context " + std::to_string(mc.context) +
                      " is smaller than packing.context " + std::to_string(rc.packing.context));
  }
  return mc;
}

TrainMode objective_mode(const std::string& objective) {
  if (objective == "mlm+so") return TrainMode::mlm_so;
  if (objective == "mlm-only") return TrainMode::mlm_only;
  return TrainMode::mlm_nsp;
}

TrainLoopOptions loop_options(const RunConfig& rc) {
  TrainLoopOptions loop;
  loop.optim = rc.optimizer;
  loop.seed = rc.seed;
  loop.eval_every = rc.task.eval_every;
  loop.checkpoint_every = rc.task.checkpoint_every;
  loop.threads = static_cast<int>(rc.task.threads);
  loop.out_dir = rc.paths.out_dir;
  loop.resume = rc.paths.resume;
  loop.packing = rc.packing;
  return loop;
}

/// Head/label-shape compatibility: single-label heads need singleton sets
/// (config error); any label id must fall inside num_labels (data error).
void check_labels(const std::vector<Document>& docs, const ModelConfig& mc,
                  const std::string& which) {
  bool multilabel = mc.head == "multilabel";
  for (const Document& d : docs) {
    if (!d.has_labels()) {
      throw DataError(which + " document '" + d.id + "' has no labels");
    }
    for (const auto& set : d.labels) {
      if (!multilabel && set.size() != 1) {
        throw ConfigError("head '" + mc.head + "' needs exactly one label per segment, but " +
                          which + " document '" + d.id + "' has a segment with " +
                          std::to_string(set.size()));
      }
      for (int32_t c : set) {
        if (c < 0 || c >= mc.num_labels) {
          throw DataError("label id " + std::to_string(c) + " in " + which + " document '" +
                          d.id + "' is outside num_labels=" + std::to_string(mc.num_labels));
        }
      }
    }
  }
}

template <class S>
json pretrain_impl(const RunConfig& rc) {
  Vocab vocab = load_vocab_file(rc.paths.vocab);
  ShardMeta meta;
  std::vector<PackedSample> train =
      read_shard_checked(rc.paths.shard, vocab.fingerprint, rc.packing.context, &meta);
  std::vector<PackedSample> val;
  if (!rc.paths.val_shard.empty()) {
    val = read_shard_checked(rc.paths.val_shard, vocab.fingerprint, rc.packing.context);
  }

  ModelConfig mc = resolved_model_config(rc, vocab);
  ModelParams<S> params(mc, rc.seed);

  RunConfig echo = rc;
  echo.model = mc;
  std::filesystem::create_directories(rc.paths.out_dir);
  echo_config(echo, rc.paths.out_dir + "/config.json");

  std::ofstream log(rc.paths.out_dir + "/metrics.tsv", std::ios::app);
  if (!log) throw DataError("cannot open metrics log in " + rc.paths.out_dir);

  PretrainOptions opt;
  opt.loop = loop_options(rc);
  opt.mode = objective_mode(rc.task.objective);
  TrainResult result = pretrain<S>(params, train, val, vocab, opt, &log);

  json rep{{"command", "pretrain"},
           {"steps", result.steps_done},
           {"train_samples", train.size()},
           {"val_samples", val.size()},
           {"last_checkpoint", result.last_checkpoint},
           {"parameters", params.parameter_count()}};
  if (!result.final_val.values.empty()) rep["val"] = result.final_val.values;
  return rep;
}

template <class S>
json finetune_impl(const RunConfig& rc) {
  Vocab vocab = load_vocab_file(rc.paths.vocab);
  std::vector<Document> train_docs = load_corpus_file(rc.paths.corpus, nullptr);
  std::vector<Document> val_docs;
  if (!rc.paths.val_corpus.empty()) val_docs = load_corpus_file(rc.paths.val_corpus, nullptr);

  ModelConfig mc = resolved_model_config(rc, vocab);
  std::vector<std::string> transferred;
  CheckpointMeta init_meta;
  if (!rc.paths.checkpoint.empty()) {
    // The pre-trained backbone dictates the architecture; the head comes
    // from this run's config.
    init_meta = read_checkpoint_meta(rc.paths.checkpoint);
    mc.d = init_meta.config.d;
    mc.layers = init_meta.config.layers;
    mc.heads = init_meta.config.heads;
    mc.ffn_mult = init_meta.config.ffn_mult;
    mc.context = init_meta.config.context;
    mc.max_segments = init_meta.config.max_segments;
    mc.vocab_size = init_meta.config.vocab_size;
    if (mc.vocab_size != vocab.size()) {
      throw DataError("checkpoint vocabulary size " + std::to_string(mc.vocab_size) +
                      " does not match the vocabulary file (" + std::to_string(vocab.size()) +
                      " tokens)");
    }
  }
  check_labels(train_docs, mc, "training");
  if (!val_docs.empty()) check_labels(val_docs, mc, "validation");

  ModelParams<S> params(mc, rc.seed);
  if (!rc.paths.checkpoint.empty()) {
    Checkpoint<S> ckpt = read_checkpoint<S>(rc.paths.checkpoint);
    transferred = apply_checkpoint_transfer<S>(ckpt, params);
  }

  RunConfig echo = rc;
  echo.model = mc;
  std::filesystem::create_directories(rc.paths.out_dir);
  echo_config(echo, rc.paths.out_dir + "/config.json");
  std::ofstream log(rc.paths.out_dir + "/metrics.tsv", std::ios::app);
  if (!log) throw DataError("cannot open metrics log in " + rc.paths.out_dir);

  FinetuneOptions opt;
  opt.loop = loop_options(rc);
  opt.epochs = rc.task.epochs;
  opt.dynamic = rc.task.dynamic_sampling;
  opt.class_weighting = rc.task.class_weighting;
  opt.oversample = rc.task.oversampling;
  opt.oversample_factor = rc.task.oversample_factor;
  TrainResult result = finetune<S>(params, train_docs, val_docs, vocab, opt, &log);

  json rep{{"command", "finetune"},
           {"steps", result.steps_done},
           {"train_documents", train_docs.size()},
           {"val_documents", val_docs.size()},
           {"transferred_tensors", transferred.size()},
           {"last_checkpoint", result.last_checkpoint}};
  if (result.best_step >= 0) {
    rep["best_step"] = result.best_step;
    rep["best_value"] = result.best_value;
    rep["best_checkpoint"] = result.best_checkpoint;
  }
  if (!result.final_val.values.empty()) rep["val"] = result.final_val.values;
  return rep;
}

template <class S>
json eval_impl(const RunConfig& rc) {
  Vocab vocab = load_vocab_file(rc.paths.vocab);
  Checkpoint<S> ckpt = read_checkpoint<S>(rc.paths.checkpoint);
  if (ckpt.meta.config.vocab_size != vocab.size()) {
    throw DataError("checkpoint vocabulary size " + std::to_string(ckpt.meta.config.vocab_size) +
                    " does not match the vocabulary file (" + std::to_string(vocab.size()) +
                    " tokens)");
  }
  ModelParams<S> params(ckpt.meta.config, /*init_seed=*/0);
  apply_checkpoint_strict<S>(ckpt, params, nullptr, nullptr);

  int threads = static_cast<int>(rc.task.threads);
  MetricReport rep;
  std::string kind;
  if (!rc.paths.corpus.empty()) {
    if (params.cfg.head == "none") {
      throw ConfigError("classification evaluation needs a checkpoint with a head; this one has "
                        "head=none (point paths.shard at a shard for pre-training metrics)");
    }
    std::vector<Document> docs = load_corpus_file(rc.paths.corpus, nullptr);
    check_labels(docs, params.cfg, "evaluation");
    PackingConfig cfg = rc.packing;
    cfg.shuffle = false;
    std::vector<PackedSample> samples;
    for (const Document& d : docs) {
      for (auto& s : pack_document(d, vocab, cfg)) samples.push_back(std::move(s));
    }
    rep = evaluate_classification<S>(params, samples, vocab.pad_id, threads);
    kind = "classification";
  } else {
    std::vector<PackedSample> samples =
        read_shard_checked(rc.paths.shard, vocab.fingerprint, rc.packing.context);
    TrainMode mode = params.cfg.use_pointer    ? TrainMode::mlm_so
                     : (params.cfg.use_nsp     ? TrainMode::mlm_nsp
                                               : TrainMode::mlm_only);
    rep = evaluate_pretrain<S>(params, samples, mode, vocab.pad_id, threads);
    kind = "pretrain";
  }
  rep.step = static_cast<int64_t>(ckpt.meta.step);

  json out{{"command", "eval"},
           {"kind", kind},
           {"split", rc.task.split},
           {"checkpoint", rc.paths.checkpoint},
           {"checkpoint_step", rep.step},
           {"metrics", rep.values},
           {"config", run_config_json(rc)}};
  if (!rc.paths.report.empty()) write_text_file(rc.paths.report, out.dump(2) + "\n");
  return out;
}

}  // namespace

json cmd_synth(const RunConfig& rc) {
  std::vector<Document> docs = synth_corpus(rc.corpus);
  serialize_jsonl_file(docs, rc.paths.corpus);

  std::vector<std::string> tokens = synth_vocab_tokens(rc.corpus);
  std::string vocab_text;
  for (const auto& t : tokens) {
    vocab_text += t;
    vocab_text += '\n';
  }
  if (!rc.paths.vocab.empty()) write_text_file(rc.paths.vocab, vocab_text);
  std::istringstream vs(vocab_text);
  Vocab vocab = load_vocab(vs);
  CorpusStats stats = corpus_stats(docs, vocab, rc.packing.context);
  {
    std::ostringstream ss;
    write_stats(stats, ss);
    write_text_file(rc.paths.stats, ss.str());
  }
  echo_config(rc, rc.paths.corpus + ".config.json");

  json rep{{"command", "synth"}, {"corpus", rc.paths.corpus}, {"stats", stats_json(stats)}};
  if (!rc.paths.vocab.empty()) rep["vocab"] = rc.paths.vocab;
  return rep;
}

json cmd_pack(const RunConfig& rc) {
  Vocab vocab = load_vocab_file(rc.paths.vocab);
  json issues;
  std::vector<Document> docs = load_corpus_file(rc.paths.corpus, &issues);

  std::vector<PackedSample> samples;
  if (rc.pack_nsp) {
    RngStream pair_rng(rc.seed, rng_purpose::nsp, 0, 0);
    samples = make_nsp_pairs(docs, vocab, rc.packing, pair_rng);
    PackingConfig mask_only = rc.packing;
    mask_only.shuffle = false;  // pair order carries the label
    for (PackedSample& s : samples) prepare_sample(s, vocab, mask_only, rc.seed, 0);
  } else {
    for (const Document& d : docs) {
      for (auto& s : pack_document(d, vocab, rc.packing)) samples.push_back(std::move(s));
    }
    for (PackedSample& s : samples) prepare_sample(s, vocab, rc.packing, rc.seed, 0);
  }

  ShardMeta meta;
  meta.vocab_fingerprint = vocab.fingerprint;
  meta.context = rc.packing.context;
  meta.seed = rc.seed;
  write_shard(rc.paths.shard, samples, meta);
  echo_config(rc, rc.paths.shard + ".config.json");

  CorpusStats stats = corpus_stats(docs, vocab, rc.packing.context);
  json rep{{"command", "pack"},
           {"shard", rc.paths.shard},
           {"samples", samples.size()},
           {"nsp_pairs", rc.pack_nsp},
           {"stats", stats_json(stats)},
           {"efficiency_gain", efficiency_gain(rc.packing.context, stats.avg_segment_tokens)},
           {"rejected_lines", issues.size()}};
  if (!issues.empty()) rep["issues"] = issues;
  return rep;
}

json cmd_pretrain(const RunConfig& rc) {
  return rc.task.precision == "f64" ? pretrain_impl<double>(rc) : pretrain_impl<float>(rc);
}

json cmd_finetune(const RunConfig& rc) {
  return rc.task.precision == "f64" ? finetune_impl<double>(rc) : finetune_impl<float>(rc);
}

json cmd_eval(const RunConfig& rc) {
  int width = checkpoint_scalar_bytes(rc.paths.checkpoint);
  return width == 8 ? eval_impl<double>(rc) : eval_impl<float>(rc);
}

std::string cmd_inspect(const std::string& shard_path, const std::string& vocab_path,
                        uint64_t index) {
  Vocab vocab = load_vocab_file(vocab_path);
  ShardMeta meta;
  std::vector<PackedSample> samples = read_shard(shard_path, &meta);
  if (meta.vocab_fingerprint != vocab.fingerprint) {
    throw DataError("shard was packed with a different vocabulary");
  }
  if (index >= samples.size()) {
    throw DataError("sample index " + std::to_string(index) + " out of range; shard holds " +
                    std::to_string(samples.size()) + " samples");
  }
  const PackedSample& s = samples[index];

  std::ostringstream out;
  out << "sample " << index << " of " << samples.size() << " (shard seed " << meta.seed
      << ", context " << meta.context << ")\n";
  out << "tokens: " << s.length() << "  segments: " << s.segment_count();
  if (s.nsp_label >= 0) out << "  nsp_label: " << static_cast<int>(s.nsp_label);
  out << "\n";
  out << "so_targets:";
  for (int32_t y : s.so_targets) out << " " << y;
  out << "\n";
  int64_t masked = 0;
  for (int32_t l : s.mlm_labels) masked += (l >= 0) ? 1 : 0;
  out << "masked positions: " << masked << "\n";

  int64_t start = 1;  // skip [CLS]
  for (int32_t k = 0; k < s.segment_count(); ++k) {
    int64_t end = s.sep_positions[static_cast<size_t>(k)];
    out << "segment " << k << " (original position " << s.so_targets[static_cast<size_t>(k)]
        << "): ";
    for (int64_t t = start; t < end; ++t) {
      if (t > start) out << " ";
      out << vocab.token(s.token_ids[static_cast<size_t>(t)]);
      if (s.mlm_labels[static_cast<size_t>(t)] >= 0) {
        out << "<=" << vocab.token(s.mlm_labels[static_cast<size_t>(t)]);
      }
    }
    if (!s.segment_labels.empty()) {
      out << "   labels:";
      for (int32_t c : s.segment_labels[static_cast<size_t>(k)]) out << " " << c;
      if (s.segment_labels[static_cast<size_t>(k)].empty()) out << " (none)";
    }
    out << "\n";
    start = end + 1;
  }
  return out.str();
}

}  // namespace segorder

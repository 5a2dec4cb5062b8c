// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "data/corpus.hpp"
#include "data/packing.hpp"
#include "data/vocab.hpp"
#include "model/model.hpp"
#include "train/metrics.hpp"
#include "train/optim.hpp"

namespace segorder {

/// Loop-level knobs shared by pre-training and fine-tuning. The optimizer
/// section rides along so one struct describes a whole run.
struct TrainLoopOptions {
  OptimizerConfig optim;
  uint64_t seed = 0;
  int64_t eval_every = 500;        // optimizer steps; 0 disables periodic eval
  int64_t checkpoint_every = 500;  // optimizer steps; 0 disables periodic saves
  int threads = 1;
  std::string out_dir;     // empty: no checkpoints written
  std::string resume;      // checkpoint path; restores params, moments, cursor
  PackingConfig packing;   // per-epoch re-preparation (pretrain) / packing (finetune)
};

struct PretrainOptions {
  TrainLoopOptions loop;
  TrainMode mode = TrainMode::mlm_so;
};

struct FinetuneOptions {
  TrainLoopOptions loop;
  int64_t epochs = 2;
  bool dynamic = false;          // resample L per epoch
  bool class_weighting = false;  // inverse-frequency loss weights
  bool oversample = false;       // duplicate documents with labeled segments
  double oversample_factor = 2.0;
};

/// One metrics-log line. split is "train" or "val".
struct MetricLine {
  int64_t step = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

struct TrainResult {
  std::vector<double> step_losses;  // effective-batch mean loss per optimizer step
  std::vector<MetricLine> log;      // everything that went to the metrics log
  MetricReport final_val;
  int64_t steps_done = 0;
  int64_t best_step = -1;           // finetune only
  double best_value = 0.0;          // finetune only
  std::string best_checkpoint;      // finetune only
  std::string last_checkpoint;
};

/// Pooled evaluation over prepared samples: MLM accuracy over masked
/// positions, SO per-segment and exact-match accuracy, NSP accuracy, and
/// mean losses, as a plain recount over raw predictions.
template <class S>
MetricReport evaluate_pretrain(const ModelParams<S>& params, const std::vector<PackedSample>& samples,
                               TrainMode mode, int32_t pad_id, int threads = 1);

/// Classification metrics over packed (unshuffled, unmasked) samples:
/// micro/macro F1 and MAP@{3,5} pooled over every segment.
template <class S>
MetricReport evaluate_classification(const ModelParams<S>& params,
                                     const std::vector<PackedSample>& samples, int32_t pad_id,
                                     int threads = 1);

/// Joint-objective pre-training over shard samples. `train` holds samples as
/// stored (epoch-0 preparation); later epochs restore them and re-prepare
/// with the run seed. Runs optim.total_steps optimizer steps, cycling the
/// data. Emits (step, split, metric, value) lines to metrics_log.
template <class S>
TrainResult pretrain(ModelParams<S>& params, const std::vector<PackedSample>& train,
                     const std::vector<PackedSample>& val, const Vocab& vocab,
                     const PretrainOptions& opt, std::ostream* metrics_log);

/// Inverse-frequency class weights over training segments, normalized to
/// mean 1 across observed classes; classes with no support get weight 1.
template <class S>
Tensor<S> class_weights_from(const std::vector<Document>& docs, int64_t num_labels);

/// Document copy counts for one epoch of random oversampling: documents with
/// at least one labeled segment appear floor(factor) or ceil(factor) times
/// (Bernoulli on the fraction), others once. Content is never mutated.
std::vector<int64_t> oversample_counts(const std::vector<Document>& docs, double factor,
                                       uint64_t seed, uint64_t epoch);

/// Head fine-tuning: per-epoch oversample -> (dynamic or deterministic)
/// packing -> shuffle-free samples -> head loss. Tracks the best checkpoint
/// by validation micro-F1 (single-label heads) or MAP@3 (multi-label), ties
/// resolved toward the earlier step.
template <class S>
TrainResult finetune(ModelParams<S>& params, const std::vector<Document>& train_docs,
                     const std::vector<Document>& val_docs, const Vocab& vocab,
                     const FinetuneOptions& opt, std::ostream* metrics_log);

}  // namespace segorder

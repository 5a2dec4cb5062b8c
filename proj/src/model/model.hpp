// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core/graph.hpp"
#include "core/rng.hpp"
#include "data/packing.hpp"

namespace segorder {

struct ModelConfig {
  int64_t d = 64;
  int64_t layers = 2;
  int64_t heads = 4;
  int64_t ffn_mult = 4;
  int64_t context = 128;      // C
  int64_t max_segments = 16;  // K_max, bounds the segment positional table
  int64_t vocab_size = 0;
  int64_t num_labels = 0;     // |R|; 0 = no classifier head
  std::string head = "none";  // none | linear | multilabel | gru
  int64_t label_embed_dim = 32;
  double dropout = 0.1;
  bool use_pointer = true;
  bool use_nsp = false;

  int64_t q() const { return d / 4 >= 1 ? d / 4 : 1; }
  int64_t ffn_dim() const { return ffn_mult * d; }
  int64_t head_dim() const { return d / heads; }
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::ordered_json& j);
  /// Names of fields that differ; empty means compatible.
  std::vector<std::string> diff(const ModelConfig& other) const;
};

template <class S>
struct EncoderLayerParams {
  Param<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Param<S> ln1_g, ln1_b;
  Param<S> w1, b1, w2, b2;
  Param<S> ln2_g, ln2_b;
};

/// Owns every trainable tensor. Storage is stable after construction: the
/// graph keys parameter identity by address. `all()` is the canonical
/// deterministic ordering used for gradient harvest, the optimizer, and
/// checkpoints.
template <class S>
struct ModelParams {
  ModelConfig cfg;

  Param<S> tok_embed;  // |V|×d, doubles as the tied MLM output weight
  Param<S> pos_embed;  // C×d
  Param<S> emb_ln_g, emb_ln_b;
  std::vector<EncoderLayerParams<S>> layers;
  Param<S> mlm_bias;  // |V|
  Param<S> ptr_wquery, ptr_wkey;  // q×d
  Param<S> segpos;                // K_max×d
  Param<S> nsp_w, nsp_b;          // 2×d, 2
  Param<S> cls_w, cls_b;          // |R|×d, |R|
  Param<S> gru_wz, gru_uz, gru_bz;
  Param<S> gru_wr, gru_ur, gru_br;
  Param<S> gru_wh, gru_uh, gru_bh;
  Param<S> gru_out_w, gru_out_b;  // |R|×h, |R|
  Param<S> label_embed;           // (|R|+1)×32; last row is the start label

  explicit ModelParams(const ModelConfig& config, uint64_t init_seed);

  /// Active parameters in canonical order (inactive heads excluded).
  std::vector<Param<S>*> all();
  std::vector<const Param<S>*> all() const;
  int64_t parameter_count() const;
  Param<S>* find(const std::string& name);
};

/// Per-sample forward results. Gradients are harvested in all() order so
/// cross-sample summation is deterministic.
struct SampleStats {
  double loss = 0.0;
  double mlm_loss = 0.0;
  double so_loss = 0.0;
  double nsp_loss = 0.0;
  double head_loss = 0.0;
  int64_t mlm_correct = 0;
  int64_t mlm_total = 0;
  int64_t so_correct = 0;
  int64_t so_total = 0;
  bool so_present = false;
  bool so_exact = false;
  int64_t nsp_correct = 0;
  int64_t nsp_total = 0;
  std::vector<int32_t> so_pred;
  /// Head predictions: multiclass/gru -> argmax class per segment;
  /// multilabel -> per-segment score vectors.
  std::vector<int32_t> class_pred;
  std::vector<std::vector<double>> label_scores;
};

enum class TrainMode { mlm_so, mlm_only, mlm_nsp, head };

/// Builds the per-sample graph over shared immutable params. One instance
/// per (sample, pass); not reusable.
template <class S>
class ModelForward {
 public:
  ModelForward(Graph<S>& g, const ModelParams<S>& params, bool training, RngStream* dropout_rng)
      : g_(g), p_(params), training_(training), drop_(dropout_rng) {}

  using Id = typename Graph<S>::Id;

  /// Encoder over the sample's tokens, optionally right-padded to pad_to with
  /// attention-masked [PAD] positions. Returns H (rows = padded length).
  Id encode(const PackedSample& sample, int32_t pad_id, int64_t pad_to = 0);
  Id gather_sep(Id h, const std::vector<int32_t>& sep_positions);
  /// H_SEP + first-K rows of the segment positional table.
  Id add_segment_positions(Id h_sep);
  /// Scaled pointer logits Q·Kᵀ/√q (row-softmax of this is A).
  Id pointer_logits(Id h_sep_prime);
  /// -Σ log a_{i,y_i}; validates y is a permutation.
  Id so_loss(Id ptr_logits, const std::vector<int32_t>& y);
  /// Mean cross-entropy over labeled positions; nullopt when none are labeled.
  std::optional<Id> mlm_loss(Id h, const PackedSample& sample, SampleStats& stats);
  Id nsp_loss(Id h, int8_t nsp_label, SampleStats& stats);
  Id multiclass_loss(Id h_sep, const std::vector<int32_t>& targets, SampleStats& stats);
  Id multilabel_loss(Id h_sep, const std::vector<std::vector<int32_t>>& sets,
                     const Tensor<S>& class_weights, SampleStats& stats);
  Id gru_loss(Id h_sep, const std::vector<int32_t>& targets, bool teacher_forcing,
              SampleStats& stats);

 private:
  Id linear(Id x, const Param<S>& w, const Param<S>& b);
  Id maybe_dropout(Id x);

  Graph<S>& g_;
  const ModelParams<S>& p_;
  bool training_;
  RngStream* drop_;
};

/// Row-wise argmax over pointer attention (need not be a permutation).
std::vector<int32_t> so_predict(const Tensor<float>& a);
std::vector<int32_t> so_predict(const Tensor<double>& a);

/// Full per-sample pass: forward, loss, backward, gradient harvest in
/// params.all() order. Dropout draws come from (seed, "dropout",
/// mix(unit_key, step), epoch); pass training=false for evaluation (no
/// dropout, no backward unless harvest_grads).
template <class S>
SampleStats run_sample(const PackedSample& sample, const ModelParams<S>& params, TrainMode mode,
                       int32_t pad_id, bool training, uint64_t seed, uint64_t epoch,
                       uint64_t step, const Tensor<S>* class_weights,
                       std::vector<Tensor<S>>* grads_out);

extern template class ModelForward<float>;
extern template class ModelForward<double>;
extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace segorder

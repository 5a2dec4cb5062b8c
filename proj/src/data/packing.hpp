// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "data/corpus.hpp"
#include "data/vocab.hpp"

namespace segorder {

/// One encoder-ready sample. Layout: [CLS] s_1 [SEP] ... s_K [SEP], no
/// padding stored (padding happens at batch assembly). `so_targets[i]` is the
/// original position of the segment currently at position i. `mlm_labels`
/// holds the pre-corruption id at every masked/corrupted/kept-by-rule
/// position and -1 elsewhere. `unit_key` seeds all per-sample randomness so
/// epoch re-preparation never depends on iteration order.
struct PackedSample {
  std::vector<int32_t> token_ids;
  std::vector<uint8_t> word_starts;
  std::vector<int32_t> mlm_labels;
  std::vector<int32_t> sep_positions;
  std::vector<int32_t> so_targets;
  int8_t nsp_label = -1;  // -1 absent, 0 not-next, 1 is-next
  std::vector<std::vector<int32_t>> segment_labels;  // empty = unlabeled
  uint64_t unit_key = 0;

  int32_t segment_count() const { return static_cast<int32_t>(sep_positions.size()); }
  int64_t length() const { return static_cast<int64_t>(token_ids.size()); }
};

struct PackingConfig {
  int64_t context = 128;  // C
  double mlm_rate = 0.15;
  double mask_prob = 0.8;    // -> [MASK]
  double random_prob = 0.1;  // -> uniform non-special token
  double keep_prob = 0.1;    // -> unchanged
  int64_t l_min = 3;
  bool shuffle = true;

  void validate() const;
};

/// Greedy in-order fill: appends (segment + [SEP]) while the total with [CLS]
/// stays within C; a segment that cannot fit even alone is tail-truncated to
/// C-2, never dropped. Emitted samples have identity so_targets and no masks.
std::vector<PackedSample> pack_document(const Document& doc, const Vocab& vocab,
                                        const PackingConfig& cfg);

/// Uniform permutation of segments (each keeps its trailing [SEP]); [CLS]
/// stays put. Requires identity so_targets on input.
void shuffle_segments(PackedSample& sample, RngStream& rng);

/// Inverse of shuffle_segments using so_targets; restores identity order.
void unshuffle_segments(PackedSample& sample);

/// Whole-word masking: words selected i.i.d. at cfg.mlm_rate from `select`,
/// one corruption branch per word from `branch` (random-replacement ids are
/// drawn per piece from `branch`). Specials are never selectable.
void apply_mlm_mask(PackedSample& sample, const Vocab& vocab, const PackingConfig& cfg,
                    RngStream& select, RngStream& branch);

/// Restores pre-corruption token ids from mlm_labels and clears them.
void unmask(PackedSample& sample);

/// shuffle + mask drawn from (global_seed, purpose, sample.unit_key, epoch)
/// streams. Input must be unprepared (identity order, no masks).
void prepare_sample(PackedSample& sample, const Vocab& vocab, const PackingConfig& cfg,
                    uint64_t global_seed, uint64_t epoch);

/// Exact inverse of prepare_sample.
void restore_sample(PackedSample& sample);

/// Fine-tuning walk: at each step K = max segments fitting the window,
/// L ~ U[min(l_min,K), K] inclusive, emit the next L segments, advance by L.
/// No shuffling, no masking; labels carried per segment.
std::vector<PackedSample> dynamic_sample(const Document& doc, const Vocab& vocab,
                                         const PackingConfig& cfg, RngStream& rng);

/// floor(C / avg_segment_tokens); the packing throughput multiplier.
int64_t efficiency_gain(int64_t context, double avg_segment_tokens);

/// Classic next-sentence pairs: [CLS] A [SEP] B [SEP], 50/50 true successor
/// vs random segment from another document. Needs >= 2 documents.
std::vector<PackedSample> make_nsp_pairs(const std::vector<Document>& docs, const Vocab& vocab,
                                         const PackingConfig& cfg, RngStream& rng);

}  // namespace segorder

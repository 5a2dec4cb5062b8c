// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/corpus.hpp"

namespace segorder {

/// Synthetic corpus recipe. Word inventory is single-token by construction
/// (fillers w<i>, ordinal cues pos<i>, chain links lnk<i>, class cues cat<i>)
/// so WordPiece keeps words whole and whole-word masking is per-token.
struct SynthSpec {
  int64_t docs = 100;
  int64_t segments_min = 3;
  int64_t segments_max = 8;
  int64_t tokens_min = 8;
  int64_t tokens_max = 16;
  /// none: order-free text (ordering stays at chance).
  /// ordinal: each segment starts with pos<original index>.
  /// chain: segment i's last token equals segment i+1's first token, so order
  /// is inferable only from inter-segment context.
  enum class Cue { none, ordinal, chain };
  Cue cue = Cue::ordinal;
  /// classes > 1 records labels and injects cat<digit> cue tokens.
  int64_t classes = 1;
  /// single: one label per segment. multi: a possibly-empty label set drawn
  /// per class at multi_rate.
  std::string label_mode = "single";
  /// unigram: label = own digit. neighbor: label = (own + next digit) mod
  /// classes, last segment = own digit. Applies to single mode only.
  std::string label_rule = "unigram";
  double multi_rate = 0.3;
  uint64_t seed = 0;
  int64_t filler_words = 200;
  int64_t link_words = 64;
};

/// Full token list for the spec, specials first; one token per line when
/// written out gives a vocabulary where every synthetic word is one piece.
std::vector<std::string> synth_vocab_tokens(const SynthSpec& spec);

/// Deterministic in (spec, seed): per-document RNG streams keyed by index.
std::vector<Document> synth_corpus(const SynthSpec& spec);

SynthSpec::Cue synth_cue_from(const std::string& name);
const char* synth_cue_name(SynthSpec::Cue cue);

}  // namespace segorder

// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace segorder {

/// WordPiece vocabulary. One token per line, line index = id. [PAD] must sit
/// at id 0; the other four specials may appear anywhere. Duplicate lines are
/// skipped without consuming an id so ids stay dense.
struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int32_t> token_to_id;
  int32_t pad_id = -1;
  int32_t unk_id = -1;
  int32_t cls_id = -1;
  int32_t sep_id = -1;
  int32_t mask_id = -1;
  int64_t max_word_chars = 100;
  uint64_t fingerprint = 0;  // FNV-1a64 of the source bytes
  std::vector<std::string> warnings;

  int32_t size() const { return static_cast<int32_t>(id_to_token.size()); }
  bool is_special(int32_t id) const {
    return id == pad_id || id == unk_id || id == cls_id || id == sep_id || id == mask_id;
  }
  /// -1 when absent.
  int32_t id_of(std::string_view token) const;
  const std::string& token(int32_t id) const;
  /// Ids of all non-special tokens, ascending. Used by the 10% random-replace
  /// masking branch.
  std::vector<int32_t> non_special_ids() const;
};

Vocab load_vocab(std::istream& in);
Vocab load_vocab_file(const std::string& path);

struct TokenizedSegment {
  std::vector<int32_t> token_ids;
  std::vector<uint8_t> word_starts;  // 1 where a token begins a whole word
};

/// Splits on Unicode whitespace; every punctuation code point is its own
/// word; case preserved; no normalization (NFC input assumed). Exposed for
/// direct testing.
std::vector<std::string> presplit_words(std::string_view text);

/// Greedy longest-match-first WordPiece. A word longer than max_word_chars
/// code points, or with an unmatchable remainder, becomes a single [UNK].
TokenizedSegment wordpiece_tokenize(std::string_view text, const Vocab& vocab);

/// Joins tokens with spaces, gluing "##" continuations onto the previous
/// piece with the prefix stripped.
std::string detokenize(std::span<const int32_t> ids, const Vocab& vocab);

}  // namespace segorder

// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "data/synth.hpp"

#include <cstdio>

#include "core/common.hpp"
#include "core/rng.hpp"

namespace segorder {

namespace {

std::string padded(const char* prefix, int64_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*lld", prefix, width, static_cast<long long>(i));
  return buf;
}

void validate(const SynthSpec& s) {
  if (s.docs < 1) throw ConfigError("synth: docs must be >= 1");
  if (s.segments_min < 1 || s.segments_min > s.segments_max)
    throw ConfigError("synth: bad segments range");
  if (s.tokens_min < 1 || s.tokens_min > s.tokens_max)
    throw ConfigError("synth: bad tokens range");
  if (s.classes < 1) throw ConfigError("synth: classes must be >= 1");
  if (s.filler_words < 1) throw ConfigError("synth: filler_words must be >= 1");
  if (s.link_words < 1) throw ConfigError("synth: link_words must be >= 1");
  if (s.label_mode != "single" && s.label_mode != "multi")
    throw ConfigError("synth: label_mode must be 'single' or 'multi'");
  if (s.label_rule != "unigram" && s.label_rule != "neighbor")
    throw ConfigError("synth: label_rule must be 'unigram' or 'neighbor'");
  if (s.multi_rate < 0.0 || s.multi_rate > 1.0)
    throw ConfigError("synth: multi_rate must be in [0,1]");
  if (s.cue == SynthSpec::Cue::chain && s.tokens_min < 2)
    throw ConfigError("synth: chain cue needs tokens_min >= 2");
  if (s.classes > 1 && s.label_mode == "single" && s.tokens_min < 3)
    throw ConfigError("synth: single-label cues need tokens_min >= 3");
  if (s.classes > 1 && s.label_mode == "multi" && s.tokens_min < s.classes + 2)
    throw ConfigError("synth: multi-label cues need tokens_min >= classes + 2");
}

}  // namespace

SynthSpec::Cue synth_cue_from(const std::string& name) {
  if (name == "none") return SynthSpec::Cue::none;
  if (name == "ordinal") return SynthSpec::Cue::ordinal;
  if (name == "chain") return SynthSpec::Cue::chain;
  throw ConfigError("unknown cue '" + name + "' (none|ordinal|chain)");
}

const char* synth_cue_name(SynthSpec::Cue cue) {
  switch (cue) {
    case SynthSpec::Cue::none: return "none";
    case SynthSpec::Cue::ordinal: return "ordinal";
    case SynthSpec::Cue::chain: return "chain";
  }
  throw ConfigError("cue out of range");
}

std::vector<std::string> synth_vocab_tokens(const SynthSpec& spec) {
  validate(spec);
  std::vector<std::string> toks = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (int64_t i = 0; i < spec.segments_max; ++i) toks.push_back("pos" + std::to_string(i));
  for (int64_t i = 0; i < spec.link_words; ++i) toks.push_back("lnk" + std::to_string(i));
  if (spec.classes > 1)
    for (int64_t i = 0; i < spec.classes; ++i) toks.push_back("cat" + std::to_string(i));
  for (int64_t i = 0; i < spec.filler_words; ++i) toks.push_back("w" + std::to_string(i));
  return toks;
}

std::vector<Document> synth_corpus(const SynthSpec& spec) {
  validate(spec);
  std::vector<Document> docs;
  docs.reserve(static_cast<size_t>(spec.docs));
  for (int64_t di = 0; di < spec.docs; ++di) {
    RngStream rng(spec.seed, rng_purpose::synth, static_cast<uint64_t>(di));
    Document doc;
    doc.id = padded("synth-", di, 6);
    const int64_t n_seg =
        spec.segments_min +
        static_cast<int64_t>(rng.next_below(
            static_cast<uint64_t>(spec.segments_max - spec.segments_min + 1)));
    std::vector<std::vector<std::string>> words(static_cast<size_t>(n_seg));
    std::vector<int64_t> digit(static_cast<size_t>(n_seg), 0);
    std::vector<std::vector<int32_t>> sets(static_cast<size_t>(n_seg));
    std::string pending_link;
    for (int64_t si = 0; si < n_seg; ++si) {
      auto& w = words[static_cast<size_t>(si)];
      const int64_t n_tok =
          spec.tokens_min +
          static_cast<int64_t>(rng.next_below(
              static_cast<uint64_t>(spec.tokens_max - spec.tokens_min + 1)));
      w.reserve(static_cast<size_t>(n_tok));
      for (int64_t t = 0; t < n_tok; ++t)
        w.push_back("w" + std::to_string(rng.next_below(static_cast<uint64_t>(spec.filler_words))));
      if (spec.cue == SynthSpec::Cue::ordinal) {
        w[0] = "pos" + std::to_string(si);
      } else if (spec.cue == SynthSpec::Cue::chain) {
        if (si > 0) w[0] = pending_link;
        if (si < n_seg - 1) {
          pending_link =
              "lnk" + std::to_string(rng.next_below(static_cast<uint64_t>(spec.link_words)));
          w.back() = pending_link;
        }
      }
      if (spec.classes > 1) {
        if (spec.label_mode == "single") {
          digit[static_cast<size_t>(si)] =
              static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.classes)));
          w[1] = "cat" + std::to_string(digit[static_cast<size_t>(si)]);
        } else {
          auto& set = sets[static_cast<size_t>(si)];
          size_t slot = 1;
          for (int64_t k = 0; k < spec.classes; ++k) {
            if (rng.next_double() < spec.multi_rate) {
              set.push_back(static_cast<int32_t>(k));
              w[slot++] = "cat" + std::to_string(k);
            }
          }
        }
      }
    }
    for (int64_t si = 0; si < n_seg; ++si) {
      Segment seg;
      const uint64_t kd = rng.next_below(10);
      seg.kind = kd < 7   ? SegmentKind::paragraph
                 : kd == 7 ? SegmentKind::headline
                 : kd == 8 ? SegmentKind::table
                           : SegmentKind::enumeration;
      std::string text;
      for (size_t t = 0; t < words[static_cast<size_t>(si)].size(); ++t) {
        if (t) text += ' ';
        text += words[static_cast<size_t>(si)][t];
      }
      seg.text = std::move(text);
      doc.segments.push_back(std::move(seg));
    }
    if (spec.classes > 1) {
      doc.labels.resize(static_cast<size_t>(n_seg));
      if (spec.label_mode == "single") {
        for (int64_t si = 0; si < n_seg; ++si) {
          int64_t lab = digit[static_cast<size_t>(si)];
          if (spec.label_rule == "neighbor" && si < n_seg - 1)
            lab = (lab + digit[static_cast<size_t>(si + 1)]) % spec.classes;
          doc.labels[static_cast<size_t>(si)] = {static_cast<int32_t>(lab)};
        }
      } else {
        for (int64_t si = 0; si < n_seg; ++si)
          doc.labels[static_cast<size_t>(si)] = sets[static_cast<size_t>(si)];
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace segorder

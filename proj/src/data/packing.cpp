// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "data/packing.hpp"

#include <algorithm>
#include <cmath>

#include "core/common.hpp"

namespace segorder {

void PackingConfig::validate() const {
  if (context < 3) throw ConfigError("packing: context must be >= 3");
  if (mlm_rate < 0.0 || mlm_rate > 1.0) throw ConfigError("packing: mlm_rate must be in [0,1]");
  if (mask_prob < 0.0 || random_prob < 0.0 || keep_prob < 0.0 ||
      std::abs(mask_prob + random_prob + keep_prob - 1.0) > 1e-9)
    throw ConfigError("packing: mask/random/keep split must be non-negative and sum to 1");
  if (l_min < 1) throw ConfigError("packing: l_min must be >= 1");
}

namespace {

struct SegmentSpans {
  // Token span of segment k (exclusive of its [SEP]) is
  // [starts[k], sample.sep_positions[k]).
  std::vector<int32_t> starts;
};

SegmentSpans spans_of(const PackedSample& s) {
  SegmentSpans sp;
  sp.starts.reserve(s.sep_positions.size());
  int32_t prev = 0;  // position of [CLS] or previous [SEP]
  for (int32_t sep : s.sep_positions) {
    sp.starts.push_back(prev + 1);
    prev = sep;
  }
  return sp;
}

void append_segment(PackedSample& out, const TokenizedSegment& ts, int64_t take,
                    int32_t sep_id) {
  for (int64_t t = 0; t < take; ++t) {
    out.token_ids.push_back(ts.token_ids[static_cast<size_t>(t)]);
    out.word_starts.push_back(ts.word_starts[static_cast<size_t>(t)]);
  }
  out.token_ids.push_back(sep_id);
  out.word_starts.push_back(1);
  out.sep_positions.push_back(static_cast<int32_t>(out.token_ids.size() - 1));
}

PackedSample fresh_sample(const Vocab& vocab, const std::string& doc_id, size_t ordinal) {
  PackedSample s;
  s.token_ids.push_back(vocab.cls_id);
  s.word_starts.push_back(1);
  s.unit_key = mix_key(fnv1a64(doc_id), static_cast<uint64_t>(ordinal));
  return s;
}

void finish_sample(PackedSample& s, const Document& doc, int64_t first_seg) {
  const auto k = static_cast<int64_t>(s.sep_positions.size());
  s.so_targets.resize(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) s.so_targets[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  s.mlm_labels.assign(s.token_ids.size(), -1);
  if (doc.has_labels()) {
    s.segment_labels.assign(doc.labels.begin() + first_seg, doc.labels.begin() + first_seg + k);
  }
}

}  // namespace

std::vector<PackedSample> pack_document(const Document& doc, const Vocab& vocab,
                                        const PackingConfig& cfg) {
  cfg.validate();
  const int64_t C = cfg.context;
  std::vector<TokenizedSegment> toks;
  toks.reserve(doc.segments.size());
  for (const Segment& seg : doc.segments) toks.push_back(wordpiece_tokenize(seg.text, vocab));

  std::vector<PackedSample> out;
  PackedSample cur = fresh_sample(vocab, doc.id, out.size());
  int64_t first_seg = 0;
  for (size_t si = 0; si < toks.size(); ++si) {
    const auto len = static_cast<int64_t>(toks[si].token_ids.size());
    const int64_t cost = len + 1;
    if (static_cast<int64_t>(cur.token_ids.size()) + cost <= C) {
      append_segment(cur, toks[si], len, vocab.sep_id);
      continue;
    }
    if (!cur.sep_positions.empty()) {
      finish_sample(cur, doc, first_seg);
      out.push_back(std::move(cur));
      first_seg = static_cast<int64_t>(si);
      cur = fresh_sample(vocab, doc.id, out.size());
    }
    if (static_cast<int64_t>(cur.token_ids.size()) + cost <= C) {
      append_segment(cur, toks[si], len, vocab.sep_id);
    } else {
      // Alone and still too long: tail-truncate to C-2, never drop.
      append_segment(cur, toks[si], C - 2, vocab.sep_id);
      finish_sample(cur, doc, first_seg);
      out.push_back(std::move(cur));
      first_seg = static_cast<int64_t>(si) + 1;
      cur = fresh_sample(vocab, doc.id, out.size());
    }
  }
  if (!cur.sep_positions.empty()) {
    finish_sample(cur, doc, first_seg);
    out.push_back(std::move(cur));
  }
  return out;
}

void shuffle_segments(PackedSample& sample, RngStream& rng) {
  const int32_t k = sample.segment_count();
  for (int32_t i = 0; i < k; ++i)
    if (sample.so_targets[static_cast<size_t>(i)] != i)
      throw DataError("shuffle_segments: sample already shuffled");
  std::vector<int32_t> pi(static_cast<size_t>(k));
  for (int32_t i = 0; i < k; ++i) pi[static_cast<size_t>(i)] = i;
  rng.shuffle(pi);

  const SegmentSpans sp = spans_of(sample);
  PackedSample next;
  next.token_ids.reserve(sample.token_ids.size());
  next.token_ids.push_back(sample.token_ids[0]);  // [CLS]
  next.word_starts.push_back(1);
  next.mlm_labels.push_back(sample.mlm_labels[0]);
  for (int32_t i = 0; i < k; ++i) {
    const int32_t src = pi[static_cast<size_t>(i)];
    const int32_t a = sp.starts[static_cast<size_t>(src)];
    const int32_t b = sample.sep_positions[static_cast<size_t>(src)];  // inclusive [SEP]
    for (int32_t p = a; p <= b; ++p) {
      next.token_ids.push_back(sample.token_ids[static_cast<size_t>(p)]);
      next.word_starts.push_back(sample.word_starts[static_cast<size_t>(p)]);
      next.mlm_labels.push_back(sample.mlm_labels[static_cast<size_t>(p)]);
    }
    next.sep_positions.push_back(static_cast<int32_t>(next.token_ids.size() - 1));
    if (!sample.segment_labels.empty())
      next.segment_labels.push_back(sample.segment_labels[static_cast<size_t>(src)]);
  }
  sample.token_ids = std::move(next.token_ids);
  sample.word_starts = std::move(next.word_starts);
  sample.mlm_labels = std::move(next.mlm_labels);
  sample.sep_positions = std::move(next.sep_positions);
  if (!sample.segment_labels.empty()) sample.segment_labels = std::move(next.segment_labels);
  sample.so_targets = std::move(pi);
}

void unshuffle_segments(PackedSample& sample) {
  const int32_t k = sample.segment_count();
  const SegmentSpans sp = spans_of(sample);
  PackedSample next;
  next.token_ids.push_back(sample.token_ids[0]);
  next.word_starts.push_back(1);
  next.mlm_labels.push_back(sample.mlm_labels[0]);
  // Segment now at position i belongs at original position so_targets[i].
  std::vector<int32_t> where(static_cast<size_t>(k), -1);
  for (int32_t i = 0; i < k; ++i) {
    const int32_t orig = sample.so_targets[static_cast<size_t>(i)];
    if (orig < 0 || orig >= k || where[static_cast<size_t>(orig)] != -1)
      throw DataError("unshuffle_segments: so_targets is not a permutation");
    where[static_cast<size_t>(orig)] = i;
  }
  for (int32_t orig = 0; orig < k; ++orig) {
    const int32_t src = where[static_cast<size_t>(orig)];
    const int32_t a = sp.starts[static_cast<size_t>(src)];
    const int32_t b = sample.sep_positions[static_cast<size_t>(src)];
    for (int32_t p = a; p <= b; ++p) {
      next.token_ids.push_back(sample.token_ids[static_cast<size_t>(p)]);
      next.word_starts.push_back(sample.word_starts[static_cast<size_t>(p)]);
      next.mlm_labels.push_back(sample.mlm_labels[static_cast<size_t>(p)]);
    }
    next.sep_positions.push_back(static_cast<int32_t>(next.token_ids.size() - 1));
    if (!sample.segment_labels.empty())
      next.segment_labels.push_back(sample.segment_labels[static_cast<size_t>(src)]);
  }
  sample.token_ids = std::move(next.token_ids);
  sample.word_starts = std::move(next.word_starts);
  sample.mlm_labels = std::move(next.mlm_labels);
  sample.sep_positions = std::move(next.sep_positions);
  if (!sample.segment_labels.empty()) sample.segment_labels = std::move(next.segment_labels);
  for (int32_t i = 0; i < k; ++i) sample.so_targets[static_cast<size_t>(i)] = i;
}

void apply_mlm_mask(PackedSample& sample, const Vocab& vocab, const PackingConfig& cfg,
                    RngStream& select, RngStream& branch) {
  const std::vector<int32_t> pool = vocab.non_special_ids();
  const auto n = static_cast<int64_t>(sample.token_ids.size());
  int64_t p = 0;
  while (p < n) {
    if (vocab.is_special(sample.token_ids[static_cast<size_t>(p)])) {
      ++p;
      continue;
    }
    // Word = run starting here while continuations follow.
    int64_t end = p + 1;
    while (end < n && sample.word_starts[static_cast<size_t>(end)] == 0 &&
           !vocab.is_special(sample.token_ids[static_cast<size_t>(end)]))
      ++end;
    if (select.next_double() < cfg.mlm_rate) {
      const double b = branch.next_double();
      for (int64_t q = p; q < end; ++q) {
        sample.mlm_labels[static_cast<size_t>(q)] = sample.token_ids[static_cast<size_t>(q)];
        if (b < cfg.mask_prob) {
          sample.token_ids[static_cast<size_t>(q)] = vocab.mask_id;
        } else if (b < cfg.mask_prob + cfg.random_prob) {
          sample.token_ids[static_cast<size_t>(q)] =
              pool[static_cast<size_t>(branch.next_below(pool.size()))];
        }  // else: kept unchanged, still labeled
      }
    }
    p = end;
  }
}

void unmask(PackedSample& sample) {
  for (size_t p = 0; p < sample.token_ids.size(); ++p) {
    if (sample.mlm_labels[p] != -1) {
      sample.token_ids[p] = sample.mlm_labels[p];
      sample.mlm_labels[p] = -1;
    }
  }
}

void prepare_sample(PackedSample& sample, const Vocab& vocab, const PackingConfig& cfg,
                    uint64_t global_seed, uint64_t epoch) {
  // NSP pairs are never shuffled: segment order carries the label.
  if (cfg.shuffle && sample.nsp_label < 0) {
    RngStream sh(global_seed, rng_purpose::shuffle, sample.unit_key, epoch);
    shuffle_segments(sample, sh);
  }
  RngStream sel(global_seed, rng_purpose::mask_select, sample.unit_key, epoch);
  RngStream br(global_seed, rng_purpose::mask_branch, sample.unit_key, epoch);
  apply_mlm_mask(sample, vocab, cfg, sel, br);
}

void restore_sample(PackedSample& sample) {
  unmask(sample);
  unshuffle_segments(sample);
}

std::vector<PackedSample> dynamic_sample(const Document& doc, const Vocab& vocab,
                                         const PackingConfig& cfg, RngStream& rng) {
  cfg.validate();
  const int64_t C = cfg.context;
  std::vector<TokenizedSegment> toks;
  toks.reserve(doc.segments.size());
  for (const Segment& seg : doc.segments) toks.push_back(wordpiece_tokenize(seg.text, vocab));

  std::vector<PackedSample> out;
  size_t p = 0;
  while (p < toks.size()) {
    int64_t total = 1;
    int64_t fit = 0;
    while (p + static_cast<size_t>(fit) < toks.size()) {
      const auto len =
          static_cast<int64_t>(toks[p + static_cast<size_t>(fit)].token_ids.size());
      if (total + len + 1 > C) break;
      total += len + 1;
      ++fit;
    }
    PackedSample s = fresh_sample(vocab, doc.id, out.size());
    if (fit == 0) {
      append_segment(s, toks[p], C - 2, vocab.sep_id);
      finish_sample(s, doc, static_cast<int64_t>(p));
      out.push_back(std::move(s));
      ++p;
      continue;
    }
    const int64_t lo = std::min(cfg.l_min, fit);
    const int64_t L = lo + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(fit - lo + 1)));
    for (int64_t i = 0; i < L; ++i) {
      const auto& ts = toks[p + static_cast<size_t>(i)];
      append_segment(s, ts, static_cast<int64_t>(ts.token_ids.size()), vocab.sep_id);
    }
    finish_sample(s, doc, static_cast<int64_t>(p));
    out.push_back(std::move(s));
    p += static_cast<size_t>(L);
  }
  return out;
}

int64_t efficiency_gain(int64_t context, double avg_segment_tokens) {
  if (avg_segment_tokens <= 0.0)
    throw ConfigError("efficiency_gain: avg_segment_tokens must be > 0");
  return static_cast<int64_t>(std::floor(static_cast<double>(context) / avg_segment_tokens));
}

std::vector<PackedSample> make_nsp_pairs(const std::vector<Document>& docs, const Vocab& vocab,
                                         const PackingConfig& cfg, RngStream& rng) {
  cfg.validate();
  if (docs.size() < 2) throw DataError("nsp pairs need at least 2 documents");
  const int64_t C = cfg.context;
  std::vector<PackedSample> out;
  for (size_t di = 0; di < docs.size(); ++di) {
    const Document& doc = docs[di];
    for (size_t si = 0; si + 1 < doc.segments.size(); ++si) {
      const bool is_next = rng.next_double() < 0.5;
      TokenizedSegment a = wordpiece_tokenize(doc.segments[si].text, vocab);
      TokenizedSegment b;
      if (is_next) {
        b = wordpiece_tokenize(doc.segments[si + 1].text, vocab);
      } else {
        size_t dj = di;
        while (dj == di)
          dj = static_cast<size_t>(rng.next_below(static_cast<uint64_t>(docs.size())));
        const Document& other = docs[dj];
        const auto sj = static_cast<size_t>(
            rng.next_below(static_cast<uint64_t>(other.segments.size())));
        b = wordpiece_tokenize(other.segments[sj].text, vocab);
      }
      // Budget: [CLS] + A + [SEP] + B + [SEP]; trim the longer tail first.
      int64_t la = static_cast<int64_t>(a.token_ids.size());
      int64_t lb = static_cast<int64_t>(b.token_ids.size());
      const int64_t budget = C - 3;
      while (la + lb > budget && (la > 0 || lb > 0)) {
        if (lb >= la)
          --lb;
        else
          --la;
      }
      PackedSample s = fresh_sample(vocab, doc.id, si);
      s.unit_key = mix_key(s.unit_key, 0x6e7370ULL);  // keep nsp streams off pack streams
      append_segment(s, a, la, vocab.sep_id);
      append_segment(s, b, lb, vocab.sep_id);
      s.so_targets = {0, 1};
      s.mlm_labels.assign(s.token_ids.size(), -1);
      s.nsp_label = is_next ? 1 : 0;
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace segorder

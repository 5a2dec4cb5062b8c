// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace segorder {

struct Vocab;

enum class SegmentKind : uint8_t { paragraph = 0, headline = 1, table = 2, enumeration = 3 };

const char* segment_kind_name(SegmentKind k);
/// Throws DataError on any name outside the closed four-kind set.
SegmentKind segment_kind_from(const std::string& name);

struct Segment {
  SegmentKind kind = SegmentKind::paragraph;
  std::string text;  // non-empty after trim, enforced by the parser
};

/// A document is the packing unit. `labels`, when non-empty, carries one
/// entry per segment; each entry is a sorted label-id set. Multi-class data
/// uses singleton sets (validated again at fine-tune time).
struct Document {
  std::string id;
  std::vector<Segment> segments;
  std::vector<std::vector<int32_t>> labels;

  bool has_labels() const { return !labels.empty(); }
};

struct ParseIssue {
  size_t line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<Document> documents;
  std::vector<ParseIssue> issues;
};

/// One JSON object per line: {"id", "segments":[{"kind","text"}...],
/// optional "labels": [int...] or [[int...]...]}. Malformed lines become
/// issues; parsing continues.
ParseResult parse_jsonl(std::istream& in);
ParseResult parse_jsonl_file(const std::string& path);

/// Inverse of parse_jsonl for valid documents; single-label documents are
/// written back as flat integer arrays so the round trip is exact.
void serialize_jsonl(const std::vector<Document>& docs, std::ostream& out);
void serialize_jsonl_file(const std::vector<Document>& docs, const std::string& path);

struct CorpusStats {
  int64_t documents = 0;
  int64_t segments = 0;
  int64_t samples = 0;
  int64_t tokens = 0;  // post-WordPiece, pre-truncation
  double avg_segment_tokens = 0.0;
  double avg_segments_per_sample = 0.0;
};

/// Token counts use WordPiece; sample counts simulate context-window packing
/// at capacity C. Implemented alongside the packer.
CorpusStats corpus_stats(const std::vector<Document>& docs, const Vocab& vocab, int64_t C);

/// Flat "key\tvalue" lines, keys in the declaration order above.
void write_stats(const CorpusStats& s, std::ostream& out);

}  // namespace segorder

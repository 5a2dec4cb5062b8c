// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "data/corpus.hpp"
#include "data/packing.hpp"
#include "data/vocab.hpp"

namespace segorder {

CorpusStats corpus_stats(const std::vector<Document>& docs, const Vocab& vocab, int64_t C) {
  CorpusStats st;
  st.documents = static_cast<int64_t>(docs.size());
  PackingConfig cfg;
  cfg.context = C;
  for (const Document& doc : docs) {
    st.segments += static_cast<int64_t>(doc.segments.size());
    for (const Segment& seg : doc.segments)
      st.tokens += static_cast<int64_t>(wordpiece_tokenize(seg.text, vocab).token_ids.size());
    st.samples += static_cast<int64_t>(pack_document(doc, vocab, cfg).size());
  }
  if (st.segments > 0)
    st.avg_segment_tokens = static_cast<double>(st.tokens) / static_cast<double>(st.segments);
  if (st.samples > 0)
    st.avg_segments_per_sample =
        static_cast<double>(st.segments) / static_cast<double>(st.samples);
  return st;
}

}  // namespace segorder

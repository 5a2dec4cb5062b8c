// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "data/corpus.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "core/common.hpp"

namespace segorder {

using ordered_json = nlohmann::ordered_json;

const char* segment_kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::paragraph: return "paragraph";
    case SegmentKind::headline: return "headline";
    case SegmentKind::table: return "table";
    case SegmentKind::enumeration: return "enumeration";
  }
  throw DataError("segment kind out of range");
}

SegmentKind segment_kind_from(const std::string& name) {
  if (name == "paragraph") return SegmentKind::paragraph;
  if (name == "headline") return SegmentKind::headline;
  if (name == "table") return SegmentKind::table;
  if (name == "enumeration") return SegmentKind::enumeration;
  throw DataError("unknown segment kind '" + name + "'");
}

namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

Document parse_document(const ordered_json& j) {
  if (!j.is_object()) throw DataError("document must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "id" && key != "segments" && key != "labels")
      throw DataError("unknown document key '" + key + "'");
  }
  Document d;
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
    throw DataError("'id' must be a non-empty string");
  d.id = j["id"].get<std::string>();
  if (!j.contains("segments") || !j["segments"].is_array() || j["segments"].empty())
    throw DataError("'segments' must be a non-empty array");
  for (const auto& sj : j["segments"]) {
    if (!sj.is_object()) throw DataError("segment must be an object");
    for (const auto& [key, _] : sj.items()) {
      if (key != "kind" && key != "text") throw DataError("unknown segment key '" + key + "'");
    }
    if (!sj.contains("kind") || !sj["kind"].is_string())
      throw DataError("segment 'kind' must be a string");
    if (!sj.contains("text") || !sj["text"].is_string())
      throw DataError("segment 'text' must be a string");
    Segment s;
    s.kind = segment_kind_from(sj["kind"].get<std::string>());
    s.text = sj["text"].get<std::string>();
    if (s.text.empty() || is_blank(s.text))
      throw DataError("segment text empty after whitespace trim");
    d.segments.push_back(std::move(s));
  }
  if (j.contains("labels")) {
    const auto& lj = j["labels"];
    if (!lj.is_array() || lj.size() != d.segments.size())
      throw DataError("'labels' must be an array with one entry per segment");
    for (const auto& e : lj) {
      std::vector<int32_t> set;
      if (e.is_number_integer()) {
        set.push_back(e.get<int32_t>());
      } else if (e.is_array()) {
        for (const auto& x : e) {
          if (!x.is_number_integer()) throw DataError("label entries must be integers");
          set.push_back(x.get<int32_t>());
        }
      } else {
        throw DataError("label entry must be an integer or an integer array");
      }
      for (int32_t id : set)
        if (id < 0) throw DataError("label ids must be non-negative");
      std::sort(set.begin(), set.end());
      set.erase(std::unique(set.begin(), set.end()), set.end());
      d.labels.push_back(std::move(set));
    }
  }
  return d;
}

}  // namespace

ParseResult parse_jsonl(std::istream& in) {
  ParseResult result;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || is_blank(line)) continue;
    try {
      ordered_json j = ordered_json::parse(line);
      result.documents.push_back(parse_document(j));
    } catch (const ordered_json::exception& e) {
      result.issues.push_back({line_no, std::string("json: ") + e.what()});
    } catch (const DataError& e) {
      result.issues.push_back({line_no, e.what()});
    }
  }
  return result;
}

ParseResult parse_jsonl_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return parse_jsonl(in);
}

void serialize_jsonl(const std::vector<Document>& docs, std::ostream& out) {
  for (const Document& d : docs) {
    ordered_json j;
    j["id"] = d.id;
    j["segments"] = ordered_json::array();
    for (const Segment& s : d.segments)
      j["segments"].push_back({{"kind", segment_kind_name(s.kind)}, {"text", s.text}});
    if (d.has_labels()) {
      const bool all_single = std::all_of(d.labels.begin(), d.labels.end(),
                                          [](const auto& s) { return s.size() == 1; });
      ordered_json lj = ordered_json::array();
      for (const auto& set : d.labels) {
        if (all_single)
          lj.push_back(set[0]);
        else
          lj.push_back(set);
      }
      j["labels"] = std::move(lj);
    }
    out << j.dump() << '\n';
  }
}

void serialize_jsonl_file(const std::vector<Document>& docs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  serialize_jsonl(docs, out);
  if (!out) throw DataError("write failed: " + path);
}

void write_stats(const CorpusStats& s, std::ostream& out) {
  out << "documents\t" << s.documents << '\n';
  out << "segments\t" << s.segments << '\n';
  out << "samples\t" << s.samples << '\n';
  out << "tokens\t" << s.tokens << '\n';
  out << "avg_segment_tokens\t" << s.avg_segment_tokens << '\n';
  out << "avg_segments_per_sample\t" << s.avg_segments_per_sample << '\n';
}

}  // namespace segorder

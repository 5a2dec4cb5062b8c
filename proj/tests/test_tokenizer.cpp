// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
//
// Vocabulary loading and greedy WordPiece tokenization.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "core/common.hpp"
#include "data/vocab.hpp"
#include "tests/test_util.hpp"

using namespace segorder;
using namespace segorder::testutil;

namespace {

std::vector<std::string> ids_to_tokens(const TokenizedSegment& t, const Vocab& v) {
  std::vector<std::string> out;
  for (int32_t id : t.token_ids) out.push_back(v.token(id));
  return out;
}

}  // namespace

TEST_CASE("load vocab: specials only") {
  Vocab v = make_vocab();
  CHECK(v.size() == 5);
  CHECK(v.pad_id == 0);
  CHECK(v.unk_id == 1);
  CHECK(v.cls_id == 2);
  CHECK(v.sep_id == 3);
  CHECK(v.mask_id == 4);
}

TEST_CASE("load vocab: missing special names the absentee") {
  std::istringstream in("[PAD]\n[UNK]\n[CLS]\n[SEP]\nplay\n");
  try {
    load_vocab(in);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("[MASK]") != std::string::npos);
  }
}

TEST_CASE("load vocab: duplicate line warns and keeps ids dense") {
  std::istringstream in("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nplay\nplay\ning\n");
  Vocab v = load_vocab(in);
  CHECK(v.size() == 7);  // duplicate "play" does not consume an id
  CHECK_FALSE(v.warnings.empty());
  CHECK(v.id_of("ing") == 6);
}

TEST_CASE("load vocab: id-token bijection on a 30-token vocabulary") {
  Vocab v = make_word_vocab(25);
  REQUIRE(v.size() == 30);
  for (int32_t id = 0; id < v.size(); ++id) CHECK(v.id_of(v.token(id)) == id);
}

TEST_CASE("presplit: whitespace and punctuation") {
  auto words = presplit_words("Hello, world!  two\twords");
  std::vector<std::string> want = {"Hello", ",", "world", "!", "two", "words"};
  CHECK(words == want);
  CHECK(presplit_words("").empty());
  CHECK(presplit_words("   ").empty());
}

TEST_CASE("wordpiece: continuation pieces and word starts") {
  Vocab v = make_vocab({"play", "##ing"});
  TokenizedSegment t = wordpiece_tokenize("playing", v);
  CHECK(ids_to_tokens(t, v) == std::vector<std::string>{"play", "##ing"});
  CHECK(t.word_starts == std::vector<uint8_t>{1, 0});

  TokenizedSegment t2 = wordpiece_tokenize("play playing", v);
  CHECK(ids_to_tokens(t2, v) == std::vector<std::string>{"play", "play", "##ing"});
  CHECK(t2.word_starts == std::vector<uint8_t>{1, 1, 0});
}

TEST_CASE("wordpiece: unmatchable words fall back to a single UNK") {
  Vocab v = make_vocab({"play", "##ing"});
  TokenizedSegment t = wordpiece_tokenize("zzz", v);
  REQUIRE(t.token_ids.size() == 1);
  CHECK(t.token_ids[0] == v.unk_id);
  CHECK(t.word_starts == std::vector<uint8_t>{1});

  // Unmatchable remainder after a matched prefix: whole word becomes UNK.
  TokenizedSegment t2 = wordpiece_tokenize("playz", v);
  REQUIRE(t2.token_ids.size() == 1);
  CHECK(t2.token_ids[0] == v.unk_id);
}

TEST_CASE("wordpiece: greedy longest match first") {
  Vocab v = make_vocab({"a", "ab", "abc", "##d", "##cd"});
  // "abcd" must take "abc" then "##d", never "ab"+"##cd" or "a"+...
  TokenizedSegment t = wordpiece_tokenize("abcd", v);
  CHECK(ids_to_tokens(t, v) == std::vector<std::string>{"abc", "##d"});
}

TEST_CASE("wordpiece: over-long word becomes UNK") {
  Vocab v = make_vocab({"a"});
  std::string longword(static_cast<size_t>(v.max_word_chars) + 1, 'a');
  TokenizedSegment t = wordpiece_tokenize(longword, v);
  REQUIRE(t.token_ids.size() == 1);
  CHECK(t.token_ids[0] == v.unk_id);
}

TEST_CASE("wordpiece: empty text, purity, word group count") {
  Vocab v = make_vocab({"play", "##ing", "game"});
  CHECK(wordpiece_tokenize("", v).token_ids.empty());

  TokenizedSegment a = wordpiece_tokenize("playing game playing", v);
  TokenizedSegment b = wordpiece_tokenize("playing game playing", v);
  CHECK(a.token_ids == b.token_ids);
  CHECK(a.word_starts == b.word_starts);

  size_t groups = 0;
  for (uint8_t s : a.word_starts) groups += s;
  CHECK(groups == presplit_words("playing game playing").size());
  REQUIRE_FALSE(a.word_starts.empty());
  CHECK(a.word_starts[0] == 1);
}

TEST_CASE("detokenize: glue continuations, strip prefix") {
  Vocab v = make_vocab({"play", "##ing"});
  std::vector<int32_t> ids = {v.id_of("play"), v.id_of("##ing")};
  CHECK(detokenize(ids, v) == "playing");
  CHECK(detokenize({}, v).empty());
  std::vector<int32_t> bad = {99};
  CHECK_THROWS_AS(detokenize(bad, v), DataError);
}

TEST_CASE("detokenize round-trips every in-vocab single word") {
  Vocab v = make_vocab({"play", "##ing", "game", "zebra", "x", "y9"});
  for (int32_t id = 0; id < v.size(); ++id) {
    if (v.is_special(id)) continue;
    const std::string& tok = v.token(id);
    if (tok.rfind("##", 0) == 0) continue;  // continuations are not words
    TokenizedSegment t = wordpiece_tokenize(tok, v);
    CHECK(detokenize(t.token_ids, v) == tok);
  }
}

TEST_CASE("non_special_ids excludes exactly the five specials") {
  Vocab v = make_word_vocab(10);
  auto ids = v.non_special_ids();
  CHECK(ids.size() == 10);
  for (int32_t id : ids) CHECK_FALSE(v.is_special(id));
}

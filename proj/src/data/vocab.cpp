// Copyright (c) 2026 the segorder authors
// SPDX-License-Identifier: Apache-2.0
#include "data/vocab.hpp"

#include <fstream>
#include <sstream>

#include "core/common.hpp"

namespace segorder {

namespace {

constexpr std::string_view kContinuation = "##";

// Decodes one UTF-8 code point at byte offset i; advances i past it.
// Malformed bytes decode as themselves (one byte) so tokenization stays total.
uint32_t next_codepoint(std::string_view s, size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  size_t len = 0;
  uint32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return b0;
  }
  if (i + len > s.size()) {
    ++i;
    return b0;
  }
  for (size_t k = 1; k < len; ++k) {
    const auto bk = static_cast<unsigned char>(s[i + k]);
    if ((bk & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (bk & 0x3F);
  }
  i += len;
  return cp;
}

bool is_whitespace_cp(uint32_t cp) {
  switch (cp) {
    case ' ':
    case '\t':
    case '\n':
    case '\r':
    case '\f':
    case '\v':
    case 0x00A0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// ASCII punctuation plus the common general/CJK/fullwidth punctuation blocks.
// A declared convention: the library performs no locale lookups.
bool is_punctuation_cp(uint32_t cp) {
  if ((cp >= 33 && cp <= 47) || (cp >= 58 && cp <= 64) || (cp >= 91 && cp <= 96) ||
      (cp >= 123 && cp <= 126))
    return true;
  if (cp >= 0x2010 && cp <= 0x2027) return true;
  if (cp >= 0x2030 && cp <= 0x205E) return true;
  if (cp >= 0x3001 && cp <= 0x303F) return true;
  if (cp >= 0xFE50 && cp <= 0xFE6B) return true;
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;
  if (cp >= 0xFF3B && cp <= 0xFF40) return true;
  if (cp >= 0xFF5B && cp <= 0xFF65) return true;
  return false;
}

}  // namespace

int32_t Vocab::id_of(std::string_view token) const {
  auto it = token_to_id.find(std::string(token));
  return it == token_to_id.end() ? -1 : it->second;
}

const std::string& Vocab::token(int32_t id) const {
  if (id < 0 || id >= size())
    throw DataError("vocab: id " + std::to_string(id) + " outside [0," + std::to_string(size()) +
                    ")");
  return id_to_token[static_cast<size_t>(id)];
}

std::vector<int32_t> Vocab::non_special_ids() const {
  std::vector<int32_t> out;
  out.reserve(id_to_token.size());
  for (int32_t i = 0; i < size(); ++i)
    if (!is_special(i)) out.push_back(i);
  return out;
}

Vocab load_vocab(std::istream& in) {
  std::string all(std::istreambuf_iterator<char>(in), {});
  Vocab v;
  v.fingerprint = fnv1a64(all);
  std::istringstream lines(all);
  std::string line;
  size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (v.token_to_id.count(line)) {
      v.warnings.push_back("duplicate token '" + line + "' at line " + std::to_string(line_no) +
                           " ignored");
      continue;
    }
    const auto id = static_cast<int32_t>(v.id_to_token.size());
    v.token_to_id.emplace(line, id);
    v.id_to_token.push_back(line);
  }
  struct SpecialSlot {
    const char* name;
    int32_t* slot;
  };
  const SpecialSlot specials[] = {{"[PAD]", &v.pad_id},
                                  {"[UNK]", &v.unk_id},
                                  {"[CLS]", &v.cls_id},
                                  {"[SEP]", &v.sep_id},
                                  {"[MASK]", &v.mask_id}};
  std::string missing;
  for (const auto& s : specials) {
    int32_t id = v.id_of(s.name);
    if (id < 0) {
      if (!missing.empty()) missing += ", ";
      missing += s.name;
    } else {
      *s.slot = id;
    }
  }
  if (!missing.empty()) throw DataError("vocabulary missing special tokens: " + missing);
  if (v.pad_id != 0) throw DataError("vocabulary must place [PAD] at id 0, found id " +
                                     std::to_string(v.pad_id));
  return v;
}

Vocab load_vocab_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary file: " + path);
  return load_vocab(in);
}

std::vector<std::string> presplit_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  size_t i = 0;
  while (i < text.size()) {
    const size_t start = i;
    const uint32_t cp = next_codepoint(text, i);
    if (is_whitespace_cp(cp)) {
      if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    } else if (is_punctuation_cp(cp)) {
      if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
      words.emplace_back(text.substr(start, i - start));
    } else {
      cur.append(text.substr(start, i - start));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

TokenizedSegment wordpiece_tokenize(std::string_view text, const Vocab& vocab) {
  TokenizedSegment out;
  for (const std::string& word : presplit_words(text)) {
    // Code-point boundaries for longest-match shrinking.
    std::vector<size_t> bounds;
    {
      size_t i = 0;
      bounds.push_back(0);
      while (i < word.size()) {
        next_codepoint(word, i);
        bounds.push_back(i);
      }
    }
    const size_t n_chars = bounds.size() - 1;
    std::vector<int32_t> pieces;
    bool ok = n_chars <= static_cast<size_t>(vocab.max_word_chars);
    if (ok) {
      size_t start = 0;  // index into bounds
      while (start < n_chars) {
        size_t end = n_chars;
        int32_t match = -1;
        while (end > start) {
          std::string candidate =
              word.substr(bounds[start], bounds[end] - bounds[start]);
          if (start > 0) candidate = std::string(kContinuation) + candidate;
          const int32_t id = vocab.id_of(candidate);
          if (id >= 0 && !vocab.is_special(id)) {
            match = id;
            break;
          }
          --end;
        }
        if (match < 0) {
          ok = false;
          break;
        }
        pieces.push_back(match);
        start = end;
      }
    }
    if (!ok) {
      out.token_ids.push_back(vocab.unk_id);
      out.word_starts.push_back(1);
    } else {
      for (size_t k = 0; k < pieces.size(); ++k) {
        out.token_ids.push_back(pieces[k]);
        out.word_starts.push_back(k == 0 ? 1 : 0);
      }
    }
  }
  return out;
}

std::string detokenize(std::span<const int32_t> ids, const Vocab& vocab) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    const std::string& tok = vocab.token(ids[i]);
    if (tok.rfind(kContinuation, 0) == 0 && !out.empty()) {
      out += tok.substr(kContinuation.size());
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

}  // namespace segorder

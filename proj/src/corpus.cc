// Copyright 2026 The Mrcel Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "mrcel/corpus.h"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/utf8.h>

namespace mrcel {

using json = nlohmann::json;

size_t CodePointToByte(std::string_view text, size_t cp) {
  size_t byte = 0;
  for (size_t i = 0; i < cp; ++i) {
    if (byte >= text.size()) throw std::out_of_range("code point offset");
    ++byte;
    while (byte < text.size() &&
           (static_cast<unsigned char>(text[byte]) & 0xC0) == 0x80) {
      ++byte;
    }
  }
  return byte;
}

size_t CodePointCount(std::string_view text) {
  size_t n = 0;
  for (char c : text) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

namespace {

std::string SpanText(std::string_view text, const Span &span) {
  size_t b = CodePointToByte(text, span.start);
  size_t e = CodePointToByte(text, span.end);
  return std::string(text.substr(b, e - b));
}

}  // namespace

void AnnotatedText::Validate() const {
  size_t length = CodePointCount(text);
  size_t prev_end = 0;
  for (size_t i = 0; i < mentions.size(); ++i) {
    const Mention &m = mentions[i];
    if (m.span.start >= m.span.end || m.span.end > length) {
      throw InputFormatError("text " + id + ": mention span out of bounds");
    }
    if (i > 0 && m.span.start < prev_end) {
      throw InputFormatError("text " + id +
                             ": mentions overlap or are out of order");
    }
    if (SpanText(text, m.span) != m.surface) {
      throw InputFormatError("text " + id + ": surface '" + m.surface +
                             "' does not match its span");
    }
    prev_end = m.span.end;
  }
}

Corpus ReadCorpusJsonl(std::istream &in) {
  Corpus corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotatedText t;
    try {
      json j = json::parse(line);
      t.text = j.at("text").get<std::string>();
      t.id = j.contains("id") ? j.at("id").get<std::string>()
                              : std::to_string(corpus.size());
      t.kind = j.value("kind", std::string());
      for (const json &jm : j.value("mentions", json::array())) {
        Mention m;
        m.span.start = jm.at("start").get<size_t>();
        m.span.end = jm.at("end").get<size_t>();
        m.surface = jm.at("surface").get<std::string>();
        if (jm.contains("gold") && !jm.at("gold").is_null()) {
          m.gold = jm.at("gold").get<std::string>();
        }
        t.mentions.push_back(std::move(m));
      }
    } catch (const json::exception &err) {
      throw InputFormatError("corpus line " + std::to_string(line_no) + ": " +
                             err.what());
    }
    t.Validate();
    corpus.push_back(std::move(t));
  }
  return corpus;
}

Corpus LoadCorpusJsonl(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw InputFormatError("cannot open corpus file: " + path);
  return ReadCorpusJsonl(in);
}

void WriteCorpusJsonl(std::ostream &out, const Corpus &corpus) {
  for (const AnnotatedText &t : corpus) {
    json mentions = json::array();
    for (const Mention &m : t.mentions) {
      json jm = {{"start", m.span.start},
                 {"end", m.span.end},
                 {"surface", m.surface}};
      if (m.gold) jm["gold"] = *m.gold;
      mentions.push_back(std::move(jm));
    }
    json j = {{"id", t.id}, {"text", t.text}, {"mentions", mentions}};
    if (!t.kind.empty()) j["kind"] = t.kind;
    out << j.dump() << '\n';
  }
}

Vocabulary::Vocabulary() {
  for (std::string_view t :
       {kPadToken, kUnkToken, kClsToken, kSepToken, kMaskToken}) {
    Add(std::string(t));
  }
}

Vocabulary Vocabulary::Build(const std::vector<std::string> &texts) {
  Vocabulary vocab;
  for (const std::string &text : texts) {
    for (std::string &token : SplitTokens(text)) vocab.Add(token);
  }
  return vocab;
}

Vocabulary Vocabulary::FromTokens(const std::vector<std::string> &tokens) {
  Vocabulary vocab;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i < static_cast<size_t>(vocab.size())) {
      if (tokens[i] != vocab.tokens_[i]) {
        throw ModelMismatchError("vocabulary reserved tokens out of place");
      }
      continue;
    }
    if (vocab.Add(tokens[i]) != static_cast<int>(i)) {
      throw ModelMismatchError("duplicate vocabulary token: " + tokens[i]);
    }
  }
  return vocab;
}

int Vocabulary::Add(const std::string &token) {
  auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocabulary::Lookup(const std::string &token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string &Vocabulary::Token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id");
  return tokens_[id];
}

namespace {

constexpr std::array<std::string_view, 5> kSpecialTokens = {
    kPadToken, kUnkToken, kClsToken, kSepToken, kMaskToken};

bool IsUnspacedScript(UChar32 c) {
  UErrorCode status = U_ZERO_ERROR;
  UScriptCode script = uscript_getScript(c, &status);
  if (U_FAILURE(status)) return false;
  switch (script) {
    case USCRIPT_HAN:
    case USCRIPT_HIRAGANA:
    case USCRIPT_KATAKANA:
    case USCRIPT_HANGUL:
    case USCRIPT_THAI:
      return true;
    default:
      return false;
  }
}

// Splits normalized text.
void SplitPlain(const std::string &text, std::vector<std::string> *out) {
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out->push_back(std::move(word));
    word.clear();
  };
  int32_t i = 0;
  const int32_t n = static_cast<int32_t>(text.size());
  while (i < n) {
    int32_t begin = i;
    UChar32 c;
    U8_NEXT(text.data(), i, n, c);
    std::string piece = text.substr(begin, i - begin);
    if (c < 0 || u_isUWhiteSpace(c)) {
      flush();
    } else if (IsUnspacedScript(c) || u_ispunct(c)) {
      flush();
      out->push_back(std::move(piece));
    } else {
      word += piece;
    }
  }
  flush();
}

}  // namespace

std::vector<std::string> SplitTokens(std::string_view text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t next = std::string_view::npos;
    std::string_view special;
    for (std::string_view s : kSpecialTokens) {
      size_t at = text.find(s, pos);
      if (at < next) {
        next = at;
        special = s;
      }
    }
    std::string_view plain = text.substr(
        pos, next == std::string_view::npos ? std::string_view::npos
                                            : next - pos);
    if (!plain.empty()) SplitPlain(NormalizeSurface(plain), &out);
    if (next == std::string_view::npos) break;
    out.emplace_back(special);
    pos = next + special.size();
  }
  return out;
}

std::vector<int> Tokenize(std::string_view text, const Vocabulary &vocab) {
  std::vector<int> ids;
  for (const std::string &token : SplitTokens(text)) {
    ids.push_back(vocab.Lookup(token));
  }
  return ids;
}

std::string Detokenize(const std::vector<int> &ids, const Vocabulary &vocab) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.Token(ids[i]);
  }
  return out;
}

namespace {

struct Replacement {
  Span span;
  std::string text;
};

std::string ApplyReplacements(const std::string &text,
                              std::vector<Replacement> replacements) {
  std::sort(replacements.begin(), replacements.end(),
            [](const Replacement &a, const Replacement &b) {
              return a.span.start > b.span.start;
            });
  for (size_t i = 1; i < replacements.size(); ++i) {
    if (replacements[i].span.end > replacements[i - 1].span.start) {
      throw std::invalid_argument("overlapping replacement spans");
    }
  }
  std::string out = text;
  for (const Replacement &r : replacements) {
    size_t b = CodePointToByte(out, r.span.start);
    size_t e = CodePointToByte(out, r.span.end);
    out.replace(b, e - b, r.text);
  }
  return out;
}

}  // namespace

std::string BuildQuery(const AnnotatedText &text, size_t target) {
  if (target >= text.mentions.size()) throw std::out_of_range("target mention");
  return ApplyReplacements(
      text.text, {{text.mentions[target].span, std::string(kMaskToken)}});
}

std::string UpdateQuery(const AnnotatedText &text, size_t target,
                        const LinkHistory &history, const KnowledgeBase &kb) {
  if (target >= text.mentions.size()) throw std::out_of_range("target mention");
  if (history.count(target) > 0) {
    throw std::invalid_argument("target mention already decided");
  }
  std::vector<Replacement> replacements;
  replacements.push_back({text.mentions[target].span, std::string(kMaskToken)});
  for (const auto &[index, entity] : history) {
    if (index >= text.mentions.size()) throw std::out_of_range("history mention");
    if (IsNil(entity)) continue;
    replacements.push_back({text.mentions[index].span, kb.Get(entity).name});
  }
  return ApplyReplacements(text.text, std::move(replacements));
}

namespace {

void CheckMinLength(size_t max_len) {
  if (max_len < 8) throw std::invalid_argument("max_len must be at least 8");
}

}  // namespace

TokenSequence AssembleOptionSequence(std::string_view description,
                                     std::string_view query,
                                     std::string_view option_name,
                                     const Vocabulary &vocab, size_t max_len) {
  CheckMinLength(max_len);
  std::vector<int> d = Tokenize(description, vocab);
  std::vector<int> q = Tokenize(query, vocab);
  std::vector<int> o = Tokenize(option_name, vocab);
  const size_t fixed = q.size() + o.size() + 4;
  if (fixed > max_len) {
    throw SequenceOverflowError("query and option exceed max_len");
  }
  if (fixed + d.size() > max_len) d.resize(max_len - fixed);

  TokenSequence seq;
  seq.ids.reserve(fixed + d.size());
  auto push = [&](int id, Segment s) {
    seq.ids.push_back(id);
    seq.segments.push_back(s);
  };
  push(Vocabulary::kCls, Segment::kDescription);
  for (int id : d) push(id, Segment::kDescription);
  push(Vocabulary::kSep, Segment::kDescription);
  for (int id : q) push(id, Segment::kQuery);
  push(Vocabulary::kSep, Segment::kQuery);
  for (int id : o) push(id, Segment::kOption);
  push(Vocabulary::kSep, Segment::kOption);
  return seq;
}

TokenSequence AssembleQuerySequence(std::string_view query,
                                    const Vocabulary &vocab, size_t max_len) {
  CheckMinLength(max_len);
  std::vector<int> q = Tokenize(query, vocab);
  if (q.size() + 2 > max_len) {
    throw SequenceOverflowError("query exceeds max_len");
  }
  TokenSequence seq;
  seq.ids.push_back(Vocabulary::kCls);
  seq.segments.push_back(Segment::kQuery);
  for (int id : q) {
    seq.ids.push_back(id);
    seq.segments.push_back(Segment::kQuery);
  }
  seq.ids.push_back(Vocabulary::kSep);
  seq.segments.push_back(Segment::kQuery);
  return seq;
}

}  // namespace mrcel

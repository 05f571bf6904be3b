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


#ifndef MRCEL_CORPUS_H_
#define MRCEL_CORPUS_H_

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mrcel/common.h"
#include "mrcel/kb.h"

namespace mrcel {

// Character (code point) offsets into the owning text, end exclusive.
struct Span {
  size_t start = 0;
  size_t end = 0;

  bool operator==(const Span &other) const = default;
};

struct Mention {
  Span span;
  std::string surface;
  // Entity id, "NIL", or absent at inference time.
  std::optional<EntityId> gold;
};

struct AnnotatedText {
  std::string id;
  std::string text;
  std::vector<Mention> mentions;
  // Free-form provenance tag (the synthetic generator writes "local",
  // "nil" or "coherence").
  std::string kind;

  // Checks span bounds, ordering, overlap and surface agreement. Throws
  // InputFormatError.
  void Validate() const;
};

using Corpus = std::vector<AnnotatedText>;

// Line-delimited JSON: {"text", "mentions": [{"start", "end", "surface",
// "gold"}], optional "id" and "kind"}. Missing ids become the line number.
Corpus ReadCorpusJsonl(std::istream &in);
Corpus LoadCorpusJsonl(const std::string &path);
void WriteCorpusJsonl(std::ostream &out, const Corpus &corpus);

// Byte offset of the code point with index `cp` in UTF-8 `text`; cp may equal
// the code point count.
size_t CodePointToByte(std::string_view text, size_t cp);
size_t CodePointCount(std::string_view text);

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;

  // Contains only the reserved tokens.
  Vocabulary();

  // Reserved tokens followed by every token of `texts` in first-seen order.
  static Vocabulary Build(const std::vector<std::string> &texts);
  static Vocabulary FromTokens(const std::vector<std::string> &tokens);

  // Returns the existing id when the token is already present.
  int Add(const std::string &token);
  int Lookup(const std::string &token) const;
  const std::string &Token(int id) const;
  bool Contains(const std::string &token) const {
    return ids_.count(token) > 0;
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string> &tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Whitespace-delimited words; code points of unspaced scripts (Han, kana,
// Hangul) and punctuation become single tokens. Bracketed special tokens such
// as [MASK] are kept whole. Every token is normalized with NormalizeSurface.
std::vector<std::string> SplitTokens(std::string_view text);

std::vector<int> Tokenize(std::string_view text, const Vocabulary &vocab);

// Space-joined token strings.
std::string Detokenize(const std::vector<int> &ids, const Vocabulary &vocab);

// The text with mention `target` replaced by "[MASK]".
std::string BuildQuery(const AnnotatedText &text, size_t target);

// Mention index -> linked entity id ("NIL" allowed) for already decided
// mentions.
using LinkHistory = std::map<size_t, EntityId>;

// Like BuildQuery, but every mention in `history` is also replaced by the
// canonical name of its linked entity. NIL-linked mentions keep their
// surface.
std::string UpdateQuery(const AnnotatedText &text, size_t target,
                        const LinkHistory &history, const KnowledgeBase &kb);

enum class Segment : unsigned char { kDescription = 0, kQuery = 1, kOption = 2 };

struct TokenSequence {
  std::vector<int> ids;
  std::vector<Segment> segments;

  size_t size() const { return ids.size(); }
};

class SequenceOverflowError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// [CLS] D [SEP] Q [SEP] O [SEP]. Only the description is truncated (from its
// end) when the sequence exceeds max_len.
TokenSequence AssembleOptionSequence(std::string_view description,
                                     std::string_view query,
                                     std::string_view option_name,
                                     const Vocabulary &vocab, size_t max_len);

// [CLS] Q [SEP], the input of the linkability classifier.
TokenSequence AssembleQuerySequence(std::string_view query,
                                    const Vocabulary &vocab, size_t max_len);

}  // namespace mrcel

#endif  // MRCEL_CORPUS_H_

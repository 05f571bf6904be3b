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


#ifndef MRCEL_KB_H_
#define MRCEL_KB_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mrcel/common.h"

namespace mrcel {

// Description and name of the synthetic option appended to candidate sets
// when NIL handling is enabled.
inline constexpr std::string_view kNilDescription = "This is a NIL option";
inline constexpr std::string_view kNilName = "NIL";

// Case-folded, NFKC-normalized text with whitespace runs collapsed to a single
// space and trimmed. Idempotent and total (invalid UTF-8 is replaced).
std::string NormalizeSurface(std::string_view surface);

struct Entity {
  EntityId id;
  std::string name;
  std::string description;
  std::vector<std::string> aliases;
  std::uint64_t popularity = 0;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  // Throws std::invalid_argument on duplicate or reserved ids. An entity
  // without aliases gets its canonical name as its only alias.
  explicit KnowledgeBase(std::vector<Entity> entities);

  const Entity *Find(std::string_view id) const;
  const Entity &Get(std::string_view id) const;

  const std::vector<Entity> &entities() const { return entities_; }
  size_t size() const { return entities_.size(); }

  // One JSON object per line: id, name, description, aliases, popularity.
  static KnowledgeBase ReadJsonl(std::istream &in);
  static KnowledgeBase LoadJsonl(const std::string &path);
  void WriteJsonl(std::ostream &out) const;

 private:
  std::vector<Entity> entities_;
  std::unordered_map<std::string, size_t> by_id_;
};

struct AliasEntry {
  EntityId id;
  std::uint64_t popularity = 0;

  bool operator==(const AliasEntry &other) const = default;
};

// Immutable map from normalized alias to entities, each list ordered by
// descending popularity then ascending id.
class AliasIndex {
 public:
  static AliasIndex Build(const KnowledgeBase &kb);

  // Normalizes `surface` before lookup. Returns nullptr for unknown surfaces.
  const std::vector<AliasEntry> *Lookup(std::string_view surface) const;

  // Lookup with an already-normalized key.
  const std::vector<AliasEntry> *LookupNormalized(const std::string &key) const;

  size_t size() const { return entries_.size(); }
  const std::unordered_map<std::string, std::vector<AliasEntry>> &entries()
      const {
    return entries_;
  }

  // Aliases written in sorted key order: {"alias": ..., "entities": [[id,
  // popularity], ...]} per line.
  void WriteJsonl(std::ostream &out) const;
  static AliasIndex ReadJsonl(std::istream &in);

 private:
  std::unordered_map<std::string, std::vector<AliasEntry>> entries_;
};

// Pruned candidate list for one mention. Option i < entity_ids.size() is an
// entity; when includes_nil the final option is NIL.
struct CandidateSet {
  std::string surface;
  std::vector<EntityId> entity_ids;
  bool includes_nil = false;

  size_t size() const { return entity_ids.size() + (includes_nil ? 1 : 0); }
  bool empty() const { return size() == 0; }
  bool IsNilOption(size_t i) const { return i >= entity_ids.size(); }
  const std::string &OptionId(size_t i) const;

  // Position of `id` among the options ("NIL" maps to the NIL option).
  std::optional<size_t> IndexOf(std::string_view id) const;
};

CandidateSet GenerateCandidates(const AliasIndex &index,
                                std::string_view mention_surface, int k,
                                bool with_nil);

struct PriorDecision {
  EntityId id;
  double probability = 0.0;
};

// Most popular entity for the surface with p(e|m) = popularity / total.
PriorDecision PriorBaseline(const AliasIndex &index,
                            std::string_view mention_surface);

// Option texts used to build encoder inputs. NIL resolves to the fixed NIL
// name and description.
struct OptionText {
  std::string name;
  std::string description;
};
OptionText GetOptionText(const KnowledgeBase &kb, const CandidateSet &set,
                         size_t option);

}  // namespace mrcel

#endif  // MRCEL_KB_H_

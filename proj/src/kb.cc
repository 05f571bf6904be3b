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


#include "mrcel/kb.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace mrcel {

using json = nlohmann::json;

std::string NormalizeSurface(std::string_view surface) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2 *nfkc_cf =
      icu::Normalizer2::getNFKCCasefoldInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFKC_Casefold missing");

  icu::UnicodeString text = icu::UnicodeString::fromUTF8(
      icu::StringPiece(surface.data(), static_cast<int32_t>(surface.size())));
  icu::UnicodeString folded = nfkc_cf->normalize(text, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");

  // Collapse whitespace.
  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < folded.length();) {
    UChar32 c = folded.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !collapsed.isEmpty();
      continue;
    }
    if (pending_space) collapsed.append(static_cast<UChar>(' '));
    pending_space = false;
    collapsed.append(c);
  }
  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

KnowledgeBase::KnowledgeBase(std::vector<Entity> entities)
    : entities_(std::move(entities)) {
  for (size_t i = 0; i < entities_.size(); ++i) {
    Entity &e = entities_[i];
    if (e.id.empty()) throw std::invalid_argument("entity with empty id");
    if (IsNil(e.id)) throw std::invalid_argument("entity id NIL is reserved");
    if (!by_id_.emplace(e.id, i).second) {
      throw std::invalid_argument("duplicate entity id: " + e.id);
    }
    if (e.aliases.empty()) e.aliases.push_back(e.name);
  }
}

const Entity *KnowledgeBase::Find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &entities_[it->second];
}

const Entity &KnowledgeBase::Get(std::string_view id) const {
  const Entity *e = Find(id);
  if (e == nullptr) throw std::out_of_range("unknown entity id: " + std::string(id));
  return *e;
}

KnowledgeBase KnowledgeBase::ReadJsonl(std::istream &in) {
  std::vector<Entity> entities;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      Entity e;
      e.id = j.at("id").get<std::string>();
      e.name = j.at("name").get<std::string>();
      e.description = j.value("description", std::string());
      if (j.contains("aliases")) {
        e.aliases = j.at("aliases").get<std::vector<std::string>>();
      }
      auto pop = j.value("popularity", json(0));
      if (!pop.is_number_integer() || pop.get<std::int64_t>() < 0) {
        throw InputFormatError("popularity must be a non-negative integer");
      }
      e.popularity = pop.get<std::uint64_t>();
      entities.push_back(std::move(e));
    } catch (const json::exception &err) {
      throw InputFormatError("KB line " + std::to_string(line_no) + ": " +
                             err.what());
    } catch (const InputFormatError &err) {
      throw InputFormatError("KB line " + std::to_string(line_no) + ": " +
                             err.what());
    }
  }
  try {
    return KnowledgeBase(std::move(entities));
  } catch (const std::invalid_argument &err) {
    throw InputFormatError(err.what());
  }
}

KnowledgeBase KnowledgeBase::LoadJsonl(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw InputFormatError("cannot open KB file: " + path);
  return ReadJsonl(in);
}

void KnowledgeBase::WriteJsonl(std::ostream &out) const {
  for (const Entity &e : entities_) {
    json j = {{"id", e.id},
              {"name", e.name},
              {"description", e.description},
              {"aliases", e.aliases},
              {"popularity", e.popularity}};
    out << j.dump() << '\n';
  }
}

namespace {

bool ByPopularity(const AliasEntry &a, const AliasEntry &b) {
  if (a.popularity != b.popularity) return a.popularity > b.popularity;
  return a.id < b.id;
}

}  // namespace

AliasIndex AliasIndex::Build(const KnowledgeBase &kb) {
  AliasIndex index;
  for (const Entity &e : kb.entities()) {
    std::set<std::string> keys;
    for (const std::string &alias : e.aliases) {
      std::string key = NormalizeSurface(alias);
      if (!key.empty()) keys.insert(std::move(key));
    }
    for (const std::string &key : keys) {
      index.entries_[key].push_back({e.id, e.popularity});
    }
  }
  for (auto &[key, list] : index.entries_) {
    std::sort(list.begin(), list.end(), ByPopularity);
  }
  return index;
}

const std::vector<AliasEntry> *AliasIndex::Lookup(
    std::string_view surface) const {
  return LookupNormalized(NormalizeSurface(surface));
}

const std::vector<AliasEntry> *AliasIndex::LookupNormalized(
    const std::string &key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void AliasIndex::WriteJsonl(std::ostream &out) const {
  std::map<std::string, const std::vector<AliasEntry> *> sorted;
  for (const auto &[key, list] : entries_) sorted.emplace(key, &list);
  for (const auto &[key, list] : sorted) {
    json entities = json::array();
    for (const AliasEntry &e : *list) entities.push_back({e.id, e.popularity});
    out << json{{"alias", key}, {"entities", entities}}.dump() << '\n';
  }
}

AliasIndex AliasIndex::ReadJsonl(std::istream &in) {
  AliasIndex index;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      std::vector<AliasEntry> list;
      for (const json &e : j.at("entities")) {
        list.push_back({e.at(0).get<std::string>(), e.at(1).get<std::uint64_t>()});
      }
      std::sort(list.begin(), list.end(), ByPopularity);
      index.entries_[NormalizeSurface(j.at("alias").get<std::string>())] =
          std::move(list);
    } catch (const json::exception &err) {
      throw InputFormatError("index line " + std::to_string(line_no) + ": " +
                             err.what());
    }
  }
  return index;
}

const std::string &CandidateSet::OptionId(size_t i) const {
  static const std::string nil(kNilId);
  if (i < entity_ids.size()) return entity_ids[i];
  if (includes_nil && i == entity_ids.size()) return nil;
  throw std::out_of_range("candidate option out of range");
}

std::optional<size_t> CandidateSet::IndexOf(std::string_view id) const {
  if (IsNil(id)) {
    if (includes_nil) return entity_ids.size();
    return std::nullopt;
  }
  for (size_t i = 0; i < entity_ids.size(); ++i) {
    if (entity_ids[i] == id) return i;
  }
  return std::nullopt;
}

CandidateSet GenerateCandidates(const AliasIndex &index,
                                std::string_view mention_surface, int k,
                                bool with_nil) {
  if (k < 1) throw std::invalid_argument("K must be positive");
  CandidateSet set;
  set.surface = std::string(mention_surface);
  set.includes_nil = with_nil;
  if (const auto *list = index.Lookup(mention_surface)) {
    size_t n = std::min(list->size(), static_cast<size_t>(k));
    for (size_t i = 0; i < n; ++i) set.entity_ids.push_back((*list)[i].id);
  }
  return set;
}

PriorDecision PriorBaseline(const AliasIndex &index,
                            std::string_view mention_surface) {
  const auto *list = index.Lookup(mention_surface);
  if (list == nullptr || list->empty()) return {std::string(kNilId), 0.0};
  double total = 0.0;
  for (const AliasEntry &e : *list) total += static_cast<double>(e.popularity);
  const AliasEntry &best = list->front();
  // All-zero popularity degenerates to a uniform prior.
  double p = total > 0.0 ? static_cast<double>(best.popularity) / total
                         : 1.0 / static_cast<double>(list->size());
  return {best.id, p};
}

OptionText GetOptionText(const KnowledgeBase &kb, const CandidateSet &set,
                         size_t option) {
  if (set.IsNilOption(option)) {
    if (option >= set.size()) throw std::out_of_range("option out of range");
    return {std::string(kNilName), std::string(kNilDescription)};
  }
  const Entity &e = kb.Get(set.entity_ids[option]);
  return {e.name, e.description};
}

}  // namespace mrcel

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


#include "mrcel/synth.h"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

namespace mrcel {

using json = nlohmann::json;

void SyntheticSpec::Validate() const {
  if (entities < 1 || clusters < 1 || train_texts < 0 || test_texts < 0) {
    throw std::invalid_argument("synthetic spec: sizes must be positive");
  }
  if (min_ambiguity < 1 || max_ambiguity < min_ambiguity) {
    throw std::invalid_argument("synthetic spec: bad ambiguity range");
  }
  if (clusters < max_ambiguity) {
    throw std::invalid_argument("synthetic spec: clusters < max_ambiguity");
  }
  if (context_words < 1 || max_mentions < 2) {
    throw std::invalid_argument(
        "synthetic spec: context_words >= 1 and max_mentions >= 2 required");
  }
  if (!(nil_rate >= 0.0 && nil_rate < 1.0) ||
      !(coherence_fraction >= 0.0 && coherence_fraction <= 1.0)) {
    throw std::invalid_argument("synthetic spec: rates outside [0, 1)");
  }
}

json SyntheticSpec::ToJson() const {
  return {{"entities", entities},
          {"clusters", clusters},
          {"min_ambiguity", min_ambiguity},
          {"max_ambiguity", max_ambiguity},
          {"context_words", context_words},
          {"train_texts", train_texts},
          {"test_texts", test_texts},
          {"max_mentions", max_mentions},
          {"nil_rate", nil_rate},
          {"coherence_fraction", coherence_fraction},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::FromJson(const json &j) {
  SyntheticSpec s;
  try {
    if (!j.is_object()) throw InputFormatError("synthetic spec: not an object");
    s.entities = j.value("entities", s.entities);
    s.clusters = j.value("clusters", s.clusters);
    s.min_ambiguity = j.value("min_ambiguity", s.min_ambiguity);
    s.max_ambiguity = j.value("max_ambiguity", s.max_ambiguity);
    s.context_words = j.value("context_words", s.context_words);
    s.train_texts = j.value("train_texts", s.train_texts);
    s.test_texts = j.value("test_texts", s.test_texts);
    s.max_mentions = j.value("max_mentions", s.max_mentions);
    s.nil_rate = j.value("nil_rate", s.nil_rate);
    s.coherence_fraction = j.value("coherence_fraction", s.coherence_fraction);
    s.seed = j.value("seed", s.seed);
    s.Validate();
  } catch (const json::exception &err) {
    throw InputFormatError(std::string("synthetic spec: ") + err.what());
  } catch (const std::invalid_argument &err) {
    throw InputFormatError(err.what());
  }
  return s;
}

namespace {

constexpr int kFillerWords = 30;
constexpr int kNilWords = 20;

class WordMaker {
 public:
  explicit WordMaker(std::mt19937_64 *rng) : rng_(rng) {}

  std::string Next(int min_syllables, int max_syllables) {
    static const std::string kOnset = "bdfgklmnprstvz";
    static const std::string kVowel = "aeiou";
    std::uniform_int_distribution<int> count(min_syllables, max_syllables);
    std::uniform_int_distribution<size_t> onset(0, kOnset.size() - 1);
    std::uniform_int_distribution<size_t> vowel(0, kVowel.size() - 1);
    for (;;) {
      std::string w;
      const int n = count(*rng_);
      for (int i = 0; i < n; ++i) {
        w += kOnset[onset(*rng_)];
        w += kVowel[vowel(*rng_)];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  std::mt19937_64 *rng_;
  std::unordered_set<std::string> used_;
};

std::string Capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

struct Cluster {
  std::string name;
  std::vector<std::string> cues;
  std::vector<size_t> entities;
};

struct Group {
  std::string surface;
  std::vector<size_t> entities;
};

struct WorldState {
  std::vector<Cluster> clusters;
  std::vector<Group> groups;
  std::vector<int> entity_cluster;
  std::vector<size_t> entity_group;
  std::vector<std::string> nickname;
  std::vector<std::string> filler;
  std::vector<std::string> nil_words;
  std::vector<Entity> entities;
};

template <typename T>
const T &Pick(const std::vector<T> &v, std::mt19937_64 &rng) {
  std::uniform_int_distribution<size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

int Uniform(int lo, int hi, std::mt19937_64 &rng) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

// Accumulates tokens and records mention spans by code point offsets.
class TextBuilder {
 public:
  void Word(const std::string &w) {
    if (!text_.empty()) text_ += ' ';
    text_ += w;
  }
  void MentionOf(const std::string &surface, const EntityId &gold) {
    if (!text_.empty()) text_ += ' ';
    Mention m;
    m.span.start = text_.size();
    text_ += surface;
    m.span.end = text_.size();
    m.surface = surface;
    m.gold = gold;
    mentions_.push_back(std::move(m));
  }
  AnnotatedText Finish(std::string id, std::string kind) {
    AnnotatedText t;
    t.id = std::move(id);
    t.text = std::move(text_);
    t.mentions = std::move(mentions_);
    t.kind = std::move(kind);
    return t;
  }

 private:
  std::string text_;
  std::vector<Mention> mentions_;
};

// Groups containing an entity of `cluster`, other than `exclude`.
std::vector<size_t> GroupsWithCluster(const WorldState &w, int cluster,
                                      size_t exclude) {
  std::vector<size_t> out;
  for (size_t e : w.clusters[cluster].entities) {
    if (w.entity_group[e] != exclude && w.groups[w.entity_group[e]].entities.size() > 1) {
      out.push_back(w.entity_group[e]);
    }
  }
  return out;
}

EntityId MemberOf(const WorldState &w, size_t group, int cluster) {
  for (size_t e : w.groups[group].entities) {
    if (w.entity_cluster[e] == cluster) return w.entities[e].id;
  }
  throw std::logic_error("group has no entity in cluster");
}

AnnotatedText LocalText(const WorldState &w, const SyntheticSpec &spec,
                        std::mt19937_64 &rng, std::string id) {
  const int c = Uniform(0, spec.clusters - 1, rng);
  std::vector<size_t> groups = GroupsWithCluster(w, c, SIZE_MAX);
  std::shuffle(groups.begin(), groups.end(), rng);
  const int n = std::min<int>(Uniform(1, spec.max_mentions, rng),
                              static_cast<int>(groups.size()));
  TextBuilder b;
  const Cluster &cl = w.clusters[c];
  for (int i = 0; i < n; ++i) {
    if (Uniform(0, 1, rng)) b.Word(Pick(w.filler, rng));
    b.MentionOf(w.groups[groups[i]].surface, MemberOf(w, groups[i], c));
    b.Word(Uniform(0, 3, rng) == 0 ? cl.name : Pick(cl.cues, rng));
  }
  if (n == 0) {
    // A cluster whose entities all have unique surfaces; fall back to a
    // nickname mention.
    const size_t e = Pick(cl.entities, rng);
    b.MentionOf(w.nickname[e], w.entities[e].id);
    b.Word(Pick(cl.cues, rng));
  }
  return b.Finish(std::move(id), "local");
}

AnnotatedText NilText(const WorldState &w, std::mt19937_64 &rng,
                      std::string id) {
  TextBuilder b;
  b.Word(Pick(w.nil_words, rng));
  b.MentionOf(Pick(w.groups, rng).surface, std::string(kNilId));
  b.Word(Pick(w.nil_words, rng));
  b.Word(Pick(w.nil_words, rng));
  return b.Finish(std::move(id), "nil");
}

AnnotatedText CoherenceText(const WorldState &w, const SyntheticSpec &spec,
                            const std::vector<size_t> &pool,
                            std::mt19937_64 &rng, std::string id) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const size_t x = Pick(pool, rng);
    const int c = w.entity_cluster[x];
    std::vector<size_t> groups = GroupsWithCluster(w, c, w.entity_group[x]);
    if (groups.empty()) continue;
    std::shuffle(groups.begin(), groups.end(), rng);
    const int n = std::min<int>(Uniform(1, spec.max_mentions - 1, rng),
                                static_cast<int>(groups.size()));
    struct Slot {
      std::string surface;
      EntityId gold;
    };
    std::vector<Slot> slots{{w.nickname[x], w.entities[x].id}};
    for (int i = 0; i < n; ++i) {
      slots.push_back({w.groups[groups[i]].surface, MemberOf(w, groups[i], c)});
    }
    std::shuffle(slots.begin(), slots.end(), rng);
    TextBuilder b;
    for (const Slot &s : slots) {
      b.Word(Pick(w.filler, rng));
      b.MentionOf(s.surface, s.gold);
    }
    b.Word(Pick(w.filler, rng));
    return b.Finish(std::move(id), "coherence");
  }
  return LocalText(w, spec, rng, std::move(id));
}

Corpus MakeCorpus(const WorldState &w, const SyntheticSpec &spec, int n,
                  const std::vector<size_t> &pool, const std::string &prefix,
                  std::mt19937_64 &rng) {
  Corpus corpus;
  size_t mentions = 0, nil_mentions = 0;
  std::bernoulli_distribution coherence(spec.coherence_fraction);
  for (int i = 0; i < n; ++i) {
    AnnotatedText t;
    if (static_cast<double>(nil_mentions) <
        spec.nil_rate * static_cast<double>(mentions + 1)) {
      t = NilText(w, rng, "");
      ++nil_mentions;
    } else if (coherence(rng) && !pool.empty()) {
      t = CoherenceText(w, spec, pool, rng, "");
    } else {
      t = LocalText(w, spec, rng, "");
    }
    mentions += t.mentions.size();
    corpus.push_back(std::move(t));
  }
  std::shuffle(corpus.begin(), corpus.end(), rng);
  for (size_t i = 0; i < corpus.size(); ++i) {
    corpus[i].id = prefix + "-" + std::to_string(i);
  }
  return corpus;
}

std::vector<size_t> GroupSizes(const SyntheticSpec &spec,
                               std::mt19937_64 &rng) {
  std::vector<size_t> sizes;
  int total = 0;
  while (total < spec.entities) {
    sizes.push_back(Uniform(spec.min_ambiguity, spec.max_ambiguity, rng));
    total += static_cast<int>(sizes.back());
  }
  int overflow = total - spec.entities;
  for (size_t i = sizes.size(); overflow > 0 && i-- > 0;) {
    while (overflow > 0 && sizes[i] > static_cast<size_t>(spec.min_ambiguity)) {
      --sizes[i];
      --overflow;
    }
  }
  for (size_t i = sizes.size(); overflow > 0 && i-- > 0;) {
    while (overflow > 0 && sizes[i] > 1) {
      --sizes[i];
      --overflow;
    }
  }
  return sizes;
}

}  // namespace

SyntheticWorld GenerateSyntheticWorld(const SyntheticSpec &spec) {
  spec.Validate();
  std::mt19937_64 rng(spec.seed);
  WordMaker words(&rng);
  WorldState w;

  for (int c = 0; c < spec.clusters; ++c) {
    Cluster cl;
    cl.name = words.Next(3, 3);
    for (int i = 0; i < spec.context_words; ++i) {
      cl.cues.push_back(words.Next(2, 3));
    }
    w.clusters.push_back(std::move(cl));
  }
  for (int i = 0; i < kFillerWords; ++i) w.filler.push_back(words.Next(1, 2));
  for (int i = 0; i < kNilWords; ++i) w.nil_words.push_back(words.Next(2, 3));

  std::vector<int> cluster_ids(spec.clusters);
  std::iota(cluster_ids.begin(), cluster_ids.end(), 0);
  std::uniform_int_distribution<std::uint64_t> popularity(1, 1000);
  for (size_t size : GroupSizes(spec, rng)) {
    Group g;
    g.surface = Capitalize(words.Next(2, 3));
    std::shuffle(cluster_ids.begin(), cluster_ids.end(), rng);
    for (size_t k = 0; k < size; ++k) {
      const size_t e = w.entities.size();
      const int c = cluster_ids[k];
      Cluster &cl = w.clusters[c];
      Entity entity;
      entity.id = "E" + std::to_string(1000 + e);
      entity.name = g.surface + " " + Capitalize(cl.name);
      w.nickname.push_back(Capitalize(words.Next(3, 3)));
      entity.aliases = {g.surface, entity.name, w.nickname.back()};
      entity.description = cl.name;
      for (const std::string &cue : cl.cues) entity.description += " " + cue;
      entity.popularity = popularity(rng);
      w.entities.push_back(std::move(entity));
      w.entity_cluster.push_back(c);
      w.entity_group.push_back(w.groups.size());
      cl.entities.push_back(e);
      g.entities.push_back(e);
    }
    w.groups.push_back(std::move(g));
  }

  std::vector<size_t> order(w.entities.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<size_t> train_pool(order.begin(), order.begin() + order.size() / 2);
  std::vector<size_t> test_pool(order.begin() + order.size() / 2, order.end());

  SyntheticWorld world;
  world.train = MakeCorpus(w, spec, spec.train_texts, train_pool, "train", rng);
  world.test = MakeCorpus(w, spec, spec.test_texts, test_pool, "test", rng);
  world.kb = KnowledgeBase(std::move(w.entities));
  return world;
}

}  // namespace mrcel

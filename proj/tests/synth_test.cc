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

#include <set>
#include <sstream>

#include <gtest/gtest.h>

namespace mrcel {
namespace {

SyntheticSpec SmallSpec(std::uint64_t seed) {
  SyntheticSpec s;
  s.train_texts = 150;
  s.test_texts = 150;
  s.seed = seed;
  return s;
}

std::string Dump(const Corpus &c) {
  std::ostringstream out;
  WriteCorpusJsonl(out, c);
  return out.str();
}

TEST(SynthTest, DeterministicPerSeed) {
  SyntheticWorld a = GenerateSyntheticWorld(SmallSpec(4));
  SyntheticWorld b = GenerateSyntheticWorld(SmallSpec(4));
  SyntheticWorld c = GenerateSyntheticWorld(SmallSpec(5));
  EXPECT_EQ(Dump(a.train), Dump(b.train));
  EXPECT_EQ(Dump(a.test), Dump(b.test));
  EXPECT_NE(Dump(a.train), Dump(c.train));
  SyntheticSpec more = SmallSpec(4);
  more.test_texts = 20;
  EXPECT_EQ(Dump(GenerateSyntheticWorld(more).train), Dump(a.train));
}

TEST(SynthTest, TextsAreValidAndResolvable) {
  SyntheticSpec spec = SmallSpec(2);
  SyntheticWorld w = GenerateSyntheticWorld(spec);
  EXPECT_EQ(w.kb.size(), 200u);
  EXPECT_EQ(w.train.size(), 150u);
  AliasIndex index = AliasIndex::Build(w.kb);
  size_t mentions = 0, nil = 0;
  std::set<std::string> ids;
  for (const Corpus *c : {&w.train, &w.test}) {
    for (const AnnotatedText &t : *c) {
      EXPECT_NO_THROW(t.Validate());
      EXPECT_TRUE(ids.insert(t.id).second);
      EXPECT_LE(t.mentions.size(), static_cast<size_t>(spec.max_mentions));
      for (const Mention &m : t.mentions) {
        ++mentions;
        ASSERT_TRUE(m.gold.has_value());
        if (IsNil(*m.gold)) {
          ++nil;
          continue;
        }
        const auto *entries = index.Lookup(m.surface);
        ASSERT_NE(entries, nullptr) << m.surface;
        bool found = false;
        for (const AliasEntry &e : *entries) found = found || e.id == *m.gold;
        EXPECT_TRUE(found);
      }
    }
  }
  EXPECT_NEAR(static_cast<double>(nil) / mentions, spec.nil_rate, 0.03);
}

TEST(SynthTest, SharedSurfacesAreAmbiguousAcrossClusters) {
  SyntheticWorld w = GenerateSyntheticWorld(SmallSpec(3));
  AliasIndex index = AliasIndex::Build(w.kb);
  for (const Entity &e : w.kb.entities()) {
    ASSERT_EQ(e.aliases.size(), 3u);
    const auto &shared = *index.Lookup(e.aliases[0]);
    EXPECT_GE(shared.size(), 2u);
    EXPECT_LE(shared.size(), 4u);
    EXPECT_EQ(index.Lookup(e.aliases[2])->size(), 1u);
  }
}

TEST(SynthTest, NicknamePoolsAreDisjoint) {
  SyntheticWorld w = GenerateSyntheticWorld(SmallSpec(6));
  std::map<std::string, EntityId> nickname_of;
  for (const Entity &e : w.kb.entities()) nickname_of[e.aliases[2]] = e.id;
  auto used = [&](const Corpus &c) {
    std::set<EntityId> out;
    for (const AnnotatedText &t : c) {
      for (const Mention &m : t.mentions) {
        if (nickname_of.count(m.surface)) out.insert(nickname_of[m.surface]);
      }
    }
    return out;
  };
  std::set<EntityId> train = used(w.train), test = used(w.test);
  EXPECT_FALSE(train.empty());
  EXPECT_FALSE(test.empty());
  for (const EntityId &id : test) EXPECT_EQ(train.count(id), 0u) << id;
}

TEST(SynthTest, PopularityCarriesNoSignalOnCoherenceTexts) {
  SyntheticSpec spec = SmallSpec(7);
  spec.test_texts = 600;
  SyntheticWorld w = GenerateSyntheticWorld(spec);
  AliasIndex index = AliasIndex::Build(w.kb);
  size_t shared = 0, top = 0;
  double chance = 0;
  for (const AnnotatedText &t : w.test) {
    if (t.kind != "coherence") continue;
    for (const Mention &m : t.mentions) {
      const auto &entries = *index.Lookup(m.surface);
      if (entries.size() < 2) continue;
      ++shared;
      chance += 1.0 / entries.size();
      top += entries[0].id == *m.gold;
    }
  }
  ASSERT_GT(shared, 200u);
  EXPECT_NEAR(static_cast<double>(top) / shared, chance / shared, 0.08);
}

TEST(SynthTest, SpecValidation) {
  SyntheticSpec s;
  s.clusters = 3;
  EXPECT_THROW(s.Validate(), std::invalid_argument);
  s = SyntheticSpec();
  s.max_mentions = 1;
  EXPECT_THROW(s.Validate(), std::invalid_argument);
  EXPECT_THROW(SyntheticSpec::FromJson({{"entities", "many"}}), InputFormatError);
  SyntheticSpec r = SyntheticSpec::FromJson(SmallSpec(9).ToJson());
  EXPECT_EQ(r.ToJson(), SmallSpec(9).ToJson());
}

}  // namespace
}  // namespace mrcel

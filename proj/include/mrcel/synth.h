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


#ifndef MRCEL_SYNTH_H_
#define MRCEL_SYNTH_H_

#include <cstdint>

#include <nlohmann/json.hpp>

#include "mrcel/corpus.h"
#include "mrcel/kb.h"

namespace mrcel {

// Sizes of a generated world. Entities are grouped into topical clusters;
// shared surfaces name 2 to 4 entities from different clusters.
struct SyntheticSpec {
  int entities = 200;
  int clusters = 10;
  int min_ambiguity = 2;
  int max_ambiguity = 4;
  int context_words = 4;  // per cluster
  int train_texts = 300;
  int test_texts = 200;
  int max_mentions = 3;
  double nil_rate = 0.15;            // share of mentions with gold NIL
  double coherence_fraction = 0.35;  // share of linkable texts
  std::uint64_t seed = 1;

  // Throws std::invalid_argument.
  void Validate() const;
  nlohmann::json ToJson() const;
  // Missing keys keep defaults. Throws InputFormatError.
  static SyntheticSpec FromJson(const nlohmann::json &j);
};

// Texts come in three kinds:
//   "local": shared surfaces next to cue words of the gold cluster.
//   "nil": one known surface among words no description uses; gold NIL.
//   "coherence": a unique nickname plus shared surfaces from the nickname's
//     cluster, surrounded by filler. The shared surfaces are resolvable only
//     through the nickname entity's canonical name. Nicknames used in train
//     and test texts come from disjoint entity pools.
struct SyntheticWorld {
  KnowledgeBase kb;
  Corpus train;
  Corpus test;
};

SyntheticWorld GenerateSyntheticWorld(const SyntheticSpec &spec);

}  // namespace mrcel

#endif  // MRCEL_SYNTH_H_

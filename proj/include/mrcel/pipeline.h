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


#ifndef MRCEL_PIPELINE_H_
#define MRCEL_PIPELINE_H_

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrcel/config.h"
#include "mrcel/corpus.h"
#include "mrcel/global.h"
#include "mrcel/kb.h"
#include "mrcel/local.h"

namespace mrcel {

// Score = beta * local + (1 - beta) * global, elementwise. Throws
// std::invalid_argument on length mismatch or beta outside [0, 1].
std::vector<double> RearFusion(const std::vector<double> &local,
                               const std::vector<double> &global, double beta);

struct LinkDecision {
  size_t mention = 0;
  Span span;
  std::string surface;
  // Option ids in candidate order, "NIL" last when present.
  std::vector<EntityId> candidates;
  std::vector<double> local_probs;
  std::optional<double> linkable;
  std::optional<std::vector<double>> global_probs;
  std::optional<std::vector<double>> fused;
  EntityId selected;
  // Position of the mention in the processing order.
  size_t rank = 0;
};

struct TextDecisions {
  std::string text_id;
  std::vector<LinkDecision> decisions;  // text order
};

// Local pass for every mention, then (when `global` is non-null) the
// multi-turn pass and rear fusion. Mentions with both score vectors select
// the fused argmax; others keep the local decision. A stage-1 override
// forces NIL either way.
TextDecisions LinkText(const AnnotatedText &text, const KnowledgeBase &kb,
                       const AliasIndex &index, const LocalModel &local,
                       const GlobalModel *global, const PipelineConfig &config);

std::vector<TextDecisions> LinkCorpus(const Corpus &corpus,
                                      const KnowledgeBase &kb,
                                      const AliasIndex &index,
                                      const LocalModel &local,
                                      const GlobalModel *global,
                                      const PipelineConfig &config);

// One JSON object per mention: text_id, mention, start, end, surface,
// candidates, selected, rank, linkable, local, global, fused.
void WriteDecisionsJsonl(std::ostream &out,
                         const std::vector<TextDecisions> &decisions);
// Throws InputFormatError.
std::vector<TextDecisions> ReadDecisionsJsonl(std::istream &in);

struct AccuracyCell {
  size_t mentions = 0;
  size_t correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  size_t mentions = 0;
  size_t correct = 0;
  double accuracy = 0.0;
  double nil_precision = 0.0;
  double nil_recall = 0.0;
  // False when no NIL was predicted (precision) or none was gold (recall);
  // the value is then reported as 0.
  bool nil_precision_defined = false;
  bool nil_recall_defined = false;
  // Keyed by the number of mentions in the text.
  std::map<size_t, AccuracyCell> by_mention_count;

  nlohmann::json ToJson() const;
};

// Decisions are matched to texts by id and to mentions by index. Throws
// InputFormatError on missing gold labels or mismatched decisions.
EvalReport Evaluate(const Corpus &corpus,
                    const std::vector<TextDecisions> &decisions);

}  // namespace mrcel

#endif  // MRCEL_PIPELINE_H_

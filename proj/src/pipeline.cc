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


#include "mrcel/pipeline.h"

#include <istream>
#include <ostream>
#include <unordered_map>

namespace mrcel {

using json = nlohmann::json;

std::vector<double> RearFusion(const std::vector<double> &local,
                               const std::vector<double> &global, double beta) {
  if (local.size() != global.size()) {
    throw std::invalid_argument("rear fusion: score vectors differ in length");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("rear fusion: beta outside [0, 1]");
  }
  std::vector<double> fused(local.size());
  for (size_t i = 0; i < local.size(); ++i) {
    fused[i] = beta * local[i] + (1.0 - beta) * global[i];
  }
  return fused;
}

TextDecisions LinkText(const AnnotatedText &text, const KnowledgeBase &kb,
                       const AliasIndex &index, const LocalModel &local,
                       const GlobalModel *global, const PipelineConfig &config) {
  TextDecisions out;
  out.text_id = text.id;
  std::vector<MentionLocalResult> lr = RunLocal(text, kb, index, local, config);
  out.decisions.resize(lr.size());
  for (size_t i = 0; i < lr.size(); ++i) {
    LinkDecision &d = out.decisions[i];
    const Mention &m = text.mentions[i];
    d.mention = i;
    d.span = m.span;
    d.surface = m.surface;
    for (size_t j = 0; j < lr[i].candidates.size(); ++j) {
      d.candidates.push_back(lr[i].candidates.OptionId(j));
    }
    d.local_probs = lr[i].probs;
    d.linkable = lr[i].linkable;
    d.selected = lr[i].prediction.id;
  }
  if (global == nullptr) {
    std::vector<std::vector<double>> probs;
    for (const MentionLocalResult &r : lr) probs.push_back(r.probs);
    std::vector<size_t> order = RankMentions(probs).order;
    if (config.no_rerank) {
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    }
    for (size_t pos = 0; pos < order.size(); ++pos) {
      out.decisions[order[pos]].rank = pos;
    }
    return out;
  }
  MultiTurnResult mt = RunMultiTurn(text, lr, *global, kb, config);
  for (size_t pos = 0; pos < mt.turns.size(); ++pos) {
    const TurnRecord &turn = mt.turns[pos];
    LinkDecision &d = out.decisions[turn.mention];
    d.rank = pos;
    if (!turn.global_probs) continue;
    d.global_probs = turn.global_probs;
    d.fused = RearFusion(d.local_probs, *turn.global_probs, config.beta);
    const MentionLocalResult &r = lr[turn.mention];
    d.selected = r.prediction.overridden
                     ? std::string(kNilId)
                     : r.candidates.OptionId(ArgmaxFirst(*d.fused));
  }
  return out;
}

std::vector<TextDecisions> LinkCorpus(const Corpus &corpus,
                                      const KnowledgeBase &kb,
                                      const AliasIndex &index,
                                      const LocalModel &local,
                                      const GlobalModel *global,
                                      const PipelineConfig &config) {
  std::vector<TextDecisions> out;
  out.reserve(corpus.size());
  for (const AnnotatedText &t : corpus) {
    out.push_back(LinkText(t, kb, index, local, global, config));
  }
  return out;
}

namespace {

template <typename T>
json OptionalJson(const std::optional<T> &value) {
  return value ? json(*value) : json(nullptr);
}

template <typename T>
std::optional<T> OptionalFrom(const json &j, const char *key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

void WriteDecisionsJsonl(std::ostream &out,
                         const std::vector<TextDecisions> &decisions) {
  for (const TextDecisions &t : decisions) {
    for (const LinkDecision &d : t.decisions) {
      json j = {{"text_id", t.text_id},
                {"mention", d.mention},
                {"start", d.span.start},
                {"end", d.span.end},
                {"surface", d.surface},
                {"candidates", d.candidates},
                {"selected", d.selected},
                {"rank", d.rank},
                {"linkable", OptionalJson(d.linkable)},
                {"local", d.local_probs},
                {"global", OptionalJson(d.global_probs)},
                {"fused", OptionalJson(d.fused)}};
      out << j.dump() << '\n';
    }
  }
}

std::vector<TextDecisions> ReadDecisionsJsonl(std::istream &in) {
  std::vector<TextDecisions> out;
  std::unordered_map<std::string, size_t> position;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      LinkDecision d;
      const std::string text_id = j.at("text_id").get<std::string>();
      d.mention = j.at("mention").get<size_t>();
      d.span.start = j.at("start").get<size_t>();
      d.span.end = j.at("end").get<size_t>();
      d.surface = j.at("surface").get<std::string>();
      d.candidates = j.at("candidates").get<std::vector<EntityId>>();
      d.selected = j.at("selected").get<std::string>();
      d.rank = j.value("rank", size_t{0});
      d.linkable = OptionalFrom<double>(j, "linkable");
      d.local_probs = j.value("local", std::vector<double>());
      d.global_probs = OptionalFrom<std::vector<double>>(j, "global");
      d.fused = OptionalFrom<std::vector<double>>(j, "fused");
      auto [it, inserted] = position.try_emplace(text_id, out.size());
      if (inserted) out.push_back({text_id, {}});
      out[it->second].decisions.push_back(std::move(d));
    } catch (const json::exception &err) {
      throw InputFormatError("decisions line " + std::to_string(line_no) +
                             ": " + err.what());
    }
  }
  return out;
}

json EvalReport::ToJson() const {
  json breakdown = json::object();
  for (const auto &[count, cell] : by_mention_count) {
    breakdown[std::to_string(count)] = {{"mentions", cell.mentions},
                                        {"correct", cell.correct},
                                        {"accuracy", cell.accuracy}};
  }
  return {{"mentions", mentions},
          {"correct", correct},
          {"accuracy", accuracy},
          {"nil_precision", nil_precision},
          {"nil_precision_defined", nil_precision_defined},
          {"nil_recall", nil_recall},
          {"nil_recall_defined", nil_recall_defined},
          {"by_mention_count", breakdown}};
}

namespace {

double Ratio(size_t num, size_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

EvalReport Evaluate(const Corpus &corpus,
                    const std::vector<TextDecisions> &decisions) {
  std::unordered_map<std::string, const TextDecisions *> by_id;
  for (const TextDecisions &t : decisions) {
    if (!by_id.emplace(t.text_id, &t).second) {
      throw InputFormatError("duplicate decisions for text " + t.text_id);
    }
  }
  EvalReport report;
  size_t pred_nil = 0, gold_nil = 0, both_nil = 0;
  for (const AnnotatedText &text : corpus) {
    if (text.mentions.empty()) continue;
    auto it = by_id.find(text.id);
    if (it == by_id.end()) {
      throw InputFormatError("no decisions for text " + text.id);
    }
    std::vector<const LinkDecision *> slots(text.mentions.size(), nullptr);
    for (const LinkDecision &d : it->second->decisions) {
      if (d.mention >= slots.size() || slots[d.mention] != nullptr) {
        throw InputFormatError("text " + text.id + ": bad mention index " +
                               std::to_string(d.mention));
      }
      slots[d.mention] = &d;
    }
    AccuracyCell &cell = report.by_mention_count[text.mentions.size()];
    for (size_t i = 0; i < text.mentions.size(); ++i) {
      const Mention &m = text.mentions[i];
      if (!m.gold) {
        throw InputFormatError("text " + text.id + ": mention without gold");
      }
      if (slots[i] == nullptr) {
        throw InputFormatError("text " + text.id + ": missing decision for mention " +
                               std::to_string(i));
      }
      if (slots[i]->span != m.span) {
        throw InputFormatError("text " + text.id + ": span mismatch for mention " +
                               std::to_string(i));
      }
      const bool correct = slots[i]->selected == *m.gold;
      ++report.mentions;
      ++cell.mentions;
      report.correct += correct;
      cell.correct += correct;
      pred_nil += IsNil(slots[i]->selected);
      gold_nil += IsNil(*m.gold);
      both_nil += IsNil(slots[i]->selected) && IsNil(*m.gold);
    }
  }
  report.accuracy = Ratio(report.correct, report.mentions);
  for (auto &[count, cell] : report.by_mention_count) {
    cell.accuracy = Ratio(cell.correct, cell.mentions);
  }
  report.nil_precision_defined = pred_nil > 0;
  report.nil_recall_defined = gold_nil > 0;
  report.nil_precision = Ratio(both_nil, pred_nil);
  report.nil_recall = Ratio(both_nil, gold_nil);
  return report;
}

}  // namespace mrcel

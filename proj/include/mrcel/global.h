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


#ifndef MRCEL_GLOBAL_H_
#define MRCEL_GLOBAL_H_

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "mrcel/checkpoint.h"
#include "mrcel/config.h"
#include "mrcel/corpus.h"
#include "mrcel/encoder.h"
#include "mrcel/kb.h"
#include "mrcel/local.h"

namespace mrcel {

struct AmbiguityRank {
  // Mention indices, easiest (largest gap) first; ties keep text order.
  std::vector<size_t> order;
  // Per mention, in text order: max(probs) - min(probs).
  std::vector<double> gaps;
};

AmbiguityRank RankMentions(const std::vector<std::vector<double>> &probs);

// History gate. u = sigmoid(W_u [v; h]), f = tanh(W_f [u*h; v]),
// g = sigmoid(W_i v + W_h h), fused = g*f + (1-g)*h.
struct GateParams {
  Matrix w_u;  // d x 2d
  Matrix w_f;  // d x 2d
  Matrix w_i;  // d x d
  Matrix w_h;  // d x d

  static GateParams Zeros(int d);

  template <typename F>
  void ForEachTensor(F &&f) {
    Visit(*this, f);
  }
  template <typename F>
  void ForEachTensor(F &&f) const {
    Visit(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void Visit(Self &self, F &f) {
    f(std::string("w_u"), self.w_u);
    f(std::string("w_f"), self.w_f);
    f(std::string("w_i"), self.w_i);
    f(std::string("w_h"), self.w_h);
  }
};

struct GateTrace {
  Vector u, f, g, fused;
};

// kConcat replaces the gate with fused = tanh(W_f [h; v]) (u and g reported
// as ones). kGruLike throws std::logic_error.
GateTrace GateFuse(const Vector &v, const Vector &h, const GateParams &params,
                   GateMode mode = GateMode::kGated);

struct GateInputGrads {
  Vector dv, dh;
};

GateInputGrads GateBackward(const GateTrace &trace, const Vector &v,
                            const Vector &h, const GateParams &params,
                            GateMode mode, const Vector &dfused,
                            GateParams *grads);

struct GlobalModel {
  EncoderConfig encoder_config;
  Vocabulary vocab;
  EncoderParams encoder;
  GateParams gate;
  ScoringHead head;
  GateMode gate_mode = GateMode::kGated;
  HistoryMode history_mode = HistoryMode::kFlow;

  // Copies the local encoder; gate and head are freshly initialized from
  // config.seed.
  static GlobalModel FromLocal(const LocalModel &local,
                               const PipelineConfig &config);

  void BumpRevision() { encoder.BumpRevision(); }

  template <typename F>
  void ForEachTensor(F &&f) {
    Visit(*this, f);
  }
  template <typename F>
  void ForEachTensor(F &&f) const {
    Visit(*this, f);
  }

  // Encoder section, gate section (W_u, W_f, W_i, W_h), head section (W2, b2).
  Checkpoint ToCheckpoint() const;
  static GlobalModel FromCheckpoint(const Checkpoint &checkpoint);

 private:
  template <typename Self, typename F>
  static void Visit(Self &self, F &f) {
    auto prefixed = [&f](const std::string &prefix) {
      return [&f, prefix](const std::string &name, auto &m) {
        f(prefix + name, m);
      };
    };
    self.encoder.ForEachTensor(prefixed("encoder."));
    self.gate.ForEachTensor(prefixed("gate."));
    self.head.ForEachTensor(prefixed("head."));
  }
};

struct GlobalScores {
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<EncoderOutput> encodings;  // v per option
  std::vector<GateTrace> gates;          // fused vector per option
};

// Every option is encoded with the updated query, fused against the shared
// history vector and scored by the global head; softmax over options.
GlobalScores GlobalScoreMention(const GlobalModel &model,
                                const std::vector<TokenSequence> &options,
                                const Vector &history);

// Gradient of what flows into the history produced by this turn: the fused
// vector (flow) or the raw encoding (last) of option `index`.
struct SelectedGrad {
  size_t index = 0;
  Vector grad;
};

// Adds gradients of sum_j dlogits_j * logit_j (+ the selected-option term)
// into *grads and returns the gradient w.r.t. `history`.
Vector AccumulateGlobalGradients(const GlobalModel &model,
                                 const GlobalScores &scores,
                                 const Vector &history,
                                 const std::vector<double> &dlogits,
                                 const std::optional<SelectedGrad> &selected,
                                 GlobalModel *grads);

// Cross entropy over global probabilities; same form as the answer loss.
CrossEntropyResult GlobalLoss(const std::vector<double> &probs,
                              size_t gold_index);

struct TurnRecord {
  size_t mention = 0;
  // Absent for turns decided by the local model (the first entity-bearing
  // turn, or mentions without candidates).
  std::optional<std::vector<double>> global_probs;
  EntityId selected;
};

struct MultiTurnResult {
  AmbiguityRank rank;
  std::vector<TurnRecord> turns;  // processing order
  std::vector<Vector> history;    // history vector after each update
};

// Mentions are visited in ambiguity order (text order with no_rerank). The
// first mention linked to an entity starts the history from its re-encoded
// option; later mentions are scored globally against the running history
// with queries carrying previously linked names.
MultiTurnResult RunMultiTurn(const AnnotatedText &text,
                             const std::vector<MentionLocalResult> &local,
                             const GlobalModel &model, const KnowledgeBase &kb,
                             const PipelineConfig &config);

struct GlobalEpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double turn_accuracy = 0.0;  // teacher-forced
  size_t turns = 0;
};

struct GlobalTrainResult {
  GlobalModel model;
  std::vector<GlobalEpochLog> log;
};

// Teacher-forced multi-turn training with the local model frozen for
// ranking.
GlobalTrainResult TrainGlobal(
    const Corpus &corpus, const KnowledgeBase &kb, const AliasIndex &index,
    const LocalModel &local, const PipelineConfig &config,
    const std::function<void(const GlobalEpochLog &)> &on_epoch = {});

}  // namespace mrcel

#endif  // MRCEL_GLOBAL_H_

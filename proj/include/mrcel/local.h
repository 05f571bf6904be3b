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


#ifndef MRCEL_LOCAL_H_
#define MRCEL_LOCAL_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mrcel/checkpoint.h"
#include "mrcel/config.h"
#include "mrcel/corpus.h"
#include "mrcel/encoder.h"
#include "mrcel/kb.h"

namespace mrcel {

// Floor applied to probabilities before taking logarithms.
inline constexpr double kProbabilityFloor = 1e-30;

std::vector<double> Softmax(const std::vector<double> &logits);
double Sigmoid(double x);
// Index of the largest value; the earliest wins ties.
size_t ArgmaxFirst(const std::vector<double> &values);

// Shared-weight scalar scorer over pooled vectors: logit = w . x + b.
struct ScoringHead {
  Matrix w;  // 1 x d
  Matrix b;  // 1 x 1

  template <typename F>
  void ForEachTensor(F &&f) {
    f(std::string("w"), w);
    f(std::string("b"), b);
  }
  template <typename F>
  void ForEachTensor(F &&f) const {
    f(std::string("w"), w);
    f(std::string("b"), b);
  }

  double Score(const Vector &x) const { return w.row(0).dot(x) + b(0, 0); }
};

// One tanh hidden layer of width d and a scalar output logit.
struct NilClassifier {
  Matrix w_hidden;  // d x d
  Matrix b_hidden;  // 1 x d
  Matrix w_out;     // 1 x d
  Matrix b_out;     // 1 x 1

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
    f(std::string("w_hidden"), self.w_hidden);
    f(std::string("b_hidden"), self.b_hidden);
    f(std::string("w_out"), self.w_out);
    f(std::string("b_out"), self.b_out);
  }
};

struct LocalModel {
  EncoderConfig encoder_config;
  Vocabulary vocab;
  EncoderParams encoder;
  ScoringHead head;
  NilClassifier nil;

  // Encoder seeded with encoder_config.seed; heads from a derived stream.
  static LocalModel Init(const EncoderConfig &config, Vocabulary vocab);

  void BumpRevision() { encoder.BumpRevision(); }

  template <typename F>
  void ForEachTensor(F &&f) {
    Visit(*this, f);
  }
  template <typename F>
  void ForEachTensor(F &&f) const {
    Visit(*this, f);
  }

  // Encoder section, then head section (W1, b1, classifier MLP).
  Checkpoint ToCheckpoint() const;
  static LocalModel FromCheckpoint(const Checkpoint &checkpoint);

 private:
  template <typename Self, typename F>
  static void Visit(Self &self, F &f) {
    auto prefixed = [&f](const std::string &prefix) {
      return [&f, prefix](const std::string &name, auto &m) {
        f(prefix + name, m);
      };
    };
    self.encoder.ForEachTensor(prefixed("encoder."));
    self.head.ForEachTensor(prefixed("head."));
    self.nil.ForEachTensor(prefixed("nil."));
  }
};

struct LocalLossWeights {
  double alpha1 = 0.75;
  double alpha2 = 0.25;
};

// Option i holds the encoding H of candidate i and its probability.
struct LocalScores {
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<EncoderOutput> encodings;
};

std::vector<TokenSequence> BuildOptionSequences(const KnowledgeBase &kb,
                                                const CandidateSet &candidates,
                                                const std::string &query,
                                                const Vocabulary &vocab,
                                                size_t max_len);

// Encodes every option independently; only the softmax couples them.
LocalScores ScoreOptions(const LocalModel &model,
                         const std::vector<TokenSequence> &options);

struct CrossEntropyResult {
  double loss = 0.0;
  std::vector<double> dlogits;  // probs - onehot(gold)
};

// Cross entropy of softmax probabilities against gold_index.
CrossEntropyResult AnswerLoss(const std::vector<double> &probs,
                              size_t gold_index);

struct NilJudgement {
  double logit = 0.0;
  double linkable = 0.5;  // sigmoid(logit)
  EncoderOutput encoding;
  Vector hidden;  // tanh activations of the classifier
};

NilJudgement NilStage1(const LocalModel &model,
                       const TokenSequence &query_sequence);

struct BinaryLossResult {
  double loss = 0.0;
  double dlogit = 0.0;
};

// Binary cross entropy with target 1 for linkable mentions.
BinaryLossResult NilLoss(const NilJudgement &judgement, bool linkable);
BinaryLossResult NilLoss(double linkable_prob, bool linkable);

double JointLocalLoss(double answer_loss, double nil_loss,
                      const LocalLossWeights &weights);

// Adds scale * d(sum_j dlogits_j * logit_j) into grads.
void AccumulateAnswerGradients(const LocalModel &model,
                               const LocalScores &scores,
                               const std::vector<double> &dlogits, double scale,
                               LocalModel *grads);
void AccumulateNilGradients(const LocalModel &model,
                            const NilJudgement &judgement, double dlogit,
                            double scale, LocalModel *grads);

struct LocalPrediction {
  EntityId id;
  // Chosen option, absent when the candidate set is empty or the override
  // picked NIL without a NIL option present.
  std::optional<size_t> option;
  bool overridden = false;
};

// Argmax over options (ties to the earlier option). When `linkable` is given
// and below `threshold`, the prediction is forced to NIL.
LocalPrediction LocalPredict(const std::vector<double> &probs,
                             const CandidateSet &candidates,
                             std::optional<double> linkable, double threshold);

struct LocalEpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;
  double nil_precision = 0.0;
  double nil_recall = 0.0;
};

struct LocalTrainResult {
  LocalModel model;
  std::vector<LocalEpochLog> log;
};

// Training-time candidate repair: when the gold entity was not recalled it
// is appended (set smaller than k) or replaces the least popular entity.
CandidateSet InjectGold(CandidateSet candidates, const EntityId &gold, int k);

// Vocabulary over KB names, descriptions, aliases, corpus texts and the NIL
// option strings.
Vocabulary BuildVocabulary(const KnowledgeBase &kb, const Corpus &corpus);

// Multi-task training of option selection and the linkability classifier.
// Throws InputFormatError when a gold id is neither NIL nor in the KB.
LocalTrainResult TrainLocal(
    const Corpus &corpus, const KnowledgeBase &kb, const AliasIndex &index,
    const PipelineConfig &config,
    const std::function<void(const LocalEpochLog &)> &on_epoch = {});

// Per-mention local inference result used by the global pass and linker.
struct MentionLocalResult {
  CandidateSet candidates;
  std::vector<double> probs;
  std::optional<double> linkable;
  LocalPrediction prediction;
};

std::vector<MentionLocalResult> RunLocal(const AnnotatedText &text,
                                         const KnowledgeBase &kb,
                                         const AliasIndex &index,
                                         const LocalModel &model,
                                         const PipelineConfig &config);

}  // namespace mrcel

#endif  // MRCEL_LOCAL_H_

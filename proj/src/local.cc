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


#include "mrcel/local.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mrcel/optim.h"

namespace mrcel {

using json = nlohmann::json;

std::vector<double> Softmax(const std::vector<double> &logits) {
  if (logits.empty()) return {};
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double &p : out) p /= sum;
  return out;
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

size_t ArgmaxFirst(const std::vector<double> &values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty vector");
  size_t best = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

void FillUniform(Matrix &m, double bound, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng);
}

// Head parameters use a stream separate from the encoder's.
constexpr std::uint64_t kHeadSeedSalt = 0x9e3779b97f4a7c15ULL;

}  // namespace

LocalModel LocalModel::Init(const EncoderConfig &config, Vocabulary vocab) {
  LocalModel model;
  model.encoder_config = config;
  model.encoder_config.vocab_size = vocab.size();
  model.vocab = std::move(vocab);
  model.encoder = InitParams(model.encoder_config);
  const int d = config.d;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::mt19937_64 rng(config.seed ^ kHeadSeedSalt);
  model.head.w = Matrix(1, d);
  FillUniform(model.head.w, bound, rng);
  model.head.b = Matrix::Zero(1, 1);
  model.nil.w_hidden = Matrix(d, d);
  FillUniform(model.nil.w_hidden, bound, rng);
  model.nil.b_hidden = Matrix::Zero(1, d);
  model.nil.w_out = Matrix(1, d);
  FillUniform(model.nil.w_out, bound, rng);
  model.nil.b_out = Matrix::Zero(1, 1);
  return model;
}

Checkpoint LocalModel::ToCheckpoint() const {
  Checkpoint ck;
  ck.header = {{"format", "mrcel-local"},
               {"version", 1},
               {"encoder", encoder_config.ToJson()},
               {"vocab", vocab.tokens()}};
  AppendTensors(*this, "", &ck);
  return ck;
}

LocalModel LocalModel::FromCheckpoint(const Checkpoint &checkpoint) {
  const json &h = checkpoint.header;
  if (h.value("format", std::string()) != "mrcel-local") {
    throw ModelMismatchError("not a local model checkpoint");
  }
  LocalModel model;
  try {
    model.encoder_config = EncoderConfig::FromJson(h.at("encoder"));
    model.vocab =
        Vocabulary::FromTokens(h.at("vocab").get<std::vector<std::string>>());
  } catch (const json::exception &err) {
    throw ModelMismatchError(std::string("local checkpoint header: ") +
                             err.what());
  }
  if (model.vocab.size() != model.encoder_config.vocab_size) {
    throw ModelMismatchError("vocabulary size disagrees with encoder config");
  }
  const int d = model.encoder_config.d;
  model.encoder = EncoderParams::Zeros(model.encoder_config);
  model.head = {Matrix::Zero(1, d), Matrix::Zero(1, 1)};
  model.nil = {Matrix::Zero(d, d), Matrix::Zero(1, d), Matrix::Zero(1, d),
               Matrix::Zero(1, 1)};
  ExtractTensors(checkpoint, "", model);
  return model;
}

std::vector<TokenSequence> BuildOptionSequences(const KnowledgeBase &kb,
                                                const CandidateSet &candidates,
                                                const std::string &query,
                                                const Vocabulary &vocab,
                                                size_t max_len) {
  std::vector<TokenSequence> out;
  out.reserve(candidates.size());
  for (size_t j = 0; j < candidates.size(); ++j) {
    OptionText text = GetOptionText(kb, candidates, j);
    out.push_back(AssembleOptionSequence(text.description, query, text.name,
                                         vocab, max_len));
  }
  return out;
}

LocalScores ScoreOptions(const LocalModel &model,
                         const std::vector<TokenSequence> &options) {
  if (options.empty()) throw std::invalid_argument("no options to score");
  LocalScores scores;
  scores.encodings.reserve(options.size());
  for (const TokenSequence &seq : options) {
    scores.encodings.push_back(
        Encode(model.encoder, model.encoder_config, seq));
    scores.logits.push_back(model.head.Score(scores.encodings.back().pooled));
  }
  scores.probs = Softmax(scores.logits);
  return scores;
}

CrossEntropyResult AnswerLoss(const std::vector<double> &probs,
                              size_t gold_index) {
  if (gold_index >= probs.size()) throw std::out_of_range("gold index");
  CrossEntropyResult r;
  r.loss = -std::log(std::max(probs[gold_index], kProbabilityFloor));
  r.dlogits = probs;
  r.dlogits[gold_index] -= 1.0;
  return r;
}

NilJudgement NilStage1(const LocalModel &model,
                       const TokenSequence &query_sequence) {
  NilJudgement j;
  j.encoding = Encode(model.encoder, model.encoder_config, query_sequence);
  Vector pre = model.nil.w_hidden * j.encoding.pooled +
               model.nil.b_hidden.row(0).transpose();
  j.hidden = pre.array().tanh();
  j.logit = model.nil.w_out.row(0).dot(j.hidden) + model.nil.b_out(0, 0);
  j.linkable = Sigmoid(j.logit);
  return j;
}

BinaryLossResult NilLoss(double linkable_prob, bool linkable) {
  const double y = linkable ? 1.0 : 0.0;
  const double p = std::clamp(linkable_prob, kProbabilityFloor,
                              1.0 - std::numeric_limits<double>::epsilon());
  BinaryLossResult r;
  r.loss = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  r.dlogit = linkable_prob - y;
  return r;
}

BinaryLossResult NilLoss(const NilJudgement &judgement, bool linkable) {
  BinaryLossResult r = NilLoss(judgement.linkable, linkable);
  // Log-sigmoid form stays exact where the clamped probability would not.
  const double y = linkable ? 1.0 : 0.0;
  const double z = judgement.logit;
  r.loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  return r;
}

double JointLocalLoss(double answer_loss, double nil_loss,
                      const LocalLossWeights &weights) {
  return weights.alpha1 * answer_loss + weights.alpha2 * nil_loss;
}

void AccumulateAnswerGradients(const LocalModel &model,
                               const LocalScores &scores,
                               const std::vector<double> &dlogits, double scale,
                               LocalModel *grads) {
  if (dlogits.size() != scores.encodings.size()) {
    throw std::invalid_argument("dlogits size mismatch");
  }
  for (size_t j = 0; j < dlogits.size(); ++j) {
    const double g = scale * dlogits[j];
    const Vector &h = scores.encodings[j].pooled;
    grads->head.w.row(0) += g * h.transpose();
    grads->head.b(0, 0) += g;
    Vector dh = g * model.head.w.row(0).transpose();
    AccumulateEncoderGradients(scores.encodings[j], dh, model.encoder,
                               &grads->encoder);
  }
}

void AccumulateNilGradients(const LocalModel &model,
                            const NilJudgement &judgement, double dlogit,
                            double scale, LocalModel *grads) {
  const double g = scale * dlogit;
  grads->nil.w_out.row(0) += g * judgement.hidden.transpose();
  grads->nil.b_out(0, 0) += g;
  Vector dpre = (g * model.nil.w_out.row(0).transpose()).array() *
                (1.0 - judgement.hidden.array().square());
  grads->nil.w_hidden += dpre * judgement.encoding.pooled.transpose();
  grads->nil.b_hidden.row(0) += dpre.transpose();
  Vector dpooled = model.nil.w_hidden.transpose() * dpre;
  AccumulateEncoderGradients(judgement.encoding, dpooled, model.encoder,
                             &grads->encoder);
}

LocalPrediction LocalPredict(const std::vector<double> &probs,
                             const CandidateSet &candidates,
                             std::optional<double> linkable, double threshold) {
  if (probs.size() != candidates.size()) {
    throw std::invalid_argument("probabilities do not match candidates");
  }
  LocalPrediction p;
  if (linkable && *linkable < threshold) {
    p.id = std::string(kNilId);
    p.option = candidates.IndexOf(kNilId);
    p.overridden = true;
    return p;
  }
  if (probs.empty()) {
    p.id = std::string(kNilId);
    return p;
  }
  size_t best = ArgmaxFirst(probs);
  p.option = best;
  p.id = candidates.OptionId(best);
  return p;
}

Vocabulary BuildVocabulary(const KnowledgeBase &kb, const Corpus &corpus) {
  std::vector<std::string> texts = {std::string(kNilName),
                                    std::string(kNilDescription)};
  for (const Entity &e : kb.entities()) {
    texts.push_back(e.name);
    texts.push_back(e.description);
    for (const std::string &a : e.aliases) texts.push_back(a);
  }
  for (const AnnotatedText &t : corpus) texts.push_back(t.text);
  return Vocabulary::Build(texts);
}

namespace {

struct LocalExample {
  std::vector<TokenSequence> options;
  TokenSequence query;
  size_t gold = 0;
  bool linkable = true;
};

void CheckGold(const KnowledgeBase &kb, const AnnotatedText &t,
               const Mention &m) {
  if (!m.gold) {
    throw InputFormatError("text " + t.id + ": mention '" + m.surface +
                           "' has no gold label");
  }
  if (!IsNil(*m.gold) && kb.Find(*m.gold) == nullptr) {
    throw InputFormatError("text " + t.id + ": gold id " + *m.gold +
                           " is not in the KB");
  }
}

}  // namespace

CandidateSet InjectGold(CandidateSet candidates, const EntityId &gold, int k) {
  if (IsNil(gold) || candidates.IndexOf(gold)) return candidates;
  if (static_cast<int>(candidates.entity_ids.size()) < k) {
    candidates.entity_ids.push_back(gold);
  } else {
    candidates.entity_ids.back() = gold;
  }
  return candidates;
}

LocalTrainResult TrainLocal(
    const Corpus &corpus, const KnowledgeBase &kb, const AliasIndex &index,
    const PipelineConfig &config,
    const std::function<void(const LocalEpochLog &)> &on_epoch) {
  config.Validate();
  EncoderConfig enc = config.encoder;
  enc.seed = config.seed;
  LocalTrainResult result{LocalModel::Init(enc, BuildVocabulary(kb, corpus)),
                          {}};
  LocalModel &model = result.model;
  const size_t max_len = static_cast<size_t>(config.local_max_len);

  std::vector<LocalExample> examples;
  for (const AnnotatedText &t : corpus) {
    for (size_t i = 0; i < t.mentions.size(); ++i) {
      const Mention &m = t.mentions[i];
      CheckGold(kb, t, m);
      const bool linkable = !IsNil(*m.gold);
      if (!linkable && !config.nil_verifier) continue;
      CandidateSet cands = InjectGold(
          GenerateCandidates(index, m.surface, config.k, config.nil_verifier),
          *m.gold, config.k);
      const std::string query = BuildQuery(t, i);
      LocalExample ex;
      ex.options = BuildOptionSequences(kb, cands, query, model.vocab, max_len);
      if (config.nil_verifier) {
        ex.query = AssembleQuerySequence(query, model.vocab, max_len);
      }
      ex.gold = *cands.IndexOf(*m.gold);
      ex.linkable = linkable;
      examples.push_back(std::move(ex));
    }
  }

  const TrainConfig &tc = config.local_train;
  const size_t batch = static_cast<size_t>(tc.batch_size);
  const std::int64_t steps_per_epoch =
      static_cast<std::int64_t>((examples.size() + batch - 1) / batch);
  AdamSchedule schedule;
  schedule.lr = tc.lr;
  schedule.warmup_fraction = tc.warmup_fraction;
  schedule.total_steps = std::max<std::int64_t>(1, steps_per_epoch * tc.epochs);
  AdamState state;
  const LocalLossWeights weights{config.alpha1, config.alpha2};
  std::mt19937_64 rng(config.seed);
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  LocalModel grads = ZerosLike(model);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t end = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      SetZero(grads);
      for (size_t b = start; b < end; ++b) {
        const LocalExample &ex = examples[order[b]];
        LocalScores scores = ScoreOptions(model, ex.options);
        CrossEntropyResult ans = AnswerLoss(scores.probs, ex.gold);
        AccumulateAnswerGradients(model, scores, ans.dlogits,
                                  weights.alpha1 * scale, &grads);
        double nil_loss = 0.0;
        if (config.nil_verifier) {
          NilJudgement judgement = NilStage1(model, ex.query);
          BinaryLossResult nl = NilLoss(judgement, ex.linkable);
          nil_loss = nl.loss;
          AccumulateNilGradients(model, judgement, nl.dlogit,
                                 weights.alpha2 * scale, &grads);
        }
        total_loss += JointLocalLoss(ans.loss, nil_loss, weights);
      }
      AdamStep(model, grads, state, schedule);
    }

    LocalEpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss =
        examples.empty() ? 0.0 : total_loss / static_cast<double>(examples.size());
    size_t mentions = 0, correct = 0, pred_nil = 0, gold_nil = 0, both_nil = 0;
    for (const AnnotatedText &t : corpus) {
      std::vector<MentionLocalResult> local = RunLocal(t, kb, index, model, config);
      for (size_t i = 0; i < t.mentions.size(); ++i) {
        const EntityId &gold = *t.mentions[i].gold;
        const EntityId &pred = local[i].prediction.id;
        ++mentions;
        correct += pred == gold;
        pred_nil += IsNil(pred);
        gold_nil += IsNil(gold);
        both_nil += IsNil(pred) && IsNil(gold);
      }
    }
    entry.accuracy = mentions ? static_cast<double>(correct) / mentions : 0.0;
    entry.nil_precision =
        pred_nil ? static_cast<double>(both_nil) / pred_nil : 0.0;
    entry.nil_recall = gold_nil ? static_cast<double>(both_nil) / gold_nil : 0.0;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

std::vector<MentionLocalResult> RunLocal(const AnnotatedText &text,
                                         const KnowledgeBase &kb,
                                         const AliasIndex &index,
                                         const LocalModel &model,
                                         const PipelineConfig &config) {
  const size_t max_len = static_cast<size_t>(config.local_max_len);
  std::vector<MentionLocalResult> out(text.mentions.size());
  for (size_t i = 0; i < text.mentions.size(); ++i) {
    MentionLocalResult &r = out[i];
    r.candidates = GenerateCandidates(index, text.mentions[i].surface, config.k,
                                      config.nil_verifier);
    if (r.candidates.empty()) {
      r.prediction.id = std::string(kNilId);
      continue;
    }
    const std::string query = BuildQuery(text, i);
    r.probs = ScoreOptions(model, BuildOptionSequences(kb, r.candidates, query,
                                                       model.vocab, max_len))
                  .probs;
    if (config.nil_verifier) {
      r.linkable =
          NilStage1(model, AssembleQuerySequence(query, model.vocab, max_len))
              .linkable;
    }
    std::optional<double> gate;
    if (config.nil_verifier && config.nil_override) gate = r.linkable;
    r.prediction =
        LocalPredict(r.probs, r.candidates, gate, config.nil_threshold);
  }
  return out;
}

}  // namespace mrcel

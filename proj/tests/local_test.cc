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

#include <gtest/gtest.h>

#include "mrcel/optim.h"
#include "test_util.h"

namespace mrcel {
namespace {

using testing::CheckGradients;
using testing::RandomMatrix;

Entity MakeEntity(const std::string &id, const std::string &name,
                  const std::string &description,
                  std::vector<std::string> aliases, std::uint64_t pop) {
  return {id, name, description, std::move(aliases), pop};
}

KnowledgeBase PlanetKb() {
  return KnowledgeBase({
      MakeEntity("planet", "Mercury (planet)", "closest planet to the sun",
                 {"Mercury"}, 50),
      MakeEntity("element", "Mercury (element)", "liquid metal element",
                 {"Mercury", "quicksilver"}, 40),
      MakeEntity("god", "Mercury (mythology)", "roman messenger god",
                 {"Mercury"}, 30),
  });
}

AnnotatedText Text(const std::string &text, const std::string &surface,
                   const std::string &gold) {
  AnnotatedText t;
  t.id = text;
  t.text = text;
  const size_t pos = text.find(surface);
  t.mentions = {{{pos, pos + surface.size()}, surface, gold}};
  return t;
}

PipelineConfig SmallConfig() {
  PipelineConfig c;
  c.encoder.d = 8;
  c.encoder.n_layers = 1;
  c.encoder.n_heads = 2;
  c.encoder.max_len = 64;
  c.local_max_len = 64;
  c.global_max_len = 64;
  c.local_train = {1e-3, 0.1, 3, 1};
  return c;
}

LocalModel RandomModel(const KnowledgeBase &kb, const Corpus &corpus,
                       std::uint64_t seed) {
  PipelineConfig c = SmallConfig();
  c.encoder.seed = seed;
  LocalModel m = LocalModel::Init(c.encoder, BuildVocabulary(kb, corpus));
  std::mt19937_64 rng(seed);
  m.ForEachTensor([&](const std::string &name, Matrix &t) {
    t = RandomMatrix(t.rows(), t.cols(), rng, 0.5);
    if (name.find("gain") != std::string::npos) t.array() += 1.0;
  });
  return m;
}

TEST(SoftmaxTest, KnownValues) {
  // 1 / (1 + e^-2) = 0.880797077977882...
  std::vector<double> p = Softmax({2.0, 0.0});
  EXPECT_NEAR(p[0], 0.8807970779778823, 1e-15);
  EXPECT_NEAR(p[1], 0.11920292202211755, 1e-15);
  for (double x : Softmax({1.5, 1.5, 1.5})) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
}

TEST(SoftmaxTest, ShiftInvariantAndNormalized) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> z(1 + i % 6);
    for (double &x : z) x = n(rng);
    std::vector<double> p = Softmax(z);
    const double c = n(rng) * 10;
    std::vector<double> shifted = z;
    for (double &x : shifted) x += c;
    std::vector<double> q = Softmax(shifted);
    double sum = 0;
    for (size_t j = 0; j < p.size(); ++j) {
      EXPECT_NEAR(p[j], q[j], 1e-12);
      EXPECT_GE(p[j], 0.0);
      sum += p[j];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(SoftmaxTest, ArgmaxTiesGoFirst) {
  EXPECT_EQ(ArgmaxFirst({0.2, 0.4, 0.4}), 1u);
  EXPECT_EQ(ArgmaxFirst({0.5}), 0u);
}

TEST(AnswerLossTest, ClosedForms) {
  EXPECT_DOUBLE_EQ(AnswerLoss({0.0, 1.0}, 1).loss, 0.0);
  EXPECT_NEAR(AnswerLoss({0.25, 0.25, 0.25, 0.25}, 2).loss, std::log(4.0),
              1e-15);
  EXPECT_NEAR(AnswerLoss({1.0, 0.0}, 1).loss, -std::log(1e-30), 1e-9);
  EXPECT_THROW(AnswerLoss({1.0}, 1), std::out_of_range);
}

TEST(AnswerLossTest, LogitGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(4);
    for (double &x : z) x = n(rng);
    const size_t gold = trial % 4;
    CrossEntropyResult r = AnswerLoss(Softmax(z), gold);
    for (size_t j = 0; j < 4; ++j) {
      std::vector<double> up = z, down = z;
      up[j] += 1e-5;
      down[j] -= 1e-5;
      const double fd = (AnswerLoss(Softmax(up), gold).loss -
                         AnswerLoss(Softmax(down), gold).loss) /
                        2e-5;
      EXPECT_NEAR(r.dlogits[j], fd, 1e-8);
    }
  }
}

TEST(NilLossTest, ClosedForms) {
  EXPECT_NEAR(NilLoss(0.5, true).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(NilLoss(0.5, false).loss, std::log(2.0), 1e-15);
  EXPECT_LT(NilLoss(1.0 - 1e-12, true).loss, 1e-11);
  EXPECT_DOUBLE_EQ(Sigmoid(0.0), 0.5);
  EXPECT_GT(Sigmoid(20.0), 0.9999);
}

TEST(NilLossTest, MatchesIndependentArithmetic) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int i = 0; i < 200; ++i) {
    const double p = u(rng);
    const bool y = i % 3 == 0;
    const double expected = y ? -std::log(p) : -std::log(1.0 - p);
    EXPECT_NEAR(NilLoss(p, y).loss, expected, 1e-12);
    EXPECT_NEAR(NilLoss(p, y).dlogit, p - (y ? 1.0 : 0.0), 1e-15);
  }
}

TEST(JointLossTest, Weights) {
  LocalLossWeights w;
  EXPECT_EQ(w.alpha1, 0.75);
  EXPECT_EQ(w.alpha2, 0.25);
  EXPECT_NEAR(JointLocalLoss(std::log(2.0), std::log(2.0), w), std::log(2.0),
              1e-15);
  EXPECT_EQ(JointLocalLoss(1.7, 123.0, {0.75, 0.0}), 0.75 * 1.7);
}

TEST(LocalPredictTest, ArgmaxAndOverride) {
  CandidateSet c{"x", {"e1", "e2"}, true};
  EXPECT_EQ(LocalPredict({0.1, 0.2, 0.7}, c, 0.9, 0.5).id, "NIL");
  LocalPrediction over = LocalPredict({0.8, 0.1, 0.1}, c, 0.2, 0.5);
  EXPECT_EQ(over.id, "NIL");
  EXPECT_TRUE(over.overridden);
  EXPECT_EQ(over.option, 2u);
  EXPECT_EQ(LocalPredict({0.8, 0.1, 0.1}, c, 0.9, 0.5).id, "e1");
  CandidateSet plain{"x", {"e1", "e2"}, false};
  EXPECT_EQ(LocalPredict({0.3, 0.7}, plain, std::nullopt, 0.5).id, "e2");
  EXPECT_EQ(LocalPredict({0.5, 0.5}, plain, std::nullopt, 0.5).id, "e1");
  EXPECT_EQ(LocalPredict({}, CandidateSet{}, std::nullopt, 0.5).id, "NIL");
}

TEST(InjectGoldTest, AppendsOrReplacesLast) {
  CandidateSet c{"x", {"a", "b"}, true};
  EXPECT_EQ(InjectGold(c, "g", 3).entity_ids,
            (std::vector<EntityId>{"a", "b", "g"}));
  EXPECT_EQ(InjectGold(c, "g", 2).entity_ids,
            (std::vector<EntityId>{"a", "g"}));
  EXPECT_EQ(InjectGold(c, "a", 2).entity_ids, c.entity_ids);
  EXPECT_TRUE(InjectGold(c, "g", 2).includes_nil);
}

TEST(ScoreOptionsTest, PermutationEquivariant) {
  KnowledgeBase kb = PlanetKb();
  Corpus corpus = {Text("the messenger Mercury flew", "Mercury", "god")};
  LocalModel m = RandomModel(kb, corpus, 4);
  AliasIndex index = AliasIndex::Build(kb);
  CandidateSet c = GenerateCandidates(index, "Mercury", 5, true);
  const std::string q = BuildQuery(corpus[0], 0);
  std::vector<double> p =
      ScoreOptions(m, BuildOptionSequences(kb, c, q, m.vocab, 64)).probs;
  CandidateSet r = c;
  std::reverse(r.entity_ids.begin(), r.entity_ids.end());
  std::vector<double> pr =
      ScoreOptions(m, BuildOptionSequences(kb, r, q, m.vocab, 64)).probs;
  const size_t n = c.entity_ids.size();
  for (size_t i = 0; i < n; ++i) EXPECT_NEAR(p[i], pr[n - 1 - i], 1e-14);
  EXPECT_NEAR(p[n], pr[n], 1e-14);
  EXPECT_EQ(LocalPredict(p, c, std::nullopt, 0.5).id,
            LocalPredict(pr, r, std::nullopt, 0.5).id);
}

TEST(LocalGradientTest, JointLossMatchesFiniteDifferences) {
  KnowledgeBase kb = PlanetKb();
  Corpus corpus = {Text("the messenger Mercury flew", "Mercury", "god")};
  AliasIndex index = AliasIndex::Build(kb);
  CandidateSet c = GenerateCandidates(index, "Mercury", 5, true);
  const std::string q = BuildQuery(corpus[0], 0);
  const LocalLossWeights w{0.75, 0.25};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    LocalModel m = RandomModel(kb, corpus, seed);
    std::vector<TokenSequence> options =
        BuildOptionSequences(kb, c, q, m.vocab, 64);
    TokenSequence query = AssembleQuerySequence(q, m.vocab, 64);
    const size_t gold = seed % c.size();
    const bool linkable = seed % 2 == 0;
    auto loss = [&] {
      LocalScores s = ScoreOptions(m, options);
      return JointLocalLoss(AnswerLoss(s.probs, gold).loss,
                            NilLoss(NilStage1(m, query), linkable).loss, w);
    };
    LocalModel grads = ZerosLike(m);
    LocalScores s = ScoreOptions(m, options);
    AccumulateAnswerGradients(m, s, AnswerLoss(s.probs, gold).dlogits,
                              w.alpha1, &grads);
    NilJudgement j = NilStage1(m, query);
    AccumulateNilGradients(m, j, NilLoss(j, linkable).dlogit, w.alpha2,
                           &grads);
    for (const auto &e : CheckGradients(m, grads, loss)) {
      EXPECT_LE(e.relative_error, 1e-4) << "seed " << seed << " " << e.name;
    }
  }
}

TEST(TrainLocalTest, ZeroEpochsKeepsInitialization) {
  KnowledgeBase kb = PlanetKb();
  Corpus corpus = {Text("the messenger Mercury flew", "Mercury", "god")};
  PipelineConfig c = SmallConfig();
  c.local_train.epochs = 0;
  LocalTrainResult r = TrainLocal(corpus, kb, AliasIndex::Build(kb), c);
  EncoderConfig enc = c.encoder;
  enc.seed = c.seed;
  EXPECT_TRUE(BitwiseEqual(r.model,
                           LocalModel::Init(enc, BuildVocabulary(kb, corpus))));
  EXPECT_TRUE(r.log.empty());
}

TEST(TrainLocalTest, SingleExampleLossNonIncreasing) {
  KnowledgeBase kb = PlanetKb();
  Corpus corpus = {Text("the messenger Mercury flew", "Mercury", "god")};
  PipelineConfig c = SmallConfig();
  c.local_train = {1e-3, 0.1, 12, 1};
  LocalTrainResult r = TrainLocal(corpus, kb, AliasIndex::Build(kb), c);
  ASSERT_EQ(r.log.size(), 12u);
  for (size_t i = 1; i < r.log.size(); ++i) {
    EXPECT_LE(r.log[i].mean_loss, r.log[i - 1].mean_loss) << "epoch " << i;
  }
}

TEST(TrainLocalTest, LearnsAndIsReproducible) {
  KnowledgeBase kb = PlanetKb();
  Corpus corpus = {
      Text("the messenger Mercury flew", "Mercury", "god"),
      Text("a hot Mercury orbit near the sun", "Mercury", "planet"),
      Text("liquid Mercury metal spilled", "Mercury", "element"),
      Text("zorp Mercury blick", "Mercury", "NIL"),
  };
  PipelineConfig c = SmallConfig();
  c.local_train = {1e-2, 0.1, 40, 2};
  AliasIndex index = AliasIndex::Build(kb);
  LocalTrainResult a = TrainLocal(corpus, kb, index, c);
  LocalTrainResult b = TrainLocal(corpus, kb, index, c);
  EXPECT_TRUE(BitwiseEqual(a.model, b.model));
  EXPECT_EQ(a.log.back().accuracy, 1.0);
  EXPECT_LT(a.log.back().mean_loss, a.log.front().mean_loss);
}

TEST(TrainLocalTest, UnknownGoldIsInputError) {
  KnowledgeBase kb = PlanetKb();
  Corpus corpus = {Text("Mercury", "Mercury", "missing")};
  EXPECT_THROW(TrainLocal(corpus, kb, AliasIndex::Build(kb), SmallConfig()),
               InputFormatError);
}

TEST(RunLocalTest, VerifierDisabledIsPlainArgmax) {
  KnowledgeBase kb = PlanetKb();
  Corpus corpus = {Text("the messenger Mercury flew", "Mercury", "god")};
  LocalModel m = RandomModel(kb, corpus, 7);
  PipelineConfig c = SmallConfig();
  c.nil_verifier = false;
  std::vector<MentionLocalResult> r =
      RunLocal(corpus[0], kb, AliasIndex::Build(kb), m, c);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_FALSE(r[0].candidates.includes_nil);
  EXPECT_FALSE(r[0].linkable.has_value());
  EXPECT_EQ(r[0].prediction.id,
            r[0].candidates.OptionId(ArgmaxFirst(r[0].probs)));
}

}  // namespace
}  // namespace mrcel

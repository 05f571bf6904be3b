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


#include "mrcel/global.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "mrcel/optim.h"
#include "test_util.h"

namespace mrcel {
namespace {

using testing::CheckGradients;
using testing::RandomMatrix;
using testing::RandomVector;

TEST(RankMentionsTest, SortsByGap) {
  AmbiguityRank r = RankMentions({{0.9, 0.1}, {0.6, 0.4}, {0.75, 0.25}});
  EXPECT_EQ(r.order, (std::vector<size_t>{0, 2, 1}));
  EXPECT_NEAR(r.gaps[0], 0.8, 1e-15);
  EXPECT_NEAR(r.gaps[1], 0.2, 1e-15);
  EXPECT_NEAR(r.gaps[2], 0.5, 1e-15);
  EXPECT_EQ(RankMentions({{0.3, 0.7}}).order, std::vector<size_t>{0});
  // Ties keep text order.
  EXPECT_EQ(RankMentions({{0.5, 0.5}, {1.0}, {0.2, 0.8}, {0.8, 0.2}}).order,
            (std::vector<size_t>{2, 3, 0, 1}));
}

TEST(RankMentionsTest, GapMatchesPairwiseBruteForce) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<double>> probs(1 + trial % 5);
    for (auto &p : probs) {
      p.resize(1 + (trial * 7) % 6);
      for (double &x : p) x = u(rng);
    }
    AmbiguityRank r = RankMentions(probs);
    for (size_t m = 0; m < probs.size(); ++m) {
      double best = 0.0;
      for (double a : probs[m]) {
        for (double b : probs[m]) best = std::max(best, std::abs(a - b));
      }
      EXPECT_EQ(r.gaps[m], best);
      std::vector<double> shuffled = probs[m];
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      EXPECT_EQ(RankMentions({shuffled}).gaps[0], best);
    }
    for (size_t i = 1; i < r.order.size(); ++i) {
      EXPECT_GE(r.gaps[r.order[i - 1]], r.gaps[r.order[i]]);
    }
  }
}

GateParams RandomGate(int d, std::mt19937_64 &rng, double scale = 1.0) {
  return {RandomMatrix(d, 2 * d, rng, scale), RandomMatrix(d, 2 * d, rng, scale),
          RandomMatrix(d, d, rng, scale), RandomMatrix(d, d, rng, scale)};
}

TEST(GateTest, ZeroParametersClosedForm) {
  std::mt19937_64 rng(1);
  GateParams zero = GateParams::Zeros(5);
  Vector v = RandomVector(5, rng), h = RandomVector(5, rng);
  GateTrace t = GateFuse(v, h, zero);
  EXPECT_TRUE((t.u.array() == 0.5).all());
  EXPECT_TRUE((t.f.array() == 0.0).all());
  EXPECT_TRUE((t.g.array() == 0.5).all());
  EXPECT_LE((t.fused - 0.5 * h).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE((GateFuse(v, Vector::Zero(5), zero).fused.array() == 0.0).all());
}

TEST(GateTest, MatchesStraightLineOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    GateParams p = RandomGate(2, rng);
    Vector v = RandomVector(2, rng), h = RandomVector(2, rng);
    double vh[4] = {v[0], v[1], h[0], h[1]};
    double u[2], f[2], g[2], out[2];
    for (int k = 0; k < 2; ++k) {
      double s = 0;
      for (int j = 0; j < 4; ++j) s += p.w_u(k, j) * vh[j];
      u[k] = 1.0 / (1.0 + std::exp(-s));
    }
    double a[4] = {u[0] * h[0], u[1] * h[1], v[0], v[1]};
    for (int k = 0; k < 2; ++k) {
      double s = 0;
      for (int j = 0; j < 4; ++j) s += p.w_f(k, j) * a[j];
      f[k] = std::tanh(s);
      double z = p.w_i(k, 0) * v[0] + p.w_i(k, 1) * v[1] + p.w_h(k, 0) * h[0] +
                 p.w_h(k, 1) * h[1];
      g[k] = 1.0 / (1.0 + std::exp(-z));
      out[k] = g[k] * f[k] + (1.0 - g[k]) * h[k];
    }
    GateTrace t = GateFuse(v, h, p);
    for (int k = 0; k < 2; ++k) {
      EXPECT_NEAR(t.u[k], u[k], 1e-14);
      EXPECT_NEAR(t.f[k], f[k], 1e-14);
      EXPECT_NEAR(t.g[k], g[k], 1e-14);
      EXPECT_NEAR(t.fused[k], out[k], 1e-14);
    }
  }
}

TEST(GateTest, ConvexCombinationBounds) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10000; ++trial) {
    const int d = 1 + trial % 6;
    GateParams p = RandomGate(d, rng, 2.0);
    Vector v = RandomVector(d, rng, 3.0), h = RandomVector(d, rng, 3.0);
    GateTrace t = GateFuse(v, h, p);
    for (int k = 0; k < d; ++k) {
      ASSERT_GE(t.fused[k], std::min(t.f[k], h[k]) - 1e-15);
      ASSERT_LE(t.fused[k], std::max(t.f[k], h[k]) + 1e-15);
      ASSERT_GE(t.g[k], 0.0);
      ASSERT_LE(t.g[k], 1.0);
      ASSERT_GE(t.u[k], 0.0);
      ASSERT_LE(t.u[k], 1.0);
      ASSERT_GE(t.f[k], -1.0);
      ASSERT_LE(t.f[k], 1.0);
    }
  }
}

TEST(GateTest, VariantsAndErrors) {
  std::mt19937_64 rng(3);
  GateParams p = RandomGate(3, rng);
  Vector v = RandomVector(3, rng), h = RandomVector(3, rng);
  Vector hv(6);
  hv << h, v;
  Vector concat = (p.w_f * hv).array().tanh();
  EXPECT_LE((GateFuse(v, h, p, GateMode::kConcat).fused - concat).norm(), 1e-14);
  // History disabled: the output depends on v alone.
  Vector a = GateFuse(v, h, p, GateMode::kCurrentOnly).fused;
  Vector b = GateFuse(v, RandomVector(3, rng), p, GateMode::kCurrentOnly).fused;
  EXPECT_TRUE(a == b);
  EXPECT_THROW(GateFuse(v, h, p, GateMode::kGruLike), std::logic_error);
  EXPECT_THROW(GateFuse(v, RandomVector(2, rng), p), std::invalid_argument);
}

struct GateBox {
  GateParams gate;
  Vector v, h;

  template <typename F>
  void ForEachTensor(F &&f) {
    gate.ForEachTensor(f);
    Matrix mv = v, mh = h;
    f(std::string("v"), mv);
    f(std::string("h"), mh);
    v = mv;
    h = mh;
  }
};

TEST(GateTest, BackwardMatchesFiniteDifferences) {
  for (GateMode mode :
       {GateMode::kGated, GateMode::kConcat, GateMode::kCurrentOnly}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      std::mt19937_64 rng(seed);
      const int d = 4;
      GateParams p = RandomGate(d, rng);
      Vector v = RandomVector(d, rng), h = RandomVector(d, rng);
      Vector w = RandomVector(d, rng);
      auto loss = [&] { return GateFuse(v, h, p, mode).fused.dot(w); };
      GateParams grads = GateParams::Zeros(d);
      GateInputGrads in =
          GateBackward(GateFuse(v, h, p, mode), v, h, p, mode, w, &grads);
      for (const auto &e : CheckGradients(p, grads, loss)) {
        EXPECT_LE(e.relative_error, 1e-4) << ToString(mode) << " " << e.name;
      }
      for (int k = 0; k < d; ++k) {
        const double eps = 1e-5;
        Vector vp = v, vm = v, hp = h, hm = h;
        vp[k] += eps;
        vm[k] -= eps;
        hp[k] += eps;
        hm[k] -= eps;
        EXPECT_NEAR(in.dv[k],
                    (GateFuse(vp, h, p, mode).fused.dot(w) -
                     GateFuse(vm, h, p, mode).fused.dot(w)) / (2 * eps),
                    1e-8);
        EXPECT_NEAR(in.dh[k],
                    (GateFuse(v, hp, p, mode).fused.dot(w) -
                     GateFuse(v, hm, p, mode).fused.dot(w)) / (2 * eps),
                    1e-8);
      }
    }
  }
}

Entity MakeEntity(const std::string &id, const std::string &name,
                  const std::string &description,
                  std::vector<std::string> aliases, std::uint64_t pop) {
  return {id, name, description, std::move(aliases), pop};
}

KnowledgeBase GameKb() {
  return KnowledgeBase({
      MakeEntity("wow", "World of Warcraft", "online game by blizzard",
                 {"World of Warcraft"}, 10),
      MakeEntity("zerg_sc", "Zerg (StarCraft)", "alien race in starcraft",
                 {"Zerg"}, 8),
      MakeEntity("zerg_st", "Zerg (Starship Troopers)", "insect race in film",
                 {"Zerg"}, 9),
      MakeEntity("pal_wow", "Paladin (World of Warcraft)",
                 "holy class in warcraft", {"Paladin"}, 5),
      MakeEntity("pal_df", "Paladin (Dungeon Fighter)",
                 "class in dungeon fighter", {"Paladin"}, 6),
  });
}

AnnotatedText GameText() {
  AnnotatedText t;
  t.id = "g";
  t.text = "Zerg and Paladin in World of Warcraft";
  t.mentions = {{{0, 4}, "Zerg", "zerg_sc"},
                {{9, 16}, "Paladin", "pal_wow"},
                {{20, 37}, "World of Warcraft", "wow"}};
  return t;
}

PipelineConfig SmallConfig() {
  PipelineConfig c;
  c.encoder.d = 4;
  c.encoder.n_layers = 1;
  c.encoder.n_heads = 2;
  c.encoder.max_len = 48;
  c.local_max_len = 48;
  c.global_max_len = 48;
  return c;
}

LocalModel RandomLocal(const PipelineConfig &c, std::uint64_t seed) {
  EncoderConfig enc = c.encoder;
  enc.seed = seed;
  LocalModel m =
      LocalModel::Init(enc, BuildVocabulary(GameKb(), {GameText()}));
  std::mt19937_64 rng(seed);
  m.ForEachTensor([&](const std::string &name, Matrix &t) {
    t = RandomMatrix(t.rows(), t.cols(), rng, 0.5);
    if (name.find("gain") != std::string::npos) t.array() += 1.0;
  });
  return m;
}

GlobalModel RandomGlobal(const PipelineConfig &c, std::uint64_t seed) {
  GlobalModel g = GlobalModel::FromLocal(RandomLocal(c, seed), c);
  std::mt19937_64 rng(seed + 100);
  g.ForEachTensor([&](const std::string &name, Matrix &t) {
    t = RandomMatrix(t.rows(), t.cols(), rng, 0.5);
    if (name.find("gain") != std::string::npos) t.array() += 1.0;
  });
  return g;
}

TEST(GlobalScoreTest, ZeroGateGivesUniformScores) {
  PipelineConfig c = SmallConfig();
  GlobalModel g = RandomGlobal(c, 3);
  g.gate = GateParams::Zeros(4);
  KnowledgeBase kb = GameKb();
  CandidateSet cands = GenerateCandidates(AliasIndex::Build(kb), "Zerg", 5, true);
  std::mt19937_64 rng(1);
  GlobalScores s = GlobalScoreMention(
      g, BuildOptionSequences(kb, cands, "[MASK] race", g.vocab, 48),
      RandomVector(4, rng));
  for (double p : s.probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-12);
}

TEST(GlobalScoreTest, TwoOptionsMatchStraightLine) {
  PipelineConfig c = SmallConfig();
  GlobalModel g = RandomGlobal(c, 5);
  KnowledgeBase kb = GameKb();
  CandidateSet cands{"Zerg", {"zerg_sc", "zerg_st"}, false};
  std::vector<TokenSequence> opts =
      BuildOptionSequences(kb, cands, "[MASK] race", g.vocab, 48);
  std::mt19937_64 rng(2);
  Vector h = RandomVector(4, rng);
  GlobalScores s = GlobalScoreMention(g, opts, h);
  double logit[2];
  for (int j = 0; j < 2; ++j) {
    Vector v = Encode(g.encoder, g.encoder_config, opts[j]).pooled;
    logit[j] = g.head.w.row(0).dot(GateFuse(v, h, g.gate).fused) + g.head.b(0, 0);
  }
  const double p0 = 1.0 / (1.0 + std::exp(logit[1] - logit[0]));
  EXPECT_NEAR(s.probs[0], p0, 1e-14);
  EXPECT_NEAR(s.probs[1], 1.0 - p0, 1e-14);
}

// Two teacher-forced turns: h0 from an option encoding, turn 1 fused against
// h0, turn 2 against the selected output of turn 1.
TEST(GlobalGradientTest, FullChainMatchesFiniteDifferences) {
  KnowledgeBase kb = GameKb();
  struct Variant {
    GateMode gate;
    HistoryMode history;
    int seeds;
  };
  for (Variant var : {Variant{GateMode::kGated, HistoryMode::kFlow, 5},
                      Variant{GateMode::kGated, HistoryMode::kLast, 2},
                      Variant{GateMode::kConcat, HistoryMode::kFlow, 2}}) {
    for (int seed = 1; seed <= var.seeds; ++seed) {
      PipelineConfig c = SmallConfig();
      c.gate_mode = var.gate;
      c.history_mode = var.history;
      GlobalModel g = RandomGlobal(c, seed);
      CandidateSet c1 = GenerateCandidates(AliasIndex::Build(kb), "Zerg", 5, true);
      CandidateSet c2 =
          GenerateCandidates(AliasIndex::Build(kb), "Paladin", 5, true);
      TokenSequence init = AssembleOptionSequence(
          "online game by blizzard", "Zerg and Paladin in [MASK]",
          "World of Warcraft", g.vocab, 48);
      std::vector<TokenSequence> o1 = BuildOptionSequences(
          kb, c1, "[MASK] and Paladin in World of Warcraft", g.vocab, 48);
      std::vector<TokenSequence> o2 = BuildOptionSequences(
          kb, c2, "Zerg (StarCraft) and [MASK] in World of Warcraft", g.vocab, 48);
      const size_t g1 = seed % 2, g2 = 1 - seed % 2;
      auto next = [&](const GlobalScores &s, size_t i) -> Vector {
        return var.history == HistoryMode::kFlow ? s.gates[i].fused
                                                 : s.encodings[i].pooled;
      };
      auto loss = [&] {
        Vector h0 = Encode(g.encoder, g.encoder_config, init).pooled;
        GlobalScores s1 = GlobalScoreMention(g, o1, h0);
        GlobalScores s2 = GlobalScoreMention(g, o2, next(s1, g1));
        return 0.5 * (GlobalLoss(s1.probs, g1).loss +
                      GlobalLoss(s2.probs, g2).loss);
      };
      GlobalModel grads = ZerosLike(g);
      EncoderOutput e0 = Encode(g.encoder, g.encoder_config, init);
      GlobalScores s1 = GlobalScoreMention(g, o1, e0.pooled);
      Vector h1 = next(s1, g1);
      GlobalScores s2 = GlobalScoreMention(g, o2, h1);
      std::vector<double> d2 = GlobalLoss(s2.probs, g2).dlogits;
      for (double &x : d2) x *= 0.5;
      Vector dh1 = AccumulateGlobalGradients(g, s2, h1, d2, std::nullopt, &grads);
      std::vector<double> d1 = GlobalLoss(s1.probs, g1).dlogits;
      for (double &x : d1) x *= 0.5;
      Vector dh0 = AccumulateGlobalGradients(g, s1, e0.pooled, d1,
                                             SelectedGrad{g1, dh1}, &grads);
      AccumulateEncoderGradients(e0, dh0, g.encoder, &grads.encoder);
      for (const auto &e : CheckGradients(g, grads, loss)) {
        EXPECT_LE(e.relative_error, 1e-4)
            << ToString(var.gate) << "/" << ToString(var.history) << " seed "
            << seed << " " << e.name;
      }
    }
  }
}

TEST(MultiTurnTest, SingleMentionHasNoGlobalScores) {
  PipelineConfig c = SmallConfig();
  KnowledgeBase kb = GameKb();
  AnnotatedText t;
  t.text = "Zerg rush";
  t.mentions = {{{0, 4}, "Zerg", std::nullopt}};
  LocalModel local = RandomLocal(c, 1);
  GlobalModel g = GlobalModel::FromLocal(local, c);
  std::vector<MentionLocalResult> lr =
      RunLocal(t, kb, AliasIndex::Build(kb), local, c);
  MultiTurnResult r = RunMultiTurn(t, lr, g, kb, c);
  ASSERT_EQ(r.turns.size(), 1u);
  EXPECT_FALSE(r.turns[0].global_probs.has_value());
  EXPECT_EQ(r.turns[0].selected, lr[0].prediction.id);
}

TEST(MultiTurnTest, VisitsEveryMentionOnceInRankOrder) {
  KnowledgeBase kb = GameKb();
  AliasIndex index = AliasIndex::Build(kb);
  AnnotatedText t = GameText();
  for (bool no_rerank : {false, true}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      PipelineConfig c = SmallConfig();
      c.no_rerank = no_rerank;
      c.nil_override = false;
      LocalModel local = RandomLocal(c, seed);
      GlobalModel g = RandomGlobal(c, seed);
      std::vector<MentionLocalResult> lr = RunLocal(t, kb, index, local, c);
      MultiTurnResult r = RunMultiTurn(t, lr, g, kb, c);
      std::vector<size_t> visited;
      for (const TurnRecord &turn : r.turns) visited.push_back(turn.mention);
      std::vector<size_t> expected =
          no_rerank ? std::vector<size_t>{0, 1, 2} : r.rank.order;
      EXPECT_EQ(visited, expected);
      // The first entity-bearing turn is local; later turns are global.
      bool started = false;
      for (const TurnRecord &turn : r.turns) {
        EXPECT_EQ(turn.global_probs.has_value(), started);
        started = started || !IsNil(turn.selected);
      }
    }
  }
}

TEST(TrainGlobalTest, ZeroEpochsAndDeterminism) {
  KnowledgeBase kb = GameKb();
  AliasIndex index = AliasIndex::Build(kb);
  Corpus corpus = {GameText()};
  PipelineConfig c = SmallConfig();
  LocalModel local = RandomLocal(c, 2);
  c.global_train = {1e-2, 0.1, 0, 1};
  GlobalTrainResult zero = TrainGlobal(corpus, kb, index, local, c);
  EXPECT_TRUE(BitwiseEqual(zero.model, GlobalModel::FromLocal(local, c)));
  c.global_train.epochs = 15;
  GlobalTrainResult a = TrainGlobal(corpus, kb, index, local, c);
  GlobalTrainResult b = TrainGlobal(corpus, kb, index, local, c);
  EXPECT_TRUE(BitwiseEqual(a.model, b.model));
  EXPECT_EQ(a.log.front().turns, 2u);
  EXPECT_LT(a.log.back().mean_loss, a.log.front().mean_loss);
  c.gate_mode = GateMode::kGruLike;
  EXPECT_THROW(TrainGlobal(corpus, kb, index, local, c), std::logic_error);
}

}  // namespace
}  // namespace mrcel

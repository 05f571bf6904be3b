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
#include <numeric>
#include <random>

#include "mrcel/optim.h"

namespace mrcel {

using json = nlohmann::json;

AmbiguityRank RankMentions(const std::vector<std::vector<double>> &probs) {
  AmbiguityRank rank;
  rank.gaps.reserve(probs.size());
  for (const std::vector<double> &p : probs) {
    if (p.empty()) {
      rank.gaps.push_back(0.0);
      continue;
    }
    auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    rank.gaps.push_back(*hi - *lo);
  }
  rank.order.resize(probs.size());
  std::iota(rank.order.begin(), rank.order.end(), 0);
  std::stable_sort(rank.order.begin(), rank.order.end(),
                   [&](size_t a, size_t b) { return rank.gaps[a] > rank.gaps[b]; });
  return rank;
}

GateParams GateParams::Zeros(int d) {
  return {Matrix::Zero(d, 2 * d), Matrix::Zero(d, 2 * d), Matrix::Zero(d, d),
          Matrix::Zero(d, d)};
}

namespace {

Vector SigmoidVec(const Vector &x) { return x.unaryExpr(&Sigmoid); }

Vector Stack(const Vector &top, const Vector &bottom) {
  Vector out(top.size() + bottom.size());
  out << top, bottom;
  return out;
}

void CheckGateShapes(const Vector &v, const Vector &h, const GateParams &p) {
  const Eigen::Index d = v.size();
  if (h.size() != d || p.w_u.rows() != d || p.w_u.cols() != 2 * d ||
      p.w_f.rows() != d || p.w_f.cols() != 2 * d || p.w_i.rows() != d ||
      p.w_i.cols() != d || p.w_h.rows() != d || p.w_h.cols() != d) {
    throw std::invalid_argument("gate dimension mismatch");
  }
}

}  // namespace

GateTrace GateFuse(const Vector &v, const Vector &h, const GateParams &params,
                   GateMode mode) {
  CheckGateShapes(v, h, params);
  const Eigen::Index d = v.size();
  GateTrace t;
  switch (mode) {
    case GateMode::kGated:
      t.u = SigmoidVec(params.w_u * Stack(v, h));
      t.f = (params.w_f * Stack(t.u.cwiseProduct(h), v)).array().tanh();
      t.g = SigmoidVec(params.w_i * v + params.w_h * h);
      t.fused = t.g.cwiseProduct(t.f) +
                (Vector::Ones(d) - t.g).cwiseProduct(h);
      break;
    case GateMode::kConcat:
      t.u = Vector::Ones(d);
      t.g = Vector::Ones(d);
      t.f = (params.w_f * Stack(h, v)).array().tanh();
      t.fused = t.f;
      break;
    case GateMode::kCurrentOnly:
      t.u = Vector::Zero(d);
      t.g = Vector::Ones(d);
      t.f = (params.w_f.rightCols(d) * v).array().tanh();
      t.fused = t.f;
      break;
    case GateMode::kGruLike:
      throw std::logic_error("gate_mode gru_like is not implemented");
  }
  return t;
}

GateInputGrads GateBackward(const GateTrace &t, const Vector &v,
                            const Vector &h, const GateParams &params,
                            GateMode mode, const Vector &dfused,
                            GateParams *grads) {
  CheckGateShapes(v, h, params);
  const Eigen::Index d = v.size();
  GateInputGrads out{Vector::Zero(d), Vector::Zero(d)};
  switch (mode) {
    case GateMode::kGated: {
      Vector dg = dfused.cwiseProduct(t.f - h);
      Vector df = dfused.cwiseProduct(t.g);
      out.dh = dfused.cwiseProduct(Vector::Ones(d) - t.g);

      Vector dzg = dg.array() * t.g.array() * (1.0 - t.g.array());
      grads->w_i += dzg * v.transpose();
      grads->w_h += dzg * h.transpose();
      out.dv += params.w_i.transpose() * dzg;
      out.dh += params.w_h.transpose() * dzg;

      Vector dzf = df.array() * (1.0 - t.f.array().square());
      Vector uh = t.u.cwiseProduct(h);
      grads->w_f += dzf * Stack(uh, v).transpose();
      Vector da = params.w_f.transpose() * dzf;
      Vector duh = da.head(d);
      out.dv += da.tail(d);
      Vector du = duh.cwiseProduct(h);
      out.dh += duh.cwiseProduct(t.u);

      Vector dzu = du.array() * t.u.array() * (1.0 - t.u.array());
      grads->w_u += dzu * Stack(v, h).transpose();
      Vector dvh = params.w_u.transpose() * dzu;
      out.dv += dvh.head(d);
      out.dh += dvh.tail(d);
      break;
    }
    case GateMode::kConcat: {
      Vector dz = dfused.array() * (1.0 - t.f.array().square());
      grads->w_f += dz * Stack(h, v).transpose();
      Vector da = params.w_f.transpose() * dz;
      out.dh = da.head(d);
      out.dv = da.tail(d);
      break;
    }
    case GateMode::kCurrentOnly: {
      Vector dz = dfused.array() * (1.0 - t.f.array().square());
      grads->w_f.rightCols(d) += dz * v.transpose();
      out.dv = params.w_f.rightCols(d).transpose() * dz;
      break;
    }
    case GateMode::kGruLike:
      throw std::logic_error("gate_mode gru_like is not implemented");
  }
  return out;
}

namespace {

constexpr std::uint64_t kGlobalSeedSalt = 0xd1b54a32d192ed03ULL;

void FillUniform(Matrix &m, double bound, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng);
}

}  // namespace

GlobalModel GlobalModel::FromLocal(const LocalModel &local,
                                   const PipelineConfig &config) {
  GlobalModel model;
  model.encoder_config = local.encoder_config;
  model.vocab = local.vocab;
  model.encoder = local.encoder;
  model.encoder.revision = 0;
  model.gate_mode = config.gate_mode;
  model.history_mode = config.history_mode;
  const int d = model.encoder_config.d;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::mt19937_64 rng(config.seed ^ kGlobalSeedSalt);
  model.gate = GateParams::Zeros(d);
  FillUniform(model.gate.w_u, bound, rng);
  FillUniform(model.gate.w_f, bound, rng);
  FillUniform(model.gate.w_i, bound, rng);
  FillUniform(model.gate.w_h, bound, rng);
  model.head.w = Matrix(1, d);
  FillUniform(model.head.w, bound, rng);
  model.head.b = Matrix::Zero(1, 1);
  return model;
}

Checkpoint GlobalModel::ToCheckpoint() const {
  Checkpoint ck;
  ck.header = {{"format", "mrcel-global"},
               {"version", 1},
               {"encoder", encoder_config.ToJson()},
               {"vocab", vocab.tokens()},
               {"gate_mode", ToString(gate_mode)},
               {"history_mode", ToString(history_mode)}};
  AppendTensors(*this, "", &ck);
  return ck;
}

GlobalModel GlobalModel::FromCheckpoint(const Checkpoint &checkpoint) {
  const json &h = checkpoint.header;
  if (h.value("format", std::string()) != "mrcel-global") {
    throw ModelMismatchError("not a global model checkpoint");
  }
  GlobalModel model;
  try {
    model.encoder_config = EncoderConfig::FromJson(h.at("encoder"));
    model.vocab =
        Vocabulary::FromTokens(h.at("vocab").get<std::vector<std::string>>());
    model.gate_mode = ParseGateMode(h.at("gate_mode").get<std::string>());
    model.history_mode =
        ParseHistoryMode(h.at("history_mode").get<std::string>());
  } catch (const json::exception &err) {
    throw ModelMismatchError(std::string("global checkpoint header: ") +
                             err.what());
  } catch (const std::invalid_argument &err) {
    throw ModelMismatchError(std::string("global checkpoint header: ") +
                             err.what());
  }
  if (model.vocab.size() != model.encoder_config.vocab_size) {
    throw ModelMismatchError("vocabulary size disagrees with encoder config");
  }
  const int d = model.encoder_config.d;
  model.encoder = EncoderParams::Zeros(model.encoder_config);
  model.gate = GateParams::Zeros(d);
  model.head = {Matrix::Zero(1, d), Matrix::Zero(1, 1)};
  ExtractTensors(checkpoint, "", model);
  return model;
}

GlobalScores GlobalScoreMention(const GlobalModel &model,
                                const std::vector<TokenSequence> &options,
                                const Vector &history) {
  if (options.empty()) throw std::invalid_argument("no options to score");
  GlobalScores s;
  s.encodings.reserve(options.size());
  s.gates.reserve(options.size());
  for (const TokenSequence &seq : options) {
    s.encodings.push_back(Encode(model.encoder, model.encoder_config, seq));
    s.gates.push_back(GateFuse(s.encodings.back().pooled, history, model.gate,
                               model.gate_mode));
    s.logits.push_back(model.head.Score(s.gates.back().fused));
  }
  s.probs = Softmax(s.logits);
  return s;
}

Vector AccumulateGlobalGradients(const GlobalModel &model,
                                 const GlobalScores &scores,
                                 const Vector &history,
                                 const std::vector<double> &dlogits,
                                 const std::optional<SelectedGrad> &selected,
                                 GlobalModel *grads) {
  if (dlogits.size() != scores.encodings.size()) {
    throw std::invalid_argument("dlogits size mismatch");
  }
  Vector dhistory = Vector::Zero(history.size());
  for (size_t j = 0; j < dlogits.size(); ++j) {
    const GateTrace &t = scores.gates[j];
    grads->head.w.row(0) += dlogits[j] * t.fused.transpose();
    grads->head.b(0, 0) += dlogits[j];
    Vector dfused = dlogits[j] * model.head.w.row(0).transpose();
    const bool is_selected = selected && selected->index == j;
    if (is_selected && model.history_mode == HistoryMode::kFlow) {
      dfused += selected->grad;
    }
    const Vector &v = scores.encodings[j].pooled;
    GateInputGrads g = GateBackward(t, v, history, model.gate, model.gate_mode,
                                    dfused, &grads->gate);
    if (is_selected && model.history_mode == HistoryMode::kLast) {
      g.dv += selected->grad;
    }
    dhistory += g.dh;
    AccumulateEncoderGradients(scores.encodings[j], g.dv, model.encoder,
                               &grads->encoder);
  }
  return dhistory;
}

CrossEntropyResult GlobalLoss(const std::vector<double> &probs,
                              size_t gold_index) {
  return AnswerLoss(probs, gold_index);
}

namespace {

std::vector<size_t> TurnOrder(const std::vector<MentionLocalResult> &local,
                              const PipelineConfig &config,
                              AmbiguityRank *rank) {
  std::vector<std::vector<double>> probs;
  probs.reserve(local.size());
  for (const MentionLocalResult &r : local) probs.push_back(r.probs);
  *rank = RankMentions(probs);
  if (!config.no_rerank) return rank->order;
  std::vector<size_t> order(local.size());
  std::iota(order.begin(), order.end(), 0);
  return order;
}

std::string TurnQuery(const AnnotatedText &text, size_t mention,
                      const LinkHistory &history, const KnowledgeBase &kb,
                      const PipelineConfig &config) {
  if (config.no_query_update) return BuildQuery(text, mention);
  return UpdateQuery(text, mention, history, kb);
}

}  // namespace

MultiTurnResult RunMultiTurn(const AnnotatedText &text,
                             const std::vector<MentionLocalResult> &local,
                             const GlobalModel &model, const KnowledgeBase &kb,
                             const PipelineConfig &config) {
  if (local.size() != text.mentions.size()) {
    throw std::invalid_argument("local results do not match mentions");
  }
  MultiTurnResult result;
  std::vector<size_t> order = TurnOrder(local, config, &result.rank);
  const size_t max_len = static_cast<size_t>(config.global_max_len);
  LinkHistory history;
  std::optional<Vector> h;
  for (size_t m : order) {
    const MentionLocalResult &lr = local[m];
    TurnRecord rec;
    rec.mention = m;
    const std::string query = TurnQuery(text, m, history, kb, config);
    if (!h || lr.candidates.empty()) {
      rec.selected = lr.prediction.id;
      if (!h && !IsNil(rec.selected)) {
        OptionText option = GetOptionText(kb, lr.candidates, *lr.prediction.option);
        h = Encode(model.encoder, model.encoder_config,
                   AssembleOptionSequence(option.description, query,
                                          option.name, model.vocab, max_len))
                .pooled;
        result.history.push_back(*h);
      }
    } else {
      GlobalScores scores = GlobalScoreMention(
          model,
          BuildOptionSequences(kb, lr.candidates, query, model.vocab, max_len),
          *h);
      const size_t best = ArgmaxFirst(scores.probs);
      rec.global_probs = scores.probs;
      rec.selected = lr.prediction.overridden
                         ? std::string(kNilId)
                         : lr.candidates.OptionId(best);
      if (!IsNil(rec.selected)) {
        h = model.history_mode == HistoryMode::kFlow
                ? scores.gates[best].fused
                : scores.encodings[best].pooled;
        result.history.push_back(*h);
      }
    }
    history[m] = rec.selected;
    result.turns.push_back(std::move(rec));
  }
  return result;
}

namespace {

struct GlobalTurn {
  std::vector<TokenSequence> options;
  size_t gold = 0;
  bool gold_nil = false;
};

struct GlobalExample {
  TokenSequence init;
  std::vector<GlobalTurn> turns;
};

struct TurnForward {
  Vector history;
  GlobalScores scores;
  CrossEntropyResult loss;
};

}  // namespace

GlobalTrainResult TrainGlobal(
    const Corpus &corpus, const KnowledgeBase &kb, const AliasIndex &index,
    const LocalModel &local, const PipelineConfig &config,
    const std::function<void(const GlobalEpochLog &)> &on_epoch) {
  config.Validate();
  GlobalTrainResult result{GlobalModel::FromLocal(local, config), {}};
  GlobalModel &model = result.model;
  // Fail fast on unsupported gate variants.
  GateFuse(Vector::Zero(model.encoder_config.d),
           Vector::Zero(model.encoder_config.d), model.gate, model.gate_mode);
  const size_t max_len = static_cast<size_t>(config.global_max_len);

  std::vector<GlobalExample> examples;
  for (const AnnotatedText &t : corpus) {
    if (t.mentions.size() < 2) continue;
    for (const Mention &m : t.mentions) {
      if (!m.gold || (!IsNil(*m.gold) && kb.Find(*m.gold) == nullptr)) {
        throw InputFormatError("text " + t.id +
                               ": mention without a resolvable gold label");
      }
    }
    AmbiguityRank rank;
    std::vector<size_t> order =
        TurnOrder(RunLocal(t, kb, index, local, config), config, &rank);
    LinkHistory history;
    GlobalExample ex;
    bool have_history = false;
    for (size_t m : order) {
      const EntityId &gold = *t.mentions[m].gold;
      const std::string query = TurnQuery(t, m, history, kb, config);
      history[m] = gold;
      if (!have_history) {
        if (IsNil(gold)) continue;
        const Entity &e = kb.Get(gold);
        ex.init = AssembleOptionSequence(e.description, query, e.name,
                                         model.vocab, max_len);
        have_history = true;
        continue;
      }
      if (IsNil(gold) && !config.nil_verifier) continue;
      CandidateSet cands = InjectGold(
          GenerateCandidates(index, t.mentions[m].surface, config.k,
                             config.nil_verifier),
          gold, config.k);
      GlobalTurn turn;
      turn.options = BuildOptionSequences(kb, cands, query, model.vocab, max_len);
      turn.gold = *cands.IndexOf(gold);
      turn.gold_nil = IsNil(gold);
      ex.turns.push_back(std::move(turn));
    }
    if (!ex.turns.empty()) examples.push_back(std::move(ex));
  }

  const TrainConfig &tc = config.global_train;
  const size_t batch = static_cast<size_t>(tc.batch_size);
  const std::int64_t steps_per_epoch =
      static_cast<std::int64_t>((examples.size() + batch - 1) / batch);
  AdamSchedule schedule;
  schedule.lr = tc.lr;
  schedule.warmup_fraction = tc.warmup_fraction;
  schedule.total_steps = std::max<std::int64_t>(1, steps_per_epoch * tc.epochs);
  AdamState state;
  std::mt19937_64 rng(config.seed ^ kGlobalSeedSalt);
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  GlobalModel grads = ZerosLike(model);
  const int d = model.encoder_config.d;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total_loss = 0.0;
    size_t turns = 0, correct = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t end = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      SetZero(grads);
      for (size_t b = start; b < end; ++b) {
        const GlobalExample &ex = examples[order[b]];
        const double turn_scale = scale / static_cast<double>(ex.turns.size());
        EncoderOutput init = Encode(model.encoder, model.encoder_config, ex.init);
        std::vector<TurnForward> forward;
        forward.reserve(ex.turns.size());
        Vector h = init.pooled;
        double text_loss = 0.0;
        for (const GlobalTurn &turn : ex.turns) {
          TurnForward f;
          f.history = h;
          f.scores = GlobalScoreMention(model, turn.options, h);
          f.loss = GlobalLoss(f.scores.probs, turn.gold);
          text_loss += f.loss.loss;
          ++turns;
          correct += ArgmaxFirst(f.scores.probs) == turn.gold;
          if (!turn.gold_nil) {
            h = model.history_mode == HistoryMode::kFlow
                    ? f.scores.gates[turn.gold].fused
                    : f.scores.encodings[turn.gold].pooled;
          }
          forward.push_back(std::move(f));
        }
        total_loss += text_loss / static_cast<double>(ex.turns.size());

        Vector dh_out = Vector::Zero(d);
        for (size_t i = ex.turns.size(); i-- > 0;) {
          const GlobalTurn &turn = ex.turns[i];
          const TurnForward &f = forward[i];
          std::vector<double> dlogits = f.loss.dlogits;
          for (double &g : dlogits) g *= turn_scale;
          std::optional<SelectedGrad> selected;
          if (!turn.gold_nil) selected = SelectedGrad{turn.gold, dh_out};
          Vector dh_in = AccumulateGlobalGradients(model, f.scores, f.history,
                                                   dlogits, selected, &grads);
          if (turn.gold_nil) dh_in += dh_out;
          dh_out = std::move(dh_in);
        }
        AccumulateEncoderGradients(init, dh_out, model.encoder, &grads.encoder);
      }
      AdamStep(model, grads, state, schedule);
    }
    GlobalEpochLog entry;
    entry.epoch = epoch;
    entry.turns = turns;
    entry.mean_loss = examples.empty()
                          ? 0.0
                          : total_loss / static_cast<double>(examples.size());
    entry.turn_accuracy = turns ? static_cast<double>(correct) / turns : 0.0;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

}  // namespace mrcel

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


#include "mrcel/commands.h"

#include <filesystem>
#include <fstream>

#include "mrcel/synth.h"

namespace mrcel {

using json = nlohmann::json;

namespace {

std::ofstream OpenOutput(const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream OpenInput(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputFormatError("cannot open " + path);
  return in;
}

void Close(std::ofstream &out, const std::string &path) {
  out.close();
  if (!out) throw std::runtime_error("error writing " + path);
}

}  // namespace

PipelineConfig LoadConfigOrDefault(const std::string &path) {
  return path.empty() ? PipelineConfig() : PipelineConfig::Load(path);
}

void CheckEncoderCompatible(const EncoderConfig &wanted,
                            const EncoderConfig &loaded) {
  EncoderConfig a = wanted, b = loaded;
  a.vocab_size = b.vocab_size = 0;
  a.seed = b.seed = 0;
  if (!(a == b)) {
    throw ModelMismatchError("checkpoint encoder " + loaded.ToJson().dump() +
                             " does not match config " +
                             wanted.ToJson().dump());
  }
}

LocalModel LoadLocalModel(const std::string &path,
                          const PipelineConfig &config) {
  LocalModel model = LocalModel::FromCheckpoint(LoadCheckpoint(path));
  CheckEncoderCompatible(config.encoder, model.encoder_config);
  return model;
}

GlobalModel LoadGlobalModel(const std::string &path,
                            const PipelineConfig &config,
                            const LocalModel &local) {
  GlobalModel model = GlobalModel::FromCheckpoint(LoadCheckpoint(path));
  CheckEncoderCompatible(config.encoder, model.encoder_config);
  if (model.vocab.tokens() != local.vocab.tokens()) {
    throw ModelMismatchError("global and local vocabularies differ");
  }
  if (model.gate_mode != config.gate_mode ||
      model.history_mode != config.history_mode) {
    throw ModelMismatchError("global checkpoint trained with gate_mode " +
                             ToString(model.gate_mode) + ", history_mode " +
                             ToString(model.history_mode));
  }
  return model;
}

void RunBuildIndex(const BuildIndexArgs &args) {
  AliasIndex index = AliasIndex::Build(KnowledgeBase::LoadJsonl(args.kb));
  std::ofstream out = OpenOutput(args.out);
  index.WriteJsonl(out);
  Close(out, args.out);
}

void RunTrainLocal(const TrainLocalArgs &args) {
  const PipelineConfig config = LoadConfigOrDefault(args.config);
  const KnowledgeBase kb = KnowledgeBase::LoadJsonl(args.kb);
  const Corpus corpus = LoadCorpusJsonl(args.corpus);
  const AliasIndex index = AliasIndex::Build(kb);
  std::ofstream log;
  if (!args.log.empty()) log = OpenOutput(args.log);
  LocalTrainResult result =
      TrainLocal(corpus, kb, index, config, [&](const LocalEpochLog &e) {
        if (!log.is_open()) return;
        log << json{{"epoch", e.epoch},
                    {"mean_loss", e.mean_loss},
                    {"accuracy", e.accuracy},
                    {"nil_precision", e.nil_precision},
                    {"nil_recall", e.nil_recall}}
                   .dump()
            << '\n';
      });
  SaveCheckpoint(args.out, result.model.ToCheckpoint());
  if (log.is_open()) Close(log, args.log);
}

void RunTrainGlobal(const TrainGlobalArgs &args) {
  const PipelineConfig config = LoadConfigOrDefault(args.config);
  const KnowledgeBase kb = KnowledgeBase::LoadJsonl(args.kb);
  const Corpus corpus = LoadCorpusJsonl(args.corpus);
  const AliasIndex index = AliasIndex::Build(kb);
  const LocalModel local = LoadLocalModel(args.local, config);
  std::ofstream log;
  if (!args.log.empty()) log = OpenOutput(args.log);
  GlobalTrainResult result = TrainGlobal(
      corpus, kb, index, local, config, [&](const GlobalEpochLog &e) {
        if (!log.is_open()) return;
        log << json{{"epoch", e.epoch},
                    {"mean_loss", e.mean_loss},
                    {"turn_accuracy", e.turn_accuracy},
                    {"turns", e.turns}}
                   .dump()
            << '\n';
      });
  SaveCheckpoint(args.out, result.model.ToCheckpoint());
  if (log.is_open()) Close(log, args.log);
}

void RunLink(const LinkArgs &args) {
  const PipelineConfig config = LoadConfigOrDefault(args.config);
  const KnowledgeBase kb = KnowledgeBase::LoadJsonl(args.kb);
  const Corpus corpus = LoadCorpusJsonl(args.corpus);
  const AliasIndex index = AliasIndex::Build(kb);
  const LocalModel local = LoadLocalModel(args.local, config);
  std::optional<GlobalModel> global;
  if (!args.global.empty()) global = LoadGlobalModel(args.global, config, local);
  std::vector<TextDecisions> decisions = LinkCorpus(
      corpus, kb, index, local, global ? &*global : nullptr, config);
  std::ofstream out = OpenOutput(args.out);
  WriteDecisionsJsonl(out, decisions);
  Close(out, args.out);
}

EvalReport RunEval(const EvalArgs &args) {
  const Corpus corpus = LoadCorpusJsonl(args.corpus);
  std::ifstream in = OpenInput(args.decisions);
  EvalReport report = Evaluate(corpus, ReadDecisionsJsonl(in));
  if (!args.out.empty()) {
    std::ofstream out = OpenOutput(args.out);
    out << report.ToJson().dump(2) << '\n';
    Close(out, args.out);
  }
  return report;
}

void RunGenSynth(const GenSynthArgs &args) {
  SyntheticSpec spec;
  if (!args.spec.empty()) {
    std::ifstream in = OpenInput(args.spec);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception &err) {
      throw InputFormatError(args.spec + ": " + err.what());
    }
    spec = SyntheticSpec::FromJson(j);
  }
  if (args.seed) spec.seed = *args.seed;
  SyntheticWorld world = GenerateSyntheticWorld(spec);
  const std::filesystem::path dir(args.out_dir);
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path &p, auto &&body) {
    std::ofstream out = OpenOutput(p.string());
    body(out);
    Close(out, p.string());
  };
  write(dir / "kb.jsonl", [&](std::ostream &o) { world.kb.WriteJsonl(o); });
  write(dir / "train.jsonl",
        [&](std::ostream &o) { WriteCorpusJsonl(o, world.train); });
  write(dir / "test.jsonl",
        [&](std::ostream &o) { WriteCorpusJsonl(o, world.test); });
}

}  // namespace mrcel

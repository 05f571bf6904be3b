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


#ifndef MRCEL_COMMANDS_H_
#define MRCEL_COMMANDS_H_

#include <optional>
#include <string>

#include "mrcel/config.h"
#include "mrcel/pipeline.h"

namespace mrcel {

// File-level entry points behind the command-line subcommands. Malformed
// inputs raise InputFormatError; checkpoints that disagree with the
// configuration raise ModelMismatchError.

// Defaults when `path` is empty.
PipelineConfig LoadConfigOrDefault(const std::string &path);

// Throws ModelMismatchError when the architecture of `loaded` differs from
// `wanted` (vocab_size and seed are not compared).
void CheckEncoderCompatible(const EncoderConfig &wanted,
                            const EncoderConfig &loaded);

LocalModel LoadLocalModel(const std::string &path, const PipelineConfig &config);
GlobalModel LoadGlobalModel(const std::string &path,
                            const PipelineConfig &config,
                            const LocalModel &local);

struct BuildIndexArgs {
  std::string kb;
  std::string out;
};
void RunBuildIndex(const BuildIndexArgs &args);

struct TrainLocalArgs {
  std::string kb;
  std::string corpus;
  std::string config;
  std::string out;
  std::string log;  // optional JSONL training log
};
void RunTrainLocal(const TrainLocalArgs &args);

struct TrainGlobalArgs {
  std::string kb;
  std::string corpus;
  std::string config;
  std::string local;
  std::string out;
  std::string log;
};
void RunTrainGlobal(const TrainGlobalArgs &args);

struct LinkArgs {
  std::string kb;
  std::string corpus;
  std::string config;
  std::string local;
  std::string global;  // empty: local-only pipeline
  std::string out;
};
void RunLink(const LinkArgs &args);

struct EvalArgs {
  std::string corpus;
  std::string decisions;
  std::string out;  // empty: not written
};
EvalReport RunEval(const EvalArgs &args);

struct GenSynthArgs {
  std::string spec;  // empty: defaults
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};
// Writes kb.jsonl, train.jsonl and test.jsonl into out_dir.
void RunGenSynth(const GenSynthArgs &args);

}  // namespace mrcel

#endif  // MRCEL_COMMANDS_H_

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


// Command-line front end: build-index, train-local, train-global, link, eval
// and gen-synth.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mrcel/commands.h"

namespace {

constexpr int kExitInputFormat = 2;
constexpr int kExitModelMismatch = 3;

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Short-text entity linking with multi-turn disambiguation"};
  app.require_subcommand(1);

  mrcel::BuildIndexArgs build_index;
  CLI::App *cmd = app.add_subcommand("build-index", "KB file to alias index");
  cmd->add_option("--kb", build_index.kb, "KB JSONL")->required();
  cmd->add_option("--out", build_index.out, "Index JSONL")->required();
  cmd->callback([&] { mrcel::RunBuildIndex(build_index); });

  mrcel::TrainLocalArgs train_local;
  cmd = app.add_subcommand("train-local", "Train the local model");
  cmd->add_option("--kb", train_local.kb)->required();
  cmd->add_option("--corpus", train_local.corpus)->required();
  cmd->add_option("--config", train_local.config, "Pipeline config JSON");
  cmd->add_option("--out", train_local.out, "Checkpoint")->required();
  cmd->add_option("--log", train_local.log, "Per-epoch JSONL log");
  cmd->callback([&] { mrcel::RunTrainLocal(train_local); });

  mrcel::TrainGlobalArgs train_global;
  cmd = app.add_subcommand("train-global", "Train the global model");
  cmd->add_option("--kb", train_global.kb)->required();
  cmd->add_option("--corpus", train_global.corpus)->required();
  cmd->add_option("--config", train_global.config);
  cmd->add_option("--local", train_global.local, "Local checkpoint")
      ->required();
  cmd->add_option("--out", train_global.out, "Checkpoint")->required();
  cmd->add_option("--log", train_global.log);
  cmd->callback([&] { mrcel::RunTrainGlobal(train_global); });

  mrcel::LinkArgs link;
  cmd = app.add_subcommand("link", "Link a corpus");
  cmd->add_option("--kb", link.kb)->required();
  cmd->add_option("--corpus", link.corpus)->required();
  cmd->add_option("--config", link.config);
  cmd->add_option("--local", link.local)->required();
  cmd->add_option("--global", link.global, "Omit for the local-only pipeline");
  cmd->add_option("--out", link.out, "Decisions JSONL")->required();
  cmd->callback([&] { mrcel::RunLink(link); });

  mrcel::EvalArgs eval;
  cmd = app.add_subcommand("eval", "Score decisions against gold labels");
  cmd->add_option("--corpus", eval.corpus, "Gold corpus")->required();
  cmd->add_option("--decisions", eval.decisions)->required();
  cmd->add_option("--out", eval.out, "Report JSON");
  cmd->callback([&] {
    mrcel::EvalReport report = mrcel::RunEval(eval);
    std::cout << report.ToJson().dump(2) << '\n';
  });

  mrcel::GenSynthArgs gen;
  std::optional<std::uint64_t> seed;
  cmd = app.add_subcommand("gen-synth", "Generate a synthetic world");
  cmd->add_option("--spec", gen.spec, "Spec JSON");
  cmd->add_option("--seed", seed);
  cmd->add_option("--out-dir", gen.out_dir)->required();
  cmd->callback([&] {
    gen.seed = seed;
    mrcel::RunGenSynth(gen);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &err) {
    return app.exit(err);
  } catch (const mrcel::InputFormatError &err) {
    std::cerr << "input error: " << err.what() << '\n';
    return kExitInputFormat;
  } catch (const mrcel::ModelMismatchError &err) {
    std::cerr << "model mismatch: " << err.what() << '\n';
    return kExitModelMismatch;
  } catch (const std::exception &err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}

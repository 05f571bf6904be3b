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


#ifndef MRCEL_CONFIG_H_
#define MRCEL_CONFIG_H_

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "mrcel/encoder.h"

namespace mrcel {

// kCurrentOnly ignores the history entirely (tanh(W_f[0; v])); a diagnostic
// variant, not one of the trained configurations.
enum class GateMode { kGated, kConcat, kGruLike, kCurrentOnly };
enum class HistoryMode { kFlow, kLast };

GateMode ParseGateMode(const std::string &s);
HistoryMode ParseHistoryMode(const std::string &s);
std::string ToString(GateMode mode);
std::string ToString(HistoryMode mode);

struct TrainConfig {
  double lr = 1e-3;
  double warmup_fraction = 0.1;
  int epochs = 3;
  // Mentions (local) or texts (global) per optimizer step.
  int batch_size = 1;
};

// Every tunable of the linking pipeline. Defaults follow the published
// BERT-scale setup where one exists; the encoder shape defaults are
// desk-scale.
struct PipelineConfig {
  int k = 5;
  double alpha1 = 0.75;
  double alpha2 = 0.25;
  double beta = 0.5;
  double nil_threshold = 0.5;
  std::uint64_t seed = 1;

  // NIL option in candidate sets plus the query-only linkability classifier.
  bool nil_verifier = true;
  // Apply the classifier's verdict at inference (requires nil_verifier).
  bool nil_override = true;

  EncoderConfig encoder;  // vocab_size is filled from the vocabulary
  int local_max_len = 256;
  int global_max_len = 512;

  TrainConfig local_train{5e-6, 0.1, 3, 1};
  TrainConfig global_train{1e-5, 0.1, 3, 1};

  bool no_rerank = false;
  bool no_query_update = false;
  GateMode gate_mode = GateMode::kGated;
  HistoryMode history_mode = HistoryMode::kFlow;

  // Throws std::invalid_argument.
  void Validate() const;

  nlohmann::json ToJson() const;
  // Missing keys keep their defaults. Throws InputFormatError on bad types
  // or values.
  static PipelineConfig FromJson(const nlohmann::json &j);
  static PipelineConfig Load(const std::string &path);
};

}  // namespace mrcel

#endif  // MRCEL_CONFIG_H_

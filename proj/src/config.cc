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


#include "mrcel/config.h"

#include <fstream>

#include "mrcel/common.h"

namespace mrcel {

using json = nlohmann::json;

GateMode ParseGateMode(const std::string &s) {
  if (s == "gated") return GateMode::kGated;
  if (s == "concat") return GateMode::kConcat;
  if (s == "gru_like") return GateMode::kGruLike;
  if (s == "current_only") return GateMode::kCurrentOnly;
  throw std::invalid_argument("unknown gate_mode: " + s);
}

HistoryMode ParseHistoryMode(const std::string &s) {
  if (s == "flow") return HistoryMode::kFlow;
  if (s == "last") return HistoryMode::kLast;
  throw std::invalid_argument("unknown history_mode: " + s);
}

std::string ToString(GateMode mode) {
  switch (mode) {
    case GateMode::kGated:
      return "gated";
    case GateMode::kConcat:
      return "concat";
    case GateMode::kGruLike:
      return "gru_like";
    case GateMode::kCurrentOnly:
      return "current_only";
  }
  return "gated";
}

std::string ToString(HistoryMode mode) {
  return mode == HistoryMode::kFlow ? "flow" : "last";
}

void PipelineConfig::Validate() const {
  if (k < 1) throw std::invalid_argument("K must be at least 1");
  if (alpha1 < 0 || alpha2 < 0 || alpha1 + alpha2 <= 0) {
    throw std::invalid_argument("alpha weights must be non-negative, sum > 0");
  }
  if (beta < 0 || beta > 1) throw std::invalid_argument("beta outside [0,1]");
  if (nil_threshold < 0 || nil_threshold > 1) {
    throw std::invalid_argument("nil_threshold outside [0,1]");
  }
  if (local_max_len < 8 || global_max_len < 8) {
    throw std::invalid_argument("max lengths must be at least 8");
  }
  if (local_max_len > encoder.max_len || global_max_len > encoder.max_len) {
    throw std::invalid_argument("sequence limits exceed encoder max_len");
  }
  for (const TrainConfig *t : {&local_train, &global_train}) {
    if (t->lr < 0 || t->epochs < 0 || t->batch_size < 1 ||
        t->warmup_fraction < 0 || t->warmup_fraction > 1) {
      throw std::invalid_argument("invalid training hyperparameters");
    }
  }
}

namespace {

json TrainToJson(const TrainConfig &t) {
  return {{"lr", t.lr},
          {"warmup_fraction", t.warmup_fraction},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size}};
}

TrainConfig TrainFromJson(const json &j, TrainConfig t) {
  t.lr = j.value("lr", t.lr);
  t.warmup_fraction = j.value("warmup_fraction", t.warmup_fraction);
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  return t;
}

}  // namespace

json PipelineConfig::ToJson() const {
  json enc = encoder.ToJson();
  enc.erase("vocab_size");
  return {{"K", k},
          {"alpha1", alpha1},
          {"alpha2", alpha2},
          {"beta", beta},
          {"nil_threshold", nil_threshold},
          {"seed", seed},
          {"nil_verifier", nil_verifier},
          {"nil_override", nil_override},
          {"encoder", enc},
          {"local_max_len", local_max_len},
          {"global_max_len", global_max_len},
          {"local_train", TrainToJson(local_train)},
          {"global_train", TrainToJson(global_train)},
          {"no_rerank", no_rerank},
          {"no_query_update", no_query_update},
          {"gate_mode", ToString(gate_mode)},
          {"history_mode", ToString(history_mode)}};
}

PipelineConfig PipelineConfig::FromJson(const json &j) {
  PipelineConfig c;
  try {
    if (!j.is_object()) throw InputFormatError("config must be a JSON object");
    c.k = j.value("K", c.k);
    c.alpha1 = j.value("alpha1", c.alpha1);
    c.alpha2 = j.value("alpha2", c.alpha2);
    c.beta = j.value("beta", c.beta);
    c.nil_threshold = j.value("nil_threshold", c.nil_threshold);
    c.seed = j.value("seed", c.seed);
    c.nil_verifier = j.value("nil_verifier", c.nil_verifier);
    c.nil_override = j.value("nil_override", c.nil_override);
    if (j.contains("encoder")) {
      json enc = c.encoder.ToJson();
      enc.update(j.at("encoder"));
      c.encoder = EncoderConfig::FromJson(enc);
    }
    c.local_max_len = j.value("local_max_len", c.local_max_len);
    c.global_max_len = j.value("global_max_len", c.global_max_len);
    if (j.contains("local_train")) {
      c.local_train = TrainFromJson(j.at("local_train"), c.local_train);
    }
    if (j.contains("global_train")) {
      c.global_train = TrainFromJson(j.at("global_train"), c.global_train);
    }
    c.no_rerank = j.value("no_rerank", c.no_rerank);
    c.no_query_update = j.value("no_query_update", c.no_query_update);
    if (j.contains("gate_mode")) {
      c.gate_mode = ParseGateMode(j.at("gate_mode").get<std::string>());
    }
    if (j.contains("history_mode")) {
      c.history_mode = ParseHistoryMode(j.at("history_mode").get<std::string>());
    }
    c.Validate();
  } catch (const json::exception &err) {
    throw InputFormatError(std::string("config: ") + err.what());
  } catch (const std::invalid_argument &err) {
    throw InputFormatError(std::string("config: ") + err.what());
  }
  return c;
}

PipelineConfig PipelineConfig::Load(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw InputFormatError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception &err) {
    throw InputFormatError(std::string("config: ") + err.what());
  }
  return FromJson(j);
}

}  // namespace mrcel

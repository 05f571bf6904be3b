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


#ifndef MRCEL_ENCODER_H_
#define MRCEL_ENCODER_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrcel/common.h"
#include "mrcel/corpus.h"

namespace mrcel {

struct EncoderConfig {
  int d = 64;
  int n_layers = 1;
  int n_heads = 2;
  // Feed-forward width; 0 means 4 * d.
  int ffn_dim = 0;
  int vocab_size = 0;
  // Rows of the position table, the hard upper bound on sequence length.
  int max_len = 512;
  std::uint64_t seed = 0;

  int FfnDim() const { return ffn_dim > 0 ? ffn_dim : 4 * d; }
  int HeadDim() const { return d / n_heads; }

  // Throws std::invalid_argument.
  void Validate() const;

  nlohmann::json ToJson() const;
  static EncoderConfig FromJson(const nlohmann::json &j);

  bool operator==(const EncoderConfig &other) const = default;
};

// Biases and layer-norm parameters are stored as 1 x n matrices so that every
// parameter is a Matrix.
struct LayerParams {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln1_gain, ln1_bias;
  Matrix ff1, ff1_bias, ff2, ff2_bias;
  Matrix ln2_gain, ln2_bias;

  template <typename Self, typename F>
  static void Visit(Self &self, const std::string &prefix, F &&f) {
    f(prefix + "wq", self.wq);
    f(prefix + "bq", self.bq);
    f(prefix + "wk", self.wk);
    f(prefix + "bk", self.bk);
    f(prefix + "wv", self.wv);
    f(prefix + "bv", self.bv);
    f(prefix + "wo", self.wo);
    f(prefix + "bo", self.bo);
    f(prefix + "ln1_gain", self.ln1_gain);
    f(prefix + "ln1_bias", self.ln1_bias);
    f(prefix + "ff1", self.ff1);
    f(prefix + "ff1_bias", self.ff1_bias);
    f(prefix + "ff2", self.ff2);
    f(prefix + "ff2_bias", self.ff2_bias);
    f(prefix + "ln2_gain", self.ln2_gain);
    f(prefix + "ln2_bias", self.ln2_bias);
  }
};

struct EncoderParams {
  Matrix token_embedding;     // vocab_size x d
  Matrix position_embedding;  // max_len x d
  Matrix emb_ln_gain, emb_ln_bias;
  std::vector<LayerParams> layers;

  // Bumped on every optimizer update; tapes recorded against an older
  // revision are rejected by backprop.
  std::uint64_t revision = 0;

  void BumpRevision() { ++revision; }

  // Visits (name, tensor) pairs in declaration order.
  template <typename F>
  void ForEachTensor(F &&f) {
    Visit(*this, f);
  }
  template <typename F>
  void ForEachTensor(F &&f) const {
    Visit(*this, f);
  }

  // Correctly shaped, all-zero parameters (layer-norm gains included).
  static EncoderParams Zeros(const EncoderConfig &config);

 private:
  template <typename Self, typename F>
  static void Visit(Self &self, F &f) {
    f(std::string("token_embedding"), self.token_embedding);
    f(std::string("position_embedding"), self.position_embedding);
    f(std::string("emb_ln_gain"), self.emb_ln_gain);
    f(std::string("emb_ln_bias"), self.emb_ln_bias);
    for (size_t l = 0; l < self.layers.size(); ++l) {
      LayerParams::Visit(self.layers[l], "layer" + std::to_string(l) + ".", f);
    }
  }
};

// Seeded uniform(-1/sqrt(d), 1/sqrt(d)) weights and embeddings, zero biases,
// unit layer-norm gains.
EncoderParams InitParams(const EncoderConfig &config);

struct EncoderTape;

struct EncoderOutput {
  Vector pooled;
  std::shared_ptr<const EncoderTape> tape;

  // Attention weights of one head. Rows are the query positions evaluated
  // (only [CLS] in the last layer); columns are the non-[PAD] keys.
  const Matrix &Attention(int layer, int head) const;
};

// Post-layer-norm transformer forward pass; pooled is the final hidden state
// at position 0. [PAD] positions are dropped before any arithmetic, so their
// content never affects the result.
EncoderOutput Encode(const EncoderParams &params, const EncoderConfig &config,
                     const TokenSequence &sequence);
EncoderOutput Encode(const EncoderParams &params, const EncoderConfig &config,
                     const std::vector<int> &ids);

// Adds d<pooled, pooled_grad>/d(params) into *grads. Throws std::logic_error
// when the tape was not recorded against `params` at its current revision.
void AccumulateEncoderGradients(const EncoderOutput &output,
                                const Vector &pooled_grad,
                                const EncoderParams &params,
                                EncoderParams *grads);

EncoderParams Backprop(const EncoderOutput &output, const Vector &pooled_grad,
                       const EncoderParams &params,
                       const EncoderConfig &config);

}  // namespace mrcel

#endif  // MRCEL_ENCODER_H_

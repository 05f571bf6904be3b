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


#include "mrcel/encoder.h"

#include <cmath>
#include <random>

namespace mrcel {

using json = nlohmann::json;

void EncoderConfig::Validate() const {
  if (d <= 0 || n_layers <= 0 || n_heads <= 0 || vocab_size <= 0 ||
      max_len <= 0 || ffn_dim < 0) {
    throw std::invalid_argument("encoder config values must be positive");
  }
  if (d % n_heads != 0) {
    throw std::invalid_argument("d must be divisible by n_heads");
  }
}

json EncoderConfig::ToJson() const {
  return {{"d", d},           {"n_layers", n_layers},
          {"n_heads", n_heads}, {"ffn_dim", ffn_dim},
          {"vocab_size", vocab_size}, {"max_len", max_len},
          {"seed", seed}};
}

EncoderConfig EncoderConfig::FromJson(const json &j) {
  EncoderConfig c;
  c.d = j.value("d", c.d);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_len = j.value("max_len", c.max_len);
  c.seed = j.value("seed", c.seed);
  return c;
}

EncoderParams EncoderParams::Zeros(const EncoderConfig &config) {
  const int d = config.d;
  const int f = config.FfnDim();
  EncoderParams p;
  p.token_embedding = Matrix::Zero(config.vocab_size, d);
  p.position_embedding = Matrix::Zero(config.max_len, d);
  p.emb_ln_gain = Matrix::Zero(1, d);
  p.emb_ln_bias = Matrix::Zero(1, d);
  p.layers.resize(config.n_layers);
  for (LayerParams &l : p.layers) {
    l.wq = l.wk = l.wv = l.wo = Matrix::Zero(d, d);
    l.bq = l.bk = l.bv = l.bo = Matrix::Zero(1, d);
    l.ln1_gain = l.ln1_bias = l.ln2_gain = l.ln2_bias = Matrix::Zero(1, d);
    l.ff1 = Matrix::Zero(d, f);
    l.ff1_bias = Matrix::Zero(1, f);
    l.ff2 = Matrix::Zero(f, d);
    l.ff2_bias = Matrix::Zero(1, d);
  }
  return p;
}

EncoderParams InitParams(const EncoderConfig &config) {
  config.Validate();
  EncoderParams p = EncoderParams::Zeros(config);
  std::mt19937_64 rng(config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  auto fill = [&](Matrix &m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng);
  };
  fill(p.token_embedding);
  fill(p.position_embedding);
  p.emb_ln_gain.setOnes();
  for (LayerParams &l : p.layers) {
    fill(l.wq);
    fill(l.wk);
    fill(l.wv);
    fill(l.wo);
    fill(l.ff1);
    fill(l.ff2);
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
  }
  return p;
}

namespace {

constexpr double kLayerNormEps = 1e-12;
const double kGeluScale = std::sqrt(2.0 / M_PI);
constexpr double kGeluCubic = 0.044715;

struct LayerNormCache {
  Matrix xhat;
  Vector inv_std;
};

Matrix LayerNormForward(const Matrix &x, const Matrix &gain, const Matrix &bias,
                        LayerNormCache *cache) {
  const Eigen::Index rows = x.rows();
  const double n = static_cast<double>(x.cols());
  cache->xhat.resize(rows, x.cols());
  cache->inv_std.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double mean = x.row(r).sum() / n;
    auto centered = x.row(r).array() - mean;
    double var = centered.square().sum() / n;
    double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache->inv_std(r) = inv;
    cache->xhat.row(r) = centered * inv;
  }
  Matrix y = cache->xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix LayerNormBackward(const Matrix &dy, const Matrix &gain,
                         const LayerNormCache &cache, Matrix *dgain,
                         Matrix *dbias) {
  *dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  *dbias += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  const double n = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    double mean_d = dxhat.row(r).sum() / n;
    double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / n;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_d -
                 cache.xhat.row(r).array() * mean_dx)
                    .matrix();
  }
  return dx;
}

double Gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

double GeluGrad(double x) {
  double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  double t = std::tanh(inner);
  double dinner = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

void SoftmaxRowsInPlace(Matrix *s) {
  for (Eigen::Index r = 0; r < s->rows(); ++r) {
    double mx = s->row(r).maxCoeff();
    s->row(r) = (s->row(r).array() - mx).exp().matrix();
    s->row(r) /= s->row(r).sum();
  }
}

}  // namespace

struct LayerTape {
  Eigen::Index q_rows = 0;
  Matrix x;  // input, all rows
  Matrix q, k, v;
  std::vector<Matrix> attention;
  Matrix context;
  LayerNormCache ln1;
  Matrix y;
  Matrix hidden_pre, hidden_act;
  LayerNormCache ln2;
};

struct EncoderTape {
  const EncoderParams *params = nullptr;
  std::uint64_t revision = 0;
  EncoderConfig config;
  std::vector<int> tokens;
  std::vector<int> positions;
  LayerNormCache emb_ln;
  std::vector<LayerTape> layers;
};

const Matrix &EncoderOutput::Attention(int layer, int head) const {
  if (!tape) throw std::logic_error("encoder output has no tape");
  return tape->layers.at(layer).attention.at(head);
}

EncoderOutput Encode(const EncoderParams &params, const EncoderConfig &config,
                     const TokenSequence &sequence) {
  return Encode(params, config, sequence.ids);
}

EncoderOutput Encode(const EncoderParams &params, const EncoderConfig &config,
                     const std::vector<int> &ids) {
  if (ids.empty()) throw std::invalid_argument("empty sequence");
  if (static_cast<int>(ids.size()) > config.max_len) {
    throw std::invalid_argument("sequence longer than max_len");
  }
  if (ids[0] == Vocabulary::kPad) {
    throw std::invalid_argument("position 0 must not be [PAD]");
  }
  auto tape = std::make_shared<EncoderTape>();
  tape->params = &params;
  tape->revision = params.revision;
  tape->config = config;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= config.vocab_size) {
      throw std::invalid_argument("token id out of range");
    }
    if (ids[i] == Vocabulary::kPad) continue;
    tape->tokens.push_back(ids[i]);
    tape->positions.push_back(static_cast<int>(i));
  }
  const Eigen::Index len = static_cast<Eigen::Index>(tape->tokens.size());
  const int d = config.d;
  const int dh = config.HeadDim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x0(len, d);
  for (Eigen::Index i = 0; i < len; ++i) {
    x0.row(i) = params.token_embedding.row(tape->tokens[i]) +
                params.position_embedding.row(tape->positions[i]);
  }
  Matrix x = LayerNormForward(x0, params.emb_ln_gain, params.emb_ln_bias,
                              &tape->emb_ln);

  tape->layers.resize(params.layers.size());
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams &p = params.layers[l];
    LayerTape &t = tape->layers[l];
    const bool last = l + 1 == params.layers.size();
    t.q_rows = last ? 1 : len;
    t.x = std::move(x);
    Matrix xq = t.x.topRows(t.q_rows);

    t.q = xq * p.wq;
    t.q.rowwise() += p.bq.row(0);
    t.k = t.x * p.wk;
    t.k.rowwise() += p.bk.row(0);
    t.v = t.x * p.wv;
    t.v.rowwise() += p.bv.row(0);

    t.context.resize(t.q_rows, d);
    t.attention.resize(config.n_heads);
    for (int h = 0; h < config.n_heads; ++h) {
      Matrix s = (t.q.middleCols(h * dh, dh) *
                  t.k.middleCols(h * dh, dh).transpose()) *
                 scale;
      SoftmaxRowsInPlace(&s);
      t.context.middleCols(h * dh, dh) = s * t.v.middleCols(h * dh, dh);
      t.attention[h] = std::move(s);
    }
    Matrix r1 = t.context * p.wo;
    r1.rowwise() += p.bo.row(0);
    r1 += xq;
    t.y = LayerNormForward(r1, p.ln1_gain, p.ln1_bias, &t.ln1);

    t.hidden_pre = t.y * p.ff1;
    t.hidden_pre.rowwise() += p.ff1_bias.row(0);
    t.hidden_act = t.hidden_pre.unaryExpr(&Gelu);
    Matrix r2 = t.hidden_act * p.ff2;
    r2.rowwise() += p.ff2_bias.row(0);
    r2 += t.y;
    x = LayerNormForward(r2, p.ln2_gain, p.ln2_bias, &t.ln2);
  }

  EncoderOutput out;
  out.pooled = x.row(0).transpose();
  out.tape = std::move(tape);
  return out;
}

void AccumulateEncoderGradients(const EncoderOutput &output,
                                const Vector &pooled_grad,
                                const EncoderParams &params,
                                EncoderParams *grads) {
  const EncoderTape *tape = output.tape.get();
  if (tape == nullptr) throw std::logic_error("encoder output has no tape");
  if (tape->params != &params || tape->revision != params.revision) {
    throw std::logic_error("stale or mismatched encoder tape");
  }
  const EncoderConfig &config = tape->config;
  const int d = config.d;
  const int dh = config.HeadDim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (pooled_grad.size() != d) {
    throw std::invalid_argument("pooled gradient has wrong size");
  }
  if (grads->layers.size() != params.layers.size() ||
      grads->token_embedding.rows() != params.token_embedding.rows() ||
      grads->token_embedding.cols() != d) {
    throw std::invalid_argument("gradient buffer shape mismatch");
  }

  // Gradient w.r.t. the last layer's output rows.
  Matrix dz = pooled_grad.transpose();
  for (size_t li = params.layers.size(); li-- > 0;) {
    const LayerParams &p = params.layers[li];
    LayerParams &g = grads->layers[li];
    const LayerTape &t = tape->layers[li];

    Matrix dr2 = LayerNormBackward(dz, p.ln2_gain, t.ln2, &g.ln2_gain,
                                   &g.ln2_bias);
    g.ff2 += t.hidden_act.transpose() * dr2;
    g.ff2_bias += dr2.colwise().sum();
    Matrix dhidden = dr2 * p.ff2.transpose();
    dhidden.array() *= t.hidden_pre.unaryExpr(&GeluGrad).array();
    g.ff1 += t.y.transpose() * dhidden;
    g.ff1_bias += dhidden.colwise().sum();
    Matrix dy = dr2 + dhidden * p.ff1.transpose();

    Matrix dr1 = LayerNormBackward(dy, p.ln1_gain, t.ln1, &g.ln1_gain,
                                   &g.ln1_bias);
    g.wo += t.context.transpose() * dr1;
    g.bo += dr1.colwise().sum();
    Matrix dcontext = dr1 * p.wo.transpose();

    Matrix dq(t.q_rows, d), dk(t.x.rows(), d), dv(t.x.rows(), d);
    for (int h = 0; h < config.n_heads; ++h) {
      const Matrix &a = t.attention[h];
      auto dch = dcontext.middleCols(h * dh, dh);
      Matrix da = dch * t.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = a.transpose() * dch;
      Vector row_dot = (da.array() * a.array()).rowwise().sum();
      Matrix ds = a.array() * (da.colwise() - row_dot).array();
      dq.middleCols(h * dh, dh) = ds * t.k.middleCols(h * dh, dh) * scale;
      dk.middleCols(h * dh, dh) =
          ds.transpose() * t.q.middleCols(h * dh, dh) * scale;
    }
    auto xq = t.x.topRows(t.q_rows);
    g.wq += xq.transpose() * dq;
    g.bq += dq.colwise().sum();
    g.wk += t.x.transpose() * dk;
    g.bk += dk.colwise().sum();
    g.wv += t.x.transpose() * dv;
    g.bv += dv.colwise().sum();

    Matrix dx = dk * p.wk.transpose() + dv * p.wv.transpose();
    dx.topRows(t.q_rows) += dr1 + dq * p.wq.transpose();
    dz = std::move(dx);
  }

  Matrix dx0 = LayerNormBackward(dz, params.emb_ln_gain, tape->emb_ln,
                                 &grads->emb_ln_gain, &grads->emb_ln_bias);
  for (Eigen::Index i = 0; i < dx0.rows(); ++i) {
    grads->token_embedding.row(tape->tokens[i]) += dx0.row(i);
    grads->position_embedding.row(tape->positions[i]) += dx0.row(i);
  }
}

EncoderParams Backprop(const EncoderOutput &output, const Vector &pooled_grad,
                       const EncoderParams &params,
                       const EncoderConfig &config) {
  EncoderParams grads = EncoderParams::Zeros(config);
  AccumulateEncoderGradients(output, pooled_grad, params, &grads);
  return grads;
}

}  // namespace mrcel

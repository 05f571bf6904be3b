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


#ifndef MRCEL_OPTIM_H_
#define MRCEL_OPTIM_H_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrcel/common.h"

namespace mrcel {

// Generic helpers over parameter structs exposing ForEachTensor(f) with
// f(const std::string& name, Matrix& tensor).

template <typename P>
void SetZero(P &params) {
  params.ForEachTensor([](const std::string &, Matrix &m) { m.setZero(); });
}

template <typename P>
P ZerosLike(const P &params) {
  P out = params;
  SetZero(out);
  return out;
}

template <typename P>
size_t ParameterCount(const P &params) {
  size_t n = 0;
  params.ForEachTensor(
      [&](const std::string &, const Matrix &m) { n += m.size(); });
  return n;
}

template <typename P>
std::vector<const Matrix *> TensorList(const P &params) {
  std::vector<const Matrix *> out;
  params.ForEachTensor(
      [&](const std::string &, const Matrix &m) { out.push_back(&m); });
  return out;
}

template <typename P>
bool AllFinite(const P &params) {
  bool ok = true;
  params.ForEachTensor([&](const std::string &, const Matrix &m) {
    ok = ok && m.allFinite();
  });
  return ok;
}

// dst += scale * src, tensor by tensor.
template <typename P>
void AddScaled(P &dst, const P &src, double scale) {
  std::vector<const Matrix *> s = TensorList(src);
  size_t i = 0;
  dst.ForEachTensor([&](const std::string &, Matrix &m) {
    m += scale * *s.at(i++);
  });
}

template <typename P>
bool BitwiseEqual(const P &a, const P &b) {
  std::vector<const Matrix *> other = TensorList(b);
  size_t i = 0;
  bool equal = true;
  a.ForEachTensor([&](const std::string &, const Matrix &m) {
    const Matrix &o = *other.at(i++);
    equal = equal && m.rows() == o.rows() && m.cols() == o.cols() &&
            std::equal(m.data(), m.data() + m.size(), o.data());
  });
  return equal && i == other.size();
}

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;
};

// Learning rate ramped linearly over the first warmup_fraction of
// total_steps, constant afterwards. step is 0-based.
inline double WarmupLearningRate(double lr, double warmup_fraction,
                                 std::int64_t total_steps, std::int64_t step) {
  double warmup = warmup_fraction * static_cast<double>(total_steps);
  if (warmup <= 0.0) return lr;
  double ramp = static_cast<double>(step + 1) / warmup;
  return ramp < 1.0 ? lr * ramp : lr;
}

struct AdamSchedule {
  double lr = 1e-3;
  double warmup_fraction = 0.1;
  std::int64_t total_steps = 1;
  AdamHyper hyper;
};

// One Adam update at index state.step with the warmed-up learning rate.
// Throws std::domain_error on non-finite gradients; params are untouched in
// that case.
template <typename P>
void AdamStep(P &params, const P &grads, AdamState &state,
              const AdamSchedule &schedule) {
  std::vector<const Matrix *> g = TensorList(grads);
  for (const Matrix *m : g) {
    if (!m->allFinite()) throw std::domain_error("non-finite gradient");
  }
  if (state.m.empty()) {
    for (const Matrix *m : g) {
      state.m.push_back(Matrix::Zero(m->rows(), m->cols()));
      state.v.push_back(Matrix::Zero(m->rows(), m->cols()));
    }
  }
  if (state.m.size() != g.size()) {
    throw std::invalid_argument("optimizer state does not match parameters");
  }
  const AdamHyper &h = schedule.hyper;
  const double lr = WarmupLearningRate(schedule.lr, schedule.warmup_fraction,
                                       schedule.total_steps, state.step);
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  size_t i = 0;
  params.ForEachTensor([&](const std::string &, Matrix &p) {
    const Matrix &grad = *g[i];
    if (grad.rows() != p.rows() || grad.cols() != p.cols()) {
      throw std::invalid_argument("gradient shape mismatch");
    }
    Matrix &m = state.m[i];
    Matrix &v = state.v[i];
    m = h.beta1 * m + (1.0 - h.beta1) * grad;
    v = h.beta2 * v + (1.0 - h.beta2) * grad.cwiseProduct(grad);
    p.array() -= lr * (m.array() / c1) /
                 ((v.array() / c2).sqrt() + h.epsilon);
    ++i;
  });
  if constexpr (requires { params.BumpRevision(); }) params.BumpRevision();
}

}  // namespace mrcel

#endif  // MRCEL_OPTIM_H_

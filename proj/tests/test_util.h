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


// Shared helpers for the unit tests.

#ifndef MRCEL_TESTS_TEST_UTIL_H_
#define MRCEL_TESTS_TEST_UTIL_H_

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mrcel/common.h"
#include "mrcel/optim.h"

namespace mrcel {
namespace testing {

struct GroupError {
  std::string name;
  double relative_error = 0.0;
};

// Central finite differences of `loss` against `analytic`, one parameter
// group (tensor) at a time. Relative error is |a - n| / max(|a| + |n|, 1e-6)
// with Frobenius norms. The floor sits above the roundoff of a central
// difference at the default step, so groups whose gradient vanishes
// identically (the key bias) compare against noise as an absolute error.
template <typename P>
std::vector<GroupError> CheckGradients(P &params, const P &analytic,
                                       const std::function<double()> &loss,
                                       double step = 1e-4) {
  std::vector<const Matrix *> a = TensorList(analytic);
  std::vector<GroupError> out;
  size_t i = 0;
  params.ForEachTensor([&](const std::string &name, Matrix &m) {
    const Matrix &ga = *a.at(i++);
    Matrix numeric = Matrix::Zero(m.rows(), m.cols());
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      const double saved = m.data()[k];
      m.data()[k] = saved + step;
      const double up = loss();
      m.data()[k] = saved - step;
      const double down = loss();
      m.data()[k] = saved;
      numeric.data()[k] = (up - down) / (2.0 * step);
    }
    const double denom = std::max(ga.norm() + numeric.norm(), 1e-6);
    out.push_back({name, (ga - numeric).norm() / denom});
  });
  return out;
}

inline Vector RandomVector(int n, std::mt19937_64 &rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline Matrix RandomMatrix(int r, int c, std::mt19937_64 &rng,
                           double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace testing
}  // namespace mrcel

#endif  // MRCEL_TESTS_TEST_UTIL_H_

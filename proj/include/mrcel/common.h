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

#ifndef MRCEL_COMMON_H_
#define MRCEL_COMMON_H_

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace mrcel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Entity identifiers are opaque strings. The literal "NIL" is reserved for
// the unlinkable outcome and may not be used as a KB id.
using EntityId = std::string;
inline constexpr std::string_view kNilId = "NIL";

inline bool IsNil(std::string_view id) { return id == kNilId; }

// Malformed input files (KB, corpus, decisions, config). CLI exit code 2.
class InputFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint does not match the requested configuration or vocabulary.
// CLI exit code 3.
class ModelMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mrcel

#endif  // MRCEL_COMMON_H_

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


#ifndef MRCEL_CHECKPOINT_H_
#define MRCEL_CHECKPOINT_H_

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrcel/common.h"

namespace mrcel {

// Binary layout, all integers little-endian:
//   "MRCELCK1"
//   u64 header length, header JSON (UTF-8)
//   u64 tensor count
//   per tensor: u32 name length, name, u32 rank (always 2), u64 rows,
//               u64 cols, rows * cols float64 values in row-major order
struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;
};

void WriteCheckpoint(std::ostream &out, const Checkpoint &checkpoint);
void SaveCheckpoint(const std::string &path, const Checkpoint &checkpoint);

// Throws ModelMismatchError on a malformed or truncated stream.
Checkpoint ReadCheckpoint(std::istream &in);
Checkpoint LoadCheckpoint(const std::string &path);

template <typename P>
void AppendTensors(const P &params, const std::string &prefix,
                   Checkpoint *checkpoint) {
  params.ForEachTensor([&](const std::string &name, const Matrix &m) {
    checkpoint->tensors.push_back({prefix + name, m});
  });
}

// Copies tensors named prefix + name into params. Every tensor must be
// present with the expected shape.
template <typename P>
void ExtractTensors(const Checkpoint &checkpoint, const std::string &prefix,
                    P &params) {
  params.ForEachTensor([&](const std::string &name, Matrix &m) {
    const std::string full = prefix + name;
    for (const NamedTensor &t : checkpoint.tensors) {
      if (t.name != full) continue;
      if (t.value.rows() != m.rows() || t.value.cols() != m.cols()) {
        throw ModelMismatchError("tensor " + full + " has the wrong shape");
      }
      m = t.value;
      return;
    }
    throw ModelMismatchError("checkpoint is missing tensor " + full);
  });
}

}  // namespace mrcel

#endif  // MRCEL_CHECKPOINT_H_

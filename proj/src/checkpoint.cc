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


#include "mrcel/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mrcel {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'C', 'E', 'L', 'C', 'K', '1'};
// Guards allocations when reading corrupt files.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <typename T>
void PutLe(std::ostream &out, T value) {
  unsigned char bytes[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  }
  out.write(reinterpret_cast<const char *>(bytes), sizeof(T));
}

template <typename T>
T GetLe(std::istream &in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char *>(bytes), sizeof(T))) {
    throw ModelMismatchError("truncated checkpoint");
  }
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(bytes[i]) << (8 * i);
  }
  return value;
}

std::string GetBytes(std::istream &in, std::uint64_t n) {
  if (n > kMaxElements) throw ModelMismatchError("corrupt checkpoint length");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw ModelMismatchError("truncated checkpoint");
  }
  return s;
}

}  // namespace

void WriteCheckpoint(std::ostream &out, const Checkpoint &checkpoint) {
  out.write(kMagic, sizeof(kMagic));
  const std::string header = checkpoint.header.dump();
  PutLe<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  PutLe<std::uint64_t>(out, checkpoint.tensors.size());
  for (const NamedTensor &t : checkpoint.tensors) {
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    PutLe<std::uint32_t>(out, 2);
    PutLe<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    PutLe<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        PutLe<std::uint64_t>(out, std::bit_cast<std::uint64_t>(t.value(r, c)));
      }
    }
  }
}

void SaveCheckpoint(const std::string &path, const Checkpoint &checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  WriteCheckpoint(out, checkpoint);
}

Checkpoint ReadCheckpoint(std::istream &in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ModelMismatchError("not a checkpoint file");
  }
  Checkpoint checkpoint;
  std::string header = GetBytes(in, GetLe<std::uint64_t>(in));
  try {
    checkpoint.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception &err) {
    throw ModelMismatchError(std::string("checkpoint header: ") + err.what());
  }
  const std::uint64_t count = GetLe<std::uint64_t>(in);
  if (count > kMaxElements) throw ModelMismatchError("corrupt tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = GetBytes(in, GetLe<std::uint32_t>(in));
    if (GetLe<std::uint32_t>(in) != 2) {
      throw ModelMismatchError("unsupported tensor rank in " + t.name);
    }
    const std::uint64_t rows = GetLe<std::uint64_t>(in);
    const std::uint64_t cols = GetLe<std::uint64_t>(in);
    if (rows > kMaxElements || cols > kMaxElements ||
        rows * cols > kMaxElements) {
      throw ModelMismatchError("corrupt tensor shape in " + t.name);
    }
    t.value.resize(static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        t.value(r, c) = std::bit_cast<double>(GetLe<std::uint64_t>(in));
      }
    }
    checkpoint.tensors.push_back(std::move(t));
  }
  return checkpoint;
}

Checkpoint LoadCheckpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputFormatError("cannot open checkpoint: " + path);
  return ReadCheckpoint(in);
}

}  // namespace mrcel

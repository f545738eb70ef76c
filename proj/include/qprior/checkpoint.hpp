// Copyright 2026 The qprior Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Versioned binary checkpoints.
//
// Layout (little-endian):
//   header:  magic "QPRIORCK" | u32 version | u64 unix timestamp |
//            u64 payload length | u64 FNV-1a payload hash
//   payload: str stage | u32 n | n x (str key, str value) |
//            u32 m | m x (str name, u32 rank, rank x i32 dim, f32 data...)
// where str is u32 length + bytes. Config entries are sorted by key and
// blocks keep insertion order, so identical state gives identical payloads.
#ifndef QPRIOR_CHECKPOINT_HPP_
#define QPRIOR_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qprior/nn.hpp"

namespace qprior {

inline constexpr uint32_t kCheckpointVersion = 1;

struct ParamBlock {
  std::string name;
  ag::Shape shape;
  std::vector<float> data;
};

struct CheckpointBundle {
  std::string stage;  // "stage1", "stage2", "finetune"
  std::map<std::string, std::string> config;
  std::vector<ParamBlock> blocks;

  const ParamBlock& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
  const std::string& value(const std::string& key) const;
  std::string value_or(const std::string& key, const std::string& fallback) const;

  // Appends every parameter of `params` as "<prefix><name>".
  void add_params(const std::string& prefix, const nn::ParamList& params);
  // Copies stored values into `params`; shapes must match.
  void load_params(const std::string& prefix, const nn::ParamList& params) const;
};

std::vector<uint8_t> encode_payload(const CheckpointBundle& bundle);

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path);
// Throws kData on bad magic, version mismatch (naming both versions),
// truncation or hash mismatch. Nothing is returned on failure.
CheckpointBundle load_checkpoint(const std::filesystem::path& path);

// Payload bytes of a checkpoint file (header stripped), for comparisons.
std::vector<uint8_t> read_checkpoint_payload(const std::filesystem::path& path);

}  // namespace qprior

#endif  // QPRIOR_CHECKPOINT_HPP_

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

// Vector quantization against learned codebooks, including the two-codebook
// quality gate: features of images scoring above the threshold are quantized
// by both the common and the HQ+ codebook and fused additively.
#ifndef QPRIOR_VQ_HPP_
#define QPRIOR_VQ_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qprior/nn.hpp"

namespace qprior {

enum class CodebookRole { kCommon, kHqPlus };

const char* role_name(CodebookRole role);

// h x w x c feature array, row-major HWC (equivalently an [h*w, c] token
// matrix).
struct LatentGrid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;

  LatentGrid() = default;
  LatentGrid(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), values(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t cells() const { return static_cast<std::size_t>(height) * width; }
  std::span<const float> cell(std::size_t i) const {
    return {values.data() + i * channels, static_cast<std::size_t>(channels)};
  }
  bool same_shape(const LatentGrid& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  friend bool operator==(const LatentGrid&, const LatentGrid&) = default;
};

// h x w indices into one codebook, row-major.
struct CodeGrid {
  int height = 0;
  int width = 0;
  std::vector<int> indices;

  friend bool operator==(const CodeGrid&, const CodeGrid&) = default;
};

nn::Tensor to_tokens(const LatentGrid& z);  // constant [h*w, c]
LatentGrid from_tokens(const nn::Tensor& t, int height, int width);

class Codebook {
 public:
  Codebook() = default;
  // K x d entries, row-major.
  Codebook(CodebookRole role, int size, int dim, std::vector<float> entries);
  Codebook(CodebookRole role, int size, int dim);  // zero entries
  // Copies are deep: the copy owns a separate trainable tensor.
  Codebook(const Codebook& other);
  Codebook& operator=(const Codebook& other);
  Codebook(Codebook&&) = default;
  Codebook& operator=(Codebook&&) = default;

  CodebookRole role() const { return role_; }
  int size() const { return size_; }
  int dim() const { return dim_; }
  std::span<const float> entry(int k) const;
  // Trainable [K, d] tensor; shares storage with the codebook.
  const nn::Tensor& tensor() const { return entries_; }
  nn::Tensor& tensor() { return entries_; }
  void set_entry(int k, std::span<const float> v);

  friend bool operator==(const Codebook& a, const Codebook& b) {
    return a.role_ == b.role_ && a.size_ == b.size_ && a.dim_ == b.dim_ &&
           a.entries_.values() == b.entries_.values();
  }

 private:
  CodebookRole role_ = CodebookRole::kCommon;
  int size_ = 0;
  int dim_ = 0;
  nn::Tensor entries_;
};

struct NearestCode {
  int index = 0;
  double distance = 0.0;  // squared Euclidean
};

// Exact argmin of squared Euclidean distance, lowest index on ties.
NearestCode nearest_code(std::span<const float> v, const Codebook& cb);

// Nearest codes for n row-major vectors of dimension d. Uses a GEMM screen
// followed by an exact double-precision recheck of every near-best
// candidate, so results equal nearest_code exactly.
std::vector<int> nearest_codes(std::span<const float> rows, const Codebook& cb);

struct Quantized {
  CodeGrid codes;
  LatentGrid latent;
};

Quantized quantize_grid(const LatentGrid& z, const Codebook& cb);

// Entry lookup of a code grid.
LatentGrid lookup(const CodeGrid& codes, const Codebook& cb);

struct DualQuantized {
  LatentGrid fused;
  CodeGrid common_codes;
  std::optional<CodeGrid> hq_codes;  // present only when the gate opens
};

// Z_q = Z_q1 + alpha Z_q2 if score > threshold, else Z_q1.
DualQuantized dual_quantize(const LatentGrid& z, const Codebook& common, const Codebook& hq,
                            double score, double threshold, double alpha);

// a + alpha * b; returns a unchanged (bitwise) when alpha == 0.
LatentGrid fuse(const LatentGrid& a, const LatentGrid& b, double alpha);

// Forward value z_q, identity gradient into z.
nn::Tensor straight_through(const nn::Tensor& z, const nn::Tensor& z_q);

struct CodebookLosses {
  nn::Tensor codebook;    // mean ||sg(z) - z_q||^2, gradient to z_q only
  nn::Tensor commitment;  // beta * mean ||z - sg(z_q)||^2, gradient to z only
};

CodebookLosses codebook_update_losses(const nn::Tensor& z, const nn::Tensor& z_q, double beta);

}  // namespace qprior

#endif  // QPRIOR_VQ_HPP_

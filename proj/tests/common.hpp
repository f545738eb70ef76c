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

// Shared fixtures for the unit tests.
#ifndef QPRIOR_TESTS_COMMON_HPP_
#define QPRIOR_TESTS_COMMON_HPP_

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "qprior/autoencoder.hpp"
#include "qprior/corpus.hpp"
#include "qprior/image.hpp"
#include "qprior/manifest.hpp"
#include "qprior/transformer.hpp"

namespace qprior::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("qprior_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(int h, int w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(h, w);
  for (float& v : img.pixels) v = u(rng);
  return img;
}

inline Image ramp_image(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>((x + y + c) % (h + w)) / static_cast<float>(h + w);
  return img;
}

inline Image scene(int size, uint64_t seed) {
  Rng rng(seed);
  return synth_scene(size, rng);
}

// 16x16 inputs, 4x4x8 latents, 16-entry codebooks: fast enough for
// training-loop tests.
inline EncoderDecoderConfig tiny_autoencoder() {
  EncoderDecoderConfig c;
  c.input_size = 16;
  c.downsample_factor = 4;
  c.latent_channels = 8;
  c.base_width = 4;
  c.residual_blocks = 1;
  c.codebook_size = 16;
  c.hq_codebook_size = 16;
  return c;
}

inline TransformerConfig tiny_transformer() {
  TransformerConfig t;
  t.depth = 1;
  t.heads = 2;
  t.width = 16;
  t.mlp_ratio = 2;
  return t;
}

// Synthetic corpus of `count` images written under dir/gt, plus its
// manifest (calibrations fitted on the corpus).
inline DatasetManifest tiny_corpus(const std::filesystem::path& dir, int count, int size,
                                   uint64_t seed = 0) {
  CorpusOptions o;
  o.count = count;
  o.size = size;
  o.seed = seed;
  write_corpus(dir, o);
  return build_manifest(dir / "gt", ScorerEnsemble::defaults());
}

}  // namespace qprior::testing

#endif  // QPRIOR_TESTS_COMMON_HPP_

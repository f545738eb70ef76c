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

// Procedural desk corpus: small synthetic scenes with mixed ground-truth
// quality, plus seeded low-quality counterparts.
#ifndef QPRIOR_CORPUS_HPP_
#define QPRIOR_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qprior/degrade.hpp"
#include "qprior/image.hpp"

namespace qprior {

// Quality tier applied to a clean scene to form the ground truth. Mixed
// tiers reproduce a training set whose references are not uniformly good.
enum class QualityTier { kPristine, kSoft, kNoisy, kDim };

const char* tier_name(QualityTier t);

// Clean scene: gradient background, filled shapes and a striped patch.
Image synth_scene(int size, Rng& rng);

Image apply_tier(const Image& clean, QualityTier tier, Rng& rng);

struct CorpusOptions {
  int count = 100;
  int size = 64;
  uint64_t seed = 0;
  double pristine_fraction = 0.4;  // remainder split evenly over the others
  bool write_lq = false;           // also write degraded copies to lq/
  DegradationRange degradation;
};

struct CorpusItem {
  std::string name;  // file name, e.g. "img_0007.png"
  QualityTier tier;
};

// Writes <dir>/gt/*.png (and <dir>/lq/*.png) and returns the item list. A
// file <dir>/tiers.tsv records each image's tier.
std::vector<CorpusItem> write_corpus(const std::filesystem::path& dir, const CorpusOptions& opts);

// Degradation for the i-th image of a corpus or training epoch; a pure
// function of (seed, index).
DegradationParams corpus_degradation(const DegradationRange& range, uint64_t seed,
                                     uint64_t index);

}  // namespace qprior

#endif  // QPRIOR_CORPUS_HPP_

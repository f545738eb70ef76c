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

// Synthetic degradation of clean images into low-quality training inputs.
//
// Stages run in a fixed order: Gaussian blur, box downsampling, additive
// Gaussian noise, block-DCT compression, bilinear re-upsampling. Each stage is
// skipped at its identity setting, so identity parameters reproduce the input
// bit for bit.
#ifndef QPRIOR_DEGRADE_HPP_
#define QPRIOR_DEGRADE_HPP_

#include <cstdint>

#include "qprior/image.hpp"
#include "qprior/rng.hpp"

namespace qprior {

struct DegradationParams {
  double blur_sigma = 0.0;      // pixels
  double noise_sigma = 0.0;     // intensity units
  int downsample_factor = 1;    // must divide both image dimensions
  int compression_quality = 100;  // [10, 100]; 100 disables compression
  uint64_t seed = 0;            // drives the noise stage only
};

void validate(const DegradationParams& p);

Image degrade(const Image& img, const DegradationParams& params);

// Individual stages, exposed for tests and tools.
Image gaussian_blur(const Image& img, double sigma);
Image box_downsample(const Image& img, int factor);
Image add_gaussian_noise(const Image& img, double sigma, uint64_t seed);
Image dct_compress(const Image& img, int quality);
Image bilinear_resize(const Image& img, int height, int width);

// Ranges for randomly sampled training degradations.
struct DegradationRange {
  double blur_min = 1.0, blur_max = 2.0;
  double noise_min = 0.01, noise_max = 0.04;
  int factor = 2;
  int quality_min = 40, quality_max = 80;
};

DegradationParams sample_degradation(const DegradationRange& range, Rng& rng);

}  // namespace qprior

#endif  // QPRIOR_DEGRADE_HPP_

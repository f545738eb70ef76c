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

#include "qprior/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace qprior {
namespace {

using Color = std::array<float, 3>;

float smoothstep01(float t) {
  t = std::clamp(t, 0.0f, 1.0f);
  return t * t * (3.0f - 2.0f * t);
}

Color random_color(Rng& rng) {
  std::uniform_real_distribution<float> u(0.1f, 0.9f);
  return {u(rng), u(rng), u(rng)};
}

// Blends `c` into pixel (y, x) with coverage a.
void blend(Image& img, int y, int x, const Color& c, float a) {
  for (int ch = 0; ch < 3; ++ch) {
    float& p = img.at(y, x, ch);
    p = p * (1.0f - a) + c[ch] * a;
  }
}

}  // namespace

const char* tier_name(QualityTier t) {
  switch (t) {
    case QualityTier::kPristine: return "pristine";
    case QualityTier::kSoft: return "soft";
    case QualityTier::kNoisy: return "noisy";
    case QualityTier::kDim: return "dim";
  }
  return "?";
}

Image synth_scene(int size, Rng& rng) {
  require(size >= 8, ErrorKind::kUsage, "scene size must be at least 8");
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(size, size);
  const Color c0 = random_color(rng), c1 = random_color(rng);
  const float angle = u(rng) * 2.0f * std::numbers::pi_v<float>;
  const float dx = std::cos(angle), dy = std::sin(angle);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const float t = 0.5f + ((x + 0.5f) / size - 0.5f) * dx + ((y + 0.5f) / size - 0.5f) * dy;
      const float s = std::clamp(t, 0.0f, 1.0f);
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c0[ch] * (1.0f - s) + c1[ch] * s;
    }

  // Striped patch.
  {
    const int x0 = static_cast<int>(u(rng) * size * 0.6f), y0 = static_cast<int>(u(rng) * size * 0.6f);
    const int pw = size / 4 + static_cast<int>(u(rng) * size / 4);
    const int ph = size / 4 + static_cast<int>(u(rng) * size / 4);
    const float period = 3.0f + u(rng) * 5.0f;
    const float theta = u(rng) * std::numbers::pi_v<float>;
    const Color a = random_color(rng), b = random_color(rng);
    for (int y = y0; y < std::min(size, y0 + ph); ++y)
      for (int x = x0; x < std::min(size, x0 + pw); ++x) {
        const float phase = (x * std::cos(theta) + y * std::sin(theta)) / period;
        const float s = 0.5f + 0.5f * std::sin(2.0f * std::numbers::pi_v<float> * phase);
        for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = a[ch] * (1.0f - s) + b[ch] * s;
      }
  }

  // Anti-aliased discs and rectangles.
  const int shapes = 3 + static_cast<int>(u(rng) * 4);
  for (int k = 0; k < shapes; ++k) {
    const Color c = random_color(rng);
    const float cx = u(rng) * size, cy = u(rng) * size;
    const float r = size * (0.06f + 0.14f * u(rng));
    const bool disc = u(rng) < 0.5f;
    const float hw = r, hh = r * (0.5f + u(rng));
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const float px = x + 0.5f - cx, py = y + 0.5f - cy;
        float d;  // signed distance, negative inside
        if (disc) {
          d = std::sqrt(px * px + py * py) - r;
        } else {
          d = std::max(std::abs(px) - hw, std::abs(py) - hh);
        }
        const float a = smoothstep01(0.5f - d);
        if (a > 0.0f) blend(img, y, x, c, a);
      }
  }
  for (float& p : img.pixels) p = std::clamp(p, 0.0f, 1.0f);
  return img;
}

Image apply_tier(const Image& clean, QualityTier tier, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (tier) {
    case QualityTier::kPristine:
      return clean;
    case QualityTier::kSoft:
      return gaussian_blur(clean, 0.8 + 0.7 * u(rng));
    case QualityTier::kNoisy:
      return add_gaussian_noise(clean, 0.02 + 0.03 * u(rng), rng());
    case QualityTier::kDim: {
      const float gain = static_cast<float>(0.35 + 0.2 * u(rng));
      Image out = clean;
      for (float& p : out.pixels) p *= gain;
      return out;
    }
  }
  return clean;
}

DegradationParams corpus_degradation(const DegradationRange& range, uint64_t seed,
                                     uint64_t index) {
  Rng rng = substream(seed, "degradation", index);
  return sample_degradation(range, rng);
}

std::vector<CorpusItem> write_corpus(const std::filesystem::path& dir, const CorpusOptions& opts) {
  require(opts.count >= 1, ErrorKind::kUsage, "corpus count must be at least 1");
  require(opts.pristine_fraction >= 0.0 && opts.pristine_fraction <= 1.0, ErrorKind::kUsage,
          "pristine fraction must lie in [0,1]");
  namespace fs = std::filesystem;
  fs::create_directories(dir / "gt");
  if (opts.write_lq) fs::create_directories(dir / "lq");
  std::vector<CorpusItem> items;
  std::ofstream tiers(dir / "tiers.tsv");
  require(static_cast<bool>(tiers), ErrorKind::kData, "cannot write " + (dir / "tiers.tsv").string());
  tiers << "name\ttier\n";
  for (int i = 0; i < opts.count; ++i) {
    Rng scene_rng = substream(opts.seed, "scene", i);
    Rng tier_rng = substream(opts.seed, "tier", i);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = u(tier_rng);
    QualityTier tier = QualityTier::kPristine;
    if (r >= opts.pristine_fraction) {
      const double rest = (r - opts.pristine_fraction) / (1.0 - opts.pristine_fraction);
      tier = rest < 1.0 / 3 ? QualityTier::kSoft : (rest < 2.0 / 3 ? QualityTier::kNoisy : QualityTier::kDim);
    }
    // Ground truth goes through the 8-bit grid so the files are the data.
    const Image gt = quantize_8bit(apply_tier(synth_scene(opts.size, scene_rng), tier, tier_rng));
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d.png", i);
    save_png(gt, dir / "gt" / name);
    if (opts.write_lq) {
      save_png(degrade(gt, corpus_degradation(opts.degradation, opts.seed, i)), dir / "lq" / name);
    }
    tiers << name << '\t' << tier_name(tier) << '\n';
    items.push_back({name, tier});
  }
  return items;
}

}  // namespace qprior

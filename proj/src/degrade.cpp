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

#include "qprior/degrade.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace qprior {
namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// Libjpeg base tables (quality 50).
constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr std::array<int, 64> kChromaTable = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

std::array<double, 64> scaled_table(const std::array<int, 64>& base, int quality) {
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<double, 64> t{};
  for (int i = 0; i < 64; ++i) t[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return t;
}

// Orthonormal 8-point DCT-II basis.
std::array<double, 64> dct_basis() {
  std::array<double, 64> b{};
  for (int k = 0; k < 8; ++k)
    for (int n = 0; n < 8; ++n) {
      const double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      b[k * 8 + n] = a * std::cos(std::numbers::pi * (2 * n + 1) * k / 16.0);
    }
  return b;
}

void quantize_block(double* blk, const std::array<double, 64>& table,
                    const std::array<double, 64>& basis) {
  double tmp[64], coef[64];
  // rows then columns
  for (int y = 0; y < 8; ++y)
    for (int k = 0; k < 8; ++k) {
      double s = 0;
      for (int n = 0; n < 8; ++n) s += basis[k * 8 + n] * blk[y * 8 + n];
      tmp[y * 8 + k] = s;
    }
  for (int k = 0; k < 8; ++k)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int n = 0; n < 8; ++n) s += basis[k * 8 + n] * tmp[n * 8 + x];
      coef[k * 8 + x] = std::round(s / table[k * 8 + x]) * table[k * 8 + x];
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += basis[k * 8 + y] * coef[k * 8 + x];
      tmp[y * 8 + x] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += basis[k * 8 + x] * tmp[y * 8 + k];
      blk[y * 8 + x] = s;
    }
}

}  // namespace

void validate(const DegradationParams& p) {
  require(std::isfinite(p.blur_sigma) && p.blur_sigma >= 0.0, ErrorKind::kUsage,
          "blur_sigma must be finite and non-negative");
  require(std::isfinite(p.noise_sigma) && p.noise_sigma >= 0.0, ErrorKind::kUsage,
          "noise_sigma must be finite and non-negative");
  require(p.downsample_factor >= 1, ErrorKind::kUsage, "downsample_factor must be >= 1");
  require(p.compression_quality >= 10 && p.compression_quality <= 100, ErrorKind::kUsage,
          "compression_quality must lie in [10,100]");
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> w(2 * radius + 1);
  double total = 0;
  for (int k = -radius; k <= radius; ++k) total += w[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  for (double& v : w) v /= total;
  // out = centre + sum_k w_k (x_k - centre): constant regions stay exact.
  auto pass = [&](const Image& src, bool horizontal) {
    Image dst(src.height, src.width);
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x)
        for (int c = 0; c < 3; ++c) {
          const double centre = src.at(y, x, c);
          double acc = 0;
          for (int k = -radius; k <= radius; ++k) {
            const float v = horizontal ? src.at(y, reflect(x + k, src.width), c)
                                       : src.at(reflect(y + k, src.height), x, c);
            acc += w[k + radius] * (v - centre);
          }
          dst.at(y, x, c) = static_cast<float>(centre + acc);
        }
    return dst;
  };
  return pass(pass(img, true), false);
}

Image box_downsample(const Image& img, int factor) {
  if (factor == 1) return img;
  if (img.height % factor != 0 || img.width % factor != 0) {
    fail(ErrorKind::kData, "image " + std::to_string(img.height) + "x" +
                               std::to_string(img.width) + " not divisible by factor " +
                               std::to_string(factor));
  }
  Image out(img.height / factor, img.width / factor);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += img.at(y * factor + dy, x * factor + dx, c);
        out.at(y, x, c) = static_cast<float>(acc * inv);
      }
  return out;
}

Image add_gaussian_noise(const Image& img, double sigma, uint64_t seed) {
  if (sigma <= 0.0) return img;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Image out = img;
  for (float& v : out.pixels) {
    v = static_cast<float>(std::clamp(v + sigma * normal(rng), 0.0, 1.0));
  }
  return out;
}

Image dct_compress(const Image& img, int quality) {
  if (quality >= 100) return img;
  const auto luma = scaled_table(kLumaTable, quality);
  const auto chroma = scaled_table(kChromaTable, quality);
  const auto basis = dct_basis();
  const int h = img.height, w = img.width;
  const int bh = (h + 7) / 8 * 8, bw = (w + 7) / 8 * 8;
  // YCbCr planes in [0,255] with edge-replicated padding, level shifted.
  std::array<std::vector<double>, 3> planes;
  for (auto& p : planes) p.assign(static_cast<std::size_t>(bh) * bw, 0.0);
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x) {
      const int sy = std::min(y, h - 1), sx = std::min(x, w - 1);
      const double r = img.at(sy, sx, 0) * 255.0, g = img.at(sy, sx, 1) * 255.0,
                   b = img.at(sy, sx, 2) * 255.0;
      const std::size_t i = static_cast<std::size_t>(y) * bw + x;
      planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
      planes[1][i] = -0.168736 * r - 0.331264 * g + 0.5 * b;
      planes[2][i] = 0.5 * r - 0.418688 * g - 0.081312 * b;
    }
  double blk[64];
  for (int c = 0; c < 3; ++c) {
    const auto& table = c == 0 ? luma : chroma;
    for (int by = 0; by < bh; by += 8)
      for (int bx = 0; bx < bw; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) blk[y * 8 + x] = planes[c][(by + y) * bw + bx + x];
        quantize_block(blk, table, basis);
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) planes[c][(by + y) * bw + bx + x] = blk[y * 8 + x];
      }
  }
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * bw + x;
      const double yy = planes[0][i] + 128.0, cb = planes[1][i], cr = planes[2][i];
      const double rgb[3] = {yy + 1.402 * cr, yy - 0.344136 * cb - 0.714136 * cr,
                             yy + 1.772 * cb};
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = static_cast<float>(std::clamp(rgb[c] / 255.0, 0.0, 1.0));
    }
  return out;
}

Image bilinear_resize(const Image& img, int height, int width) {
  if (img.height == height && img.width == width) return img;
  Image out(height, width);
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1 - tx) + img.at(y0, x1, c) * tx;
        const double bot = img.at(y1, x0, c) * (1 - tx) + img.at(y1, x1, c) * tx;
        out.at(y, x, c) = static_cast<float>(top * (1 - ty) + bot * ty);
      }
    }
  }
  return out;
}

Image degrade(const Image& img, const DegradationParams& params) {
  validate(img);
  validate(params);
  Image out = gaussian_blur(img, params.blur_sigma);
  out = box_downsample(out, params.downsample_factor);
  out = add_gaussian_noise(out, params.noise_sigma, params.seed);
  out = dct_compress(out, params.compression_quality);
  return bilinear_resize(out, img.height, img.width);
}

DegradationParams sample_degradation(const DegradationRange& range, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DegradationParams p;
  p.blur_sigma = range.blur_min + (range.blur_max - range.blur_min) * unit(rng);
  p.noise_sigma = range.noise_min + (range.noise_max - range.noise_min) * unit(rng);
  p.downsample_factor = range.factor;
  p.compression_quality = std::uniform_int_distribution<int>(range.quality_min,
                                                             range.quality_max)(rng);
  p.seed = rng();
  return p;
}

}  // namespace qprior

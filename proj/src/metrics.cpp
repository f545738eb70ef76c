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

#include "qprior/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace qprior {
namespace {

void check_pair(const Image& a, const Image& b, const char* what) {
  require(a.height == b.height && a.width == b.width, ErrorKind::kData,
          std::string(what) + ": image sizes differ (" + std::to_string(a.height) + "x" +
              std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
              std::to_string(b.width) + ")");
  require(!a.empty(), ErrorKind::kData, std::string(what) + ": empty image");
}

// Box sums over every k x k window of an h x w plane, via an integral image.
std::vector<double> window_sums(const std::vector<double>& plane, int h, int w, int k) {
  std::vector<double> integral(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += plane[static_cast<std::size_t>(y) * w + x];
      integral[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
          integral[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
    }
  }
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  auto at = [&](int y, int x) { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out[static_cast<std::size_t>(y) * ow + x] = at(y + k, x + k) - at(y, x + k) - at(y + k, x) + at(y, x);
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_pair(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  check_pair(a, b, "ssim");
  constexpr int k = 7;
  require(a.height >= k && a.width >= k, ErrorKind::kData, "ssim: images smaller than 7x7");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  constexpr double n = k * k;
  const int h = a.height, w = a.width;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<double> x(hw), y(hw), xx(hw), yy(hw), xy(hw);
    for (std::size_t p = 0; p < hw; ++p) {
      x[p] = a.pixels[p * 3 + ch];
      y[p] = b.pixels[p * 3 + ch];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto sx = window_sums(x, h, w, k), sy = window_sums(y, h, w, k);
    const auto sxx = window_sums(xx, h, w, k), syy = window_sums(yy, h, w, k);
    const auto sxy = window_sums(xy, h, w, k);
    for (std::size_t i = 0; i < sx.size(); ++i) {
      const double mx = sx[i] / n, my = sy[i] / n;
      const double vx = (sxx[i] - n * mx * mx) / (n - 1);
      const double vy = (syy[i] - n * my * my) / (n - 1);
      const double cov = (sxy[i] - n * mx * my) / (n - 1);
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace qprior

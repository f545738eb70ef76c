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

#ifndef QPRIOR_IMAGE_HPP_
#define QPRIOR_IMAGE_HPP_

#include <filesystem>
#include <span>
#include <vector>

#include "qprior/autograd.hpp"

namespace qprior {

// RGB image, intensities in [0, 1], stored row-major HWC.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * 3 + c;
  }
  float& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
  float at(int y, int x, int c) const { return pixels[index(y, x, c)]; }
  bool empty() const { return height <= 0 || width <= 0; }

  friend bool operator==(const Image&, const Image&) = default;
};

// Throws kData for zero size or wrong buffer length, kNumerical for
// non-finite values, kData for values outside [0, 1].
void validate(const Image& img);

// 8-bit RGB PNG; intensities divided by 255.
Image load_png(const std::filesystem::path& path);
// Values are clamped to [0, 1] and rounded to 8 bits.
void save_png(const Image& img, const std::filesystem::path& path);

// Quantizes to the 8-bit grid exactly as save_png followed by load_png would.
Image quantize_8bit(const Image& img);

// [3, H, W] tensor view of an image.
template <class T>
ag::Tensor<T> to_tensor(const Image& img) {
  const std::size_t hw = static_cast<std::size_t>(img.height) * img.width;
  std::vector<T> v(3 * hw);
  for (std::size_t p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c) v[c * hw + p] = static_cast<T>(img.pixels[p * 3 + c]);
  return ag::Tensor<T>::constant({3, img.height, img.width}, std::move(v));
}

// Inverse of to_tensor; clamps into [0, 1].
template <class T>
Image from_tensor(const ag::Tensor<T>& t) {
  require(t.rank() == 3 && t.dim(0) == 3, ErrorKind::kData, "from_tensor expects [3,H,W]");
  Image img(t.dim(1), t.dim(2));
  const std::size_t hw = static_cast<std::size_t>(img.height) * img.width;
  const auto v = t.data();
  for (std::size_t p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c) {
      const T x = v[c * hw + p];
      img.pixels[p * 3 + c] = static_cast<float>(x < T(0) ? T(0) : (x > T(1) ? T(1) : x));
    }
  return img;
}

}  // namespace qprior

#endif  // QPRIOR_IMAGE_HPP_

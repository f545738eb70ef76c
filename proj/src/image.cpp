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

#include "qprior/image.hpp"

#include <png.h>

#include <algorithm>

#include <cmath>
#include <string>

namespace qprior {

void validate(const Image& img) {
  require(!img.empty(), ErrorKind::kData, "image has zero size");
  require(img.pixels.size() == static_cast<std::size_t>(img.height) * img.width * 3,
          ErrorKind::kData, "image buffer does not match its dimensions");
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = img.pixels[i];
    if (!std::isfinite(v)) {
      fail(ErrorKind::kNumerical, "non-finite pixel at offset " + std::to_string(i));
    }
    if (v < 0.0f || v > 1.0f) {
      fail(ErrorKind::kData, "pixel outside [0,1] at offset " + std::to_string(i));
    }
  }
}

Image load_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    fail(ErrorKind::kData, "cannot decode PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorKind::kData, "cannot decode PNG " + path.string() + ": " + msg);
  }
  Image img(static_cast<int>(png.height), static_cast<int>(png.width));
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0f;
  return img;
}

void save_png(const Image& img, const std::filesystem::path& path) {
  require(!img.empty(), ErrorKind::kData, "cannot save an empty image");
  std::vector<unsigned char> buf(img.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const float v = std::isfinite(img.pixels[i]) ? img.pixels[i] : 0.0f;
    buf[i] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
    fail(ErrorKind::kData, "cannot write PNG " + path.string() + ": " + png.message);
  }
}

Image quantize_8bit(const Image& img) {
  Image out = img;
  for (float& v : out.pixels) {
    const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    v = static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
  }
  return out;
}

}  // namespace qprior

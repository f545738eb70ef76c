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

#include "qprior/vq.hpp"

#include <cmath>
#include <limits>

namespace qprior {

const char* role_name(CodebookRole role) {
  return role == CodebookRole::kCommon ? "common" : "hq_plus";
}

nn::Tensor to_tokens(const LatentGrid& z) {
  return nn::Tensor::constant({z.height * z.width, z.channels}, z.values);
}

LatentGrid from_tokens(const nn::Tensor& t, int height, int width) {
  require(t.rank() == 2 && t.dim(0) == height * width, ErrorKind::kData,
          "token matrix does not match grid " + std::to_string(height) + "x" +
              std::to_string(width));
  LatentGrid z;
  z.height = height;
  z.width = width;
  z.channels = t.dim(1);
  z.values = t.values();
  return z;
}

Codebook::Codebook(CodebookRole role, int size, int dim, std::vector<float> entries)
    : role_(role), size_(size), dim_(dim) {
  require(size >= 1 && dim >= 1, ErrorKind::kUsage, "codebook needs K >= 1 and d >= 1");
  require(entries.size() == static_cast<std::size_t>(size) * dim, ErrorKind::kData,
          "codebook entry buffer does not match K x d");
  for (float v : entries) {
    require(std::isfinite(v), ErrorKind::kNumerical, "codebook entries must be finite");
  }
  entries_ = nn::Tensor::parameter({size, dim}, std::move(entries));
}

Codebook::Codebook(CodebookRole role, int size, int dim)
    : Codebook(role, size, dim, std::vector<float>(static_cast<std::size_t>(size) * dim, 0.0f)) {}

Codebook::Codebook(const Codebook& other)
    : role_(other.role_), size_(other.size_), dim_(other.dim_) {
  if (other.entries_.defined()) {
    entries_ = nn::Tensor::parameter(other.entries_.shape(), other.entries_.values());
  }
}

Codebook& Codebook::operator=(const Codebook& other) {
  if (this != &other) *this = Codebook(other);
  return *this;
}

std::span<const float> Codebook::entry(int k) const {
  return entries_.data().subspan(static_cast<std::size_t>(k) * dim_, dim_);
}

void Codebook::set_entry(int k, std::span<const float> v) {
  require(v.size() == static_cast<std::size_t>(dim_), ErrorKind::kData, "entry dimension mismatch");
  std::copy(v.begin(), v.end(), entries_.mutable_data().begin() + static_cast<std::ptrdiff_t>(k) * dim_);
}

namespace {

double exact_distance(std::span<const float> v, std::span<const float> e) {
  double acc = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double d = static_cast<double>(v[j]) - static_cast<double>(e[j]);
    acc += d * d;
  }
  return acc;
}

void check_finite(std::span<const float> v) {
  for (float x : v) {
    require(std::isfinite(x), ErrorKind::kNumerical, "cannot quantize a non-finite vector");
  }
}

}  // namespace

NearestCode nearest_code(std::span<const float> v, const Codebook& cb) {
  require(v.size() == static_cast<std::size_t>(cb.dim()), ErrorKind::kData,
          "vector dimension " + std::to_string(v.size()) + " does not match codebook dimension " +
              std::to_string(cb.dim()));
  check_finite(v);
  NearestCode best{0, std::numeric_limits<double>::infinity()};
  for (int k = 0; k < cb.size(); ++k) {
    const double d = exact_distance(v, cb.entry(k));
    if (d < best.distance) best = {k, d};
  }
  return best;
}

std::vector<int> nearest_codes(std::span<const float> rows, const Codebook& cb) {
  const int d = cb.dim(), k = cb.size();
  require(rows.size() % d == 0, ErrorKind::kData, "row buffer is not a multiple of the dimension");
  check_finite(rows);
  const int n = static_cast<int>(rows.size() / d);
  // Screen: ||e||^2 - 2 v.e (the ||v||^2 term is common to a row).
  std::vector<float> dots(static_cast<std::size_t>(n) * k);
  ag::gemm<float>(false, true, n, k, d, 1.0f, rows.data(), cb.tensor().data().data(), 0.0f,
                  dots.data());
  std::vector<double> enorm(k);
  double emax = 0.0;
  for (int j = 0; j < k; ++j) {
    double s = 0;
    for (float x : cb.entry(j)) s += static_cast<double>(x) * x;
    enorm[j] = s;
    emax = std::max(emax, s);
  }
  std::vector<int> out(n);
  std::vector<double> approx(k);
  for (int i = 0; i < n; ++i) {
    const auto v = rows.subspan(static_cast<std::size_t>(i) * d, d);
    double vnorm = 0;
    for (float x : v) vnorm += static_cast<double>(x) * x;
    double best_approx = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      approx[j] = enorm[j] - 2.0 * dots[static_cast<std::size_t>(i) * k + j];
      best_approx = std::min(best_approx, approx[j]);
    }
    // Float GEMM error is far below this margin for finite inputs.
    const double margin = 1e-4 * (vnorm + emax) + 1e-9;
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      if (approx[j] > best_approx + margin) continue;
      const double dist = exact_distance(v, cb.entry(j));
      if (dist < best_d) {
        best_d = dist;
        best = j;
      }
    }
    out[i] = best;
  }
  return out;
}

Quantized quantize_grid(const LatentGrid& z, const Codebook& cb) {
  if (z.channels != cb.dim()) {
    fail(ErrorKind::kData, "latent channels " + std::to_string(z.channels) +
                               " do not match codebook dimension " + std::to_string(cb.dim()));
  }
  require(z.values.size() == z.cells() * z.channels, ErrorKind::kData, "malformed latent grid");
  Quantized q;
  q.codes = {z.height, z.width, nearest_codes(z.values, cb)};
  q.latent = lookup(q.codes, cb);
  return q;
}

LatentGrid lookup(const CodeGrid& codes, const Codebook& cb) {
  require(codes.indices.size() == static_cast<std::size_t>(codes.height) * codes.width,
          ErrorKind::kData, "malformed code grid");
  LatentGrid out(codes.height, codes.width, cb.dim());
  for (std::size_t i = 0; i < codes.indices.size(); ++i) {
    const int k = codes.indices[i];
    require(k >= 0 && k < cb.size(), ErrorKind::kData,
            "code " + std::to_string(k) + " outside codebook of size " + std::to_string(cb.size()));
    const auto e = cb.entry(k);
    std::copy(e.begin(), e.end(), out.values.begin() + static_cast<std::ptrdiff_t>(i) * cb.dim());
  }
  return out;
}

LatentGrid fuse(const LatentGrid& a, const LatentGrid& b, double alpha) {
  require(a.same_shape(b), ErrorKind::kData, "fuse: latent shapes differ");
  require(std::isfinite(alpha), ErrorKind::kUsage, "alpha must be finite");
  if (alpha == 0.0) return a;
  LatentGrid out = a;
  const float al = static_cast<float>(alpha);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] + al * b.values[i];
  return out;
}

DualQuantized dual_quantize(const LatentGrid& z, const Codebook& common, const Codebook& hq,
                            double score, double threshold, double alpha) {
  require(std::isfinite(alpha), ErrorKind::kUsage, "alpha must be finite");
  require(common.dim() == hq.dim(), ErrorKind::kData, "codebook dimensions differ");
  Quantized q1 = quantize_grid(z, common);
  DualQuantized out;
  out.common_codes = std::move(q1.codes);
  if (score > threshold) {
    Quantized q2 = quantize_grid(z, hq);
    out.fused = fuse(q1.latent, q2.latent, alpha);
    out.hq_codes = std::move(q2.codes);
  } else {
    out.fused = std::move(q1.latent);
  }
  return out;
}

nn::Tensor straight_through(const nn::Tensor& z, const nn::Tensor& z_q) {
  return ag::straight_through(z, z_q);
}

CodebookLosses codebook_update_losses(const nn::Tensor& z, const nn::Tensor& z_q, double beta) {
  require(z.shape() == z_q.shape(), ErrorKind::kData, "codebook losses: shape mismatch");
  CodebookLosses out;
  out.codebook = ag::mse(ag::detach(z), z_q);
  out.commitment = ag::scale(ag::mse(z, ag::detach(z_q)), static_cast<float>(beta));
  return out;
}

}  // namespace qprior

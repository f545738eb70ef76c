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

#include <random>

#include "common.hpp"
#include "qprior/vq.hpp"

namespace qprior {
namespace {

Codebook random_codebook(int k, int d, uint64_t seed, CodebookRole role = CodebookRole::kCommon) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> e(static_cast<std::size_t>(k) * d);
  for (float& v : e) v = n(rng);
  return Codebook(role, k, d, std::move(e));
}

LatentGrid random_grid(int h, int w, int c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  LatentGrid z(h, w, c);
  for (float& v : z.values) v = n(rng);
  return z;
}

int brute_argmin(std::span<const float> v, const Codebook& cb) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cb.size(); ++k) {
    double d = 0.0;
    for (int j = 0; j < cb.dim(); ++j) {
      const double t = static_cast<double>(v[j]) - cb.entry(k)[j];
      d += t * t;
    }
    if (d < bd) bd = d, best = k;
  }
  return best;
}

TEST(Nearest, PicksClosestOnALine) {
  std::vector<float> e;
  for (int k = 0; k < 8; ++k) e.insert(e.end(), {float(k), float(k)});
  const Codebook cb(CodebookRole::kCommon, 8, 2, e);
  const float v[2] = {5.2f, 4.9f};
  EXPECT_EQ(nearest_code(v, cb).index, 5);
}

TEST(Nearest, TwoEntryExample) {
  const Codebook cb(CodebookRole::kCommon, 2, 2, {0, 0, 1, 0});
  const float v[2] = {0.9f, 0.1f};
  const NearestCode n = nearest_code(v, cb);
  EXPECT_EQ(n.index, 1);
  EXPECT_NEAR(n.distance, 0.02, 1e-6);
}

TEST(Nearest, TieGoesToLowestIndex) {
  const Codebook cb(CodebookRole::kCommon, 3, 2, {3, 3, 1, 0, -1, 0});
  const float v[2] = {0, 0};
  EXPECT_EQ(nearest_code(v, cb).index, 1);
  const std::vector<float> rows{0, 0, 0, 0};
  EXPECT_EQ(nearest_codes(rows, cb), (std::vector<int>{1, 1}));
}

TEST(Nearest, RejectsDimensionMismatchAndNonFinite) {
  const Codebook cb = random_codebook(4, 3, 1);
  const float two[2] = {0, 0};
  EXPECT_THROW(nearest_code(two, cb), Error);
  const float bad[3] = {0, std::numeric_limits<float>::infinity(), 0};
  EXPECT_THROW(nearest_code(bad, cb), Error);
}

TEST(Nearest, BatchedSearchAgreesWithBruteForce) {
  const Codebook cb = random_codebook(64, 8, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> rows(1000 * 8);
  for (float& v : rows) v = n(rng);
  const std::vector<int> got = nearest_codes(rows, cb);
  ASSERT_EQ(got.size(), 1000u);
  for (int i = 0; i < 1000; ++i) {
    const std::span<const float> v(rows.data() + i * 8, 8);
    EXPECT_EQ(got[i], brute_argmin(v, cb)) << i;
    EXPECT_EQ(got[i], nearest_code(v, cb).index) << i;
  }
}

TEST(Quantize, SmallGridAgainstBruteForce) {
  const Codebook cb = random_codebook(4, 2, 7);
  const LatentGrid z = random_grid(2, 2, 2, 8);
  const Quantized q = quantize_grid(z, cb);
  ASSERT_EQ(q.codes.indices.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const int k = brute_argmin(z.cell(i), cb);
    EXPECT_EQ(q.codes.indices[i], k);
    for (int j = 0; j < 2; ++j) EXPECT_EQ(q.latent.cell(i)[j], cb.entry(k)[j]);
  }
}

TEST(Quantize, IdempotentAndShapePreserving) {
  const Codebook cb = random_codebook(256, 8, 11);
  const LatentGrid z = random_grid(16, 16, 8, 12);
  const Quantized q = quantize_grid(z, cb);
  EXPECT_EQ(q.codes.height, 16);
  EXPECT_EQ(q.codes.width, 16);
  EXPECT_TRUE(q.latent.same_shape(z));
  for (int idx : q.codes.indices) {
    EXPECT_GE(idx, 0);
    EXPECT_LT(idx, 256);
  }
  const Quantized again = quantize_grid(q.latent, cb);
  EXPECT_EQ(again.codes, q.codes);
  EXPECT_EQ(again.latent, q.latent);
  EXPECT_EQ(lookup(q.codes, cb), q.latent);
}

TEST(Quantize, CodebookEntriesAreFixedPoints) {
  const Codebook cb = random_codebook(16, 4, 13);
  CodeGrid codes{3, 5, {}};
  for (int i = 0; i < 15; ++i) codes.indices.push_back((i * 7) % 16);
  const LatentGrid z = lookup(codes, cb);
  const Quantized q = quantize_grid(z, cb);
  EXPECT_EQ(q.codes, codes);
  EXPECT_EQ(q.latent, z);
}

TEST(DualGate, ClosedGateIsBitwiseCommonPath) {
  const Codebook c1 = random_codebook(32, 4, 20);
  const Codebook c2 = random_codebook(32, 4, 21, CodebookRole::kHqPlus);
  const LatentGrid z = random_grid(4, 4, 4, 22);
  const Quantized q1 = quantize_grid(z, c1);
  for (double s : {0.1, 0.5}) {
    const DualQuantized d = dual_quantize(z, c1, c2, s, 0.5, 1.0);
    EXPECT_EQ(d.fused, q1.latent);
    EXPECT_EQ(d.common_codes, q1.codes);
    EXPECT_FALSE(d.hq_codes.has_value());
  }
}

TEST(DualGate, OpenGateAddsScaledHqTerm) {
  const Codebook c1 = random_codebook(32, 4, 30);
  const Codebook c2 = random_codebook(32, 4, 31, CodebookRole::kHqPlus);
  const LatentGrid z = random_grid(4, 4, 4, 32);
  const DualQuantized d = dual_quantize(z, c1, c2, 0.9, 0.5, 0.7);
  ASSERT_TRUE(d.hq_codes.has_value());
  const LatentGrid a = lookup(d.common_codes, c1), b = lookup(*d.hq_codes, c2);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    EXPECT_EQ(d.fused.values[i], a.values[i] + 0.7f * b.values[i]);
  // alpha 0 collapses to the common path even with the gate open.
  EXPECT_EQ(dual_quantize(z, c1, c2, 0.9, 0.5, 0.0).fused, quantize_grid(z, c1).latent);
}

TEST(DualGate, SingleCellHalfAlpha) {
  const Codebook c1(CodebookRole::kCommon, 2, 2, {1, 1, -5, -5});
  const Codebook c2(CodebookRole::kHqPlus, 2, 2, {2, 0, 9, 9});
  LatentGrid z(1, 1, 2);
  z.values = {1.2f, 0.8f};
  const DualQuantized d = dual_quantize(z, c1, c2, 1.0, 0.0, 0.5);
  EXPECT_EQ(d.fused.values, (std::vector<float>{2.0f, 1.0f}));
}

TEST(Fuse, ElementwiseSum) {
  LatentGrid a(1, 1, 2), b(1, 1, 2);
  a.values = {1, 1};
  b.values = {2, 0};
  EXPECT_EQ(fuse(a, b, 0.5).values, (std::vector<float>{2, 1}));
  EXPECT_THROW(fuse(a, LatentGrid(1, 2, 2), 1.0), Error);
}

TEST(StraightThrough, ForwardIsQuantizedBackwardIsIdentity) {
  auto z = nn::Tensor::parameter({3, 2}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f});
  const auto zq = nn::Tensor::constant({3, 2}, {1, 2, 3, 4, 5, 6});
  const auto st = straight_through(z, zq);
  EXPECT_EQ(st.values(), zq.values());
  const std::vector<float> w{0.5f, -1.0f, 2.0f, 0.25f, 3.0f, -0.5f};
  ag::sum(ag::mul(st, nn::Tensor::constant({3, 2}, w))).backward();
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(z.grad()[i], w[i]);
}

TEST(StraightThrough, MatchesFiniteDifferenceOfIdentity) {
  // d/dz of sum(st(z, q)^2) equals 2 q under the identity surrogate.
  auto z = ag::Tensor<double>::parameter({4}, {0.3, -0.2, 0.9, 0.0});
  const auto q = ag::Tensor<double>::constant({4}, {1.0, -1.0, 0.5, 2.0});
  ag::sum(ag::square(ag::straight_through(z, q))).backward();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(z.grad()[i], 2.0 * q[i], 1e-12);
}

TEST(CodebookLosses, ValuesAndGradientRouting) {
  auto z = nn::Tensor::parameter({1, 2}, {0.0f, 0.0f});
  auto zq = nn::Tensor::parameter({1, 2}, {1.5f, 1.5f});
  const CodebookLosses l = codebook_update_losses(z, zq, 0.25);
  EXPECT_FLOAT_EQ(l.codebook.item(), 2.25f);
  EXPECT_FLOAT_EQ(l.commitment.item(), 0.5625f);

  l.codebook.backward();
  EXPECT_FALSE(z.has_grad() && (z.grad()[0] != 0.0f || z.grad()[1] != 0.0f));
  ASSERT_TRUE(zq.has_grad());
  EXPECT_FLOAT_EQ(zq.grad()[0], 1.5f);
  zq.zero_grad();
  l.commitment.backward();
  EXPECT_FLOAT_EQ(z.grad()[0], 0.25f * -1.5f);
  EXPECT_EQ(zq.grad()[0], 0.0f);

  const CodebookLosses zero = codebook_update_losses(z, zq, 0.0);
  EXPECT_EQ(zero.commitment.item(), 0.0f);
}

TEST(Tokens, RoundTrip) {
  const LatentGrid z = random_grid(3, 5, 4, 40);
  const nn::Tensor t = to_tokens(z);
  EXPECT_EQ(t.shape(), (ag::Shape{15, 4}));
  EXPECT_EQ(from_tokens(t, 3, 5), z);
}

}  // namespace
}  // namespace qprior

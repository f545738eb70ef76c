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

#include <algorithm>
#include <cmath>
#include <random>

#include "common.hpp"
#include "qprior/degrade.hpp"
#include "qprior/iqa.hpp"

namespace qprior {
namespace {

TEST(Normalize, EndpointsAndMidpoint) {
  const ScorerCalibration up{2.0, 6.0, Orientation::kHigherIsBetter};
  EXPECT_DOUBLE_EQ(normalize_score(2.0, up), 0.0);
  EXPECT_DOUBLE_EQ(normalize_score(6.0, up), 1.0);
  EXPECT_DOUBLE_EQ(normalize_score(4.0, up), 0.5);
  const ScorerCalibration down{2.0, 6.0, Orientation::kLowerIsBetter};
  EXPECT_DOUBLE_EQ(normalize_score(2.0, down), 1.0);
  EXPECT_DOUBLE_EQ(normalize_score(6.0, down), 0.0);
  EXPECT_DOUBLE_EQ(normalize_score(5.0, down), 0.25);
}

TEST(Normalize, ClipsOutsideBounds) {
  const ScorerCalibration up{0.0, 1.0, Orientation::kHigherIsBetter};
  EXPECT_DOUBLE_EQ(normalize_score(-3.0, up), 0.0);
  EXPECT_DOUBLE_EQ(normalize_score(9.0, up), 1.0);
}

TEST(Normalize, RejectsDegenerateCalibration) {
  EXPECT_THROW(normalize_score(0.5, ScorerCalibration{1.0, 1.0}), Error);
  EXPECT_THROW(normalize_score(0.5, ScorerCalibration{2.0, 1.0}), Error);
  EXPECT_THROW(normalize_score(std::nan(""), ScorerCalibration{}), Error);
}

TEST(Normalize, PropertyRangeAndMonotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int t = 0; t < 500; ++t) {
    double lo = u(rng), hi = u(rng);
    if (lo == hi) continue;
    if (lo > hi) std::swap(lo, hi);
    const auto o = (t % 2) ? Orientation::kHigherIsBetter : Orientation::kLowerIsBetter;
    const ScorerCalibration cal{lo, hi, o};
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const double na = normalize_score(a, cal), nb = normalize_score(b, cal);
    EXPECT_GE(na, 0.0);
    EXPECT_LE(na, 1.0);
    if (o == Orientation::kHigherIsBetter) EXPECT_LE(na, nb);
    else EXPECT_GE(na, nb);
  }
}

TEST(Ensemble, MeanOfThree) {
  EXPECT_NEAR(ensemble_score({0.2, 0.4, 0.9}), 0.5, 1e-15);
}

TEST(Ensemble, PermutationInvariant) {
  std::vector<double> v{0.2, 0.4, 0.9, 0.05, 0.7};
  std::sort(v.begin(), v.end());
  const double ref = ensemble_score(v);
  do {
    EXPECT_NEAR(ensemble_score(v), ref, 1e-15);
  } while (std::next_permutation(v.begin(), v.end()));
}

TEST(Ensemble, RejectsOutOfRangeAndEmpty) {
  EXPECT_THROW(ensemble_score({}), Error);
  EXPECT_THROW(ensemble_score({0.5, 1.5}), Error);
}

TEST(Ensemble, DuplicateScorerIsRejected) {
  try {
    ScorerEnsemble::from_names({"sharpness", "noise", "sharpness"});
    FAIL() << "duplicate accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUsage);
    EXPECT_NE(std::string(e.what()).find("sharpness"), std::string::npos);
  }
  EXPECT_THROW(make_scorer("nonexistent"), Error);
}

TEST(Ensemble, RecordIsMeanOfNormalizedRaw) {
  const ScorerEnsemble ens = ScorerEnsemble::defaults();
  const Image img = testing::scene(32, 4);
  const QualityRecord rec = score_image(img, ens);
  ASSERT_EQ(rec.raw_scores.size(), 3u);
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double n = normalize_score(rec.raw_scores[i], ens.calibrations()[i]);
    EXPECT_DOUBLE_EQ(rec.normalized_scores[i], n);
    acc += n;
  }
  EXPECT_NEAR(rec.ensemble, acc / 3.0, 1e-12);
  EXPECT_GE(rec.ensemble, 0.0);
  EXPECT_LE(rec.ensemble, 1.0);
}

TEST(Ensemble, DifferentiableMatchesRecord) {
  const ScorerEnsemble ens = ScorerEnsemble::defaults();
  const Image img = testing::scene(32, 8);
  const double graph = ens.ensemble(to_tensor<double>(img), false).item();
  EXPECT_NEAR(graph, score_image(img, ens).ensemble, 1e-9);
}

TEST(Scorers, ConstantImageHasZeroSharpness) {
  const ScorerEnsemble ens = ScorerEnsemble::from_names({"sharpness"});
  EXPECT_EQ(ens.raw_scores(Image(24, 24, 0.37f))[0], 0.0);
}

TEST(Scorers, NoiseEstimateTracksSigma) {
  // Gray noise: the same draw in all three channels keeps luminance sigma at 0.1.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal(0.0, 0.1);
  Image img(128, 128);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      const float v = static_cast<float>(0.5 + normal(rng));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
  const double sigma = ScorerEnsemble::from_names({"noise"}).raw_scores(img)[0];
  EXPECT_NEAR(sigma, 0.1, 0.01);
  EXPECT_LT(ScorerEnsemble::from_names({"noise"}).raw_scores(Image(32, 32, 0.5f))[0], 0.01);
}

TEST(Scorers, ExposurePeaksAtMidGray) {
  const ScorerEnsemble ens = ScorerEnsemble::from_names({"exposure"});
  EXPECT_NEAR(ens.raw_scores(Image(16, 16, 0.5f))[0], 1.0, 1e-6);
  const double dark = ens.raw_scores(Image(16, 16, 0.05f))[0];
  EXPECT_NEAR(dark, std::exp(-0.5 * std::pow(0.45 / 0.15, 2)), 1e-5);
  EXPECT_LT(dark, 0.02);
}

TEST(Scorers, BlurLowersSharpnessMonotonically) {
  const ScorerEnsemble ens = ScorerEnsemble::from_names({"sharpness"});
  const Image img = testing::scene(64, 2);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const double s = ens.raw_scores(gaussian_blur(img, sigma))[0];
    EXPECT_LT(s, prev) << "sigma " << sigma;
    prev = s;
  }
}

TEST(Scorers, GradientMatchesFiniteDifferences) {
  const ScorerEnsemble ens = ScorerEnsemble::defaults();
  const Image img = testing::random_image(12, 12, 3);
  auto x = to_tensor<double>(img);
  x.set_requires_grad(true);
  const auto s = ens.ensemble(x, true);
  s.backward();
  const std::vector<double> g(x.grad().begin(), x.grad().end());

  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  const double h = 1e-6;
  for (int t = 0; t < 10; ++t) {
    const std::size_t i = pick(rng);
    std::vector<double> v(x.values());
    v[i] += h;
    const double up = ens.ensemble(ag::Tensor<double>::constant(x.shape(), v), true).item();
    v[i] -= 2 * h;
    const double dn = ens.ensemble(ag::Tensor<double>::constant(x.shape(), v), true).item();
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(g[i], fd, 1e-3 * std::max(std::abs(fd), 1e-4)) << "pixel " << i;
  }
}

TEST(Calibration, PercentileFitOrdersBounds) {
  const auto scorers = default_scorers();
  std::vector<std::vector<double>> raw(scorers.size());
  for (int i = 0; i < 20; ++i) {
    const auto r = ScorerEnsemble::defaults().raw_scores(testing::scene(32, 100 + i));
    for (std::size_t k = 0; k < r.size(); ++k) raw[k].push_back(r[k]);
  }
  const auto cals = fit_calibrations(scorers, raw);
  ASSERT_EQ(cals.size(), scorers.size());
  for (std::size_t k = 0; k < cals.size(); ++k) {
    EXPECT_LT(cals[k].raw_min, cals[k].raw_max);
    EXPECT_EQ(cals[k].orientation, scorers[k].orientation());
  }
  EXPECT_DOUBLE_EQ(percentile_linear({1.0, 2.0, 3.0, 4.0, 5.0}, 0.5), 3.0);
}

}  // namespace
}  // namespace qprior

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

// Differentiable no-reference quality proxies and the normalized ensemble.
//
// Each proxy maps a [3, H, W] image tensor to a raw scalar. A calibration
// turns raw values into [0, 1] scores (1 = best); the ensemble is their mean.
#ifndef QPRIOR_IQA_HPP_
#define QPRIOR_IQA_HPP_

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qprior/image.hpp"
#include "qprior/ops.hpp"

namespace qprior {

enum class Orientation { kHigherIsBetter, kLowerIsBetter };

const char* orientation_name(Orientation o);
Orientation parse_orientation(const std::string& s);

struct ScorerCalibration {
  double raw_min = 0.0;
  double raw_max = 1.0;
  Orientation orientation = Orientation::kHigherIsBetter;
};

void validate(const ScorerCalibration& cal);

// Affine map of raw into [0, 1] under the calibration, hard-clamped.
double normalize_score(double raw, const ScorerCalibration& cal);

// Arithmetic mean; rejects an empty list.
double ensemble_score(const std::vector<double>& normalized);

enum class ScorerKind { kSharpness, kNoise, kExposure };

class ProxyScorer {
 public:
  explicit ProxyScorer(ScorerKind kind) : kind_(kind) {}

  ScorerKind kind() const { return kind_; }
  std::string name() const;
  Orientation orientation() const;
  // Bounds used when a corpus is too small to fit percentiles.
  ScorerCalibration default_calibration() const;

  template <class T>
  ag::Tensor<T> raw(const ag::Tensor<T>& image) const;

 private:
  ScorerKind kind_;
};

// Registry lookup by name: "sharpness", "noise", "exposure".
ProxyScorer make_scorer(const std::string& name);
std::vector<std::string> scorer_names();
std::vector<ProxyScorer> default_scorers();

struct QualityRecord {
  std::vector<double> raw_scores;
  std::vector<double> normalized_scores;
  double ensemble = 0.0;
};

class ScorerEnsemble {
 public:
  ScorerEnsemble(std::vector<ProxyScorer> scorers, std::vector<ScorerCalibration> calibrations);
  // Default proxies with their default calibrations.
  static ScorerEnsemble defaults();
  static ScorerEnsemble from_names(const std::vector<std::string>& names);

  std::size_t size() const { return scorers_.size(); }
  const std::vector<ProxyScorer>& scorers() const { return scorers_; }
  const std::vector<ScorerCalibration>& calibrations() const { return calibrations_; }
  std::vector<std::string> names() const;

  void set_calibrations(std::vector<ScorerCalibration> calibrations);

  // Raw proxy values in double precision, no graph.
  std::vector<double> raw_scores(const Image& img) const;
  QualityRecord record_from_raw(std::vector<double> raw) const;

  // Differentiable ensemble value. `smooth` swaps the hard clamp for a
  // saturating map with a non-vanishing gradient near the bounds.
  template <class T>
  ag::Tensor<T> ensemble(const ag::Tensor<T>& image, bool smooth) const;

 private:
  std::vector<ProxyScorer> scorers_;
  std::vector<ScorerCalibration> calibrations_;
};

QualityRecord score_image(const Image& img, const ScorerEnsemble& ens);

// Per-scorer 1st/99th percentile bounds over a corpus of raw score vectors;
// falls back to defaults when the spread is degenerate.
std::vector<ScorerCalibration> fit_calibrations(
    const std::vector<ProxyScorer>& scorers, const std::vector<std::vector<double>>& raw);

// Linear-interpolated percentile, q in [0, 1].
double percentile_linear(std::vector<double> values, double q);

// ------------------------------------------------------------ templates

namespace iqa_detail {

template <class T>
ag::Tensor<T> luminance(const ag::Tensor<T>& image) {
  return ag::channel_weighted_sum(image, std::vector<T>{T(0.299), T(0.587), T(0.114)});
}

template <class T>
ag::Tensor<T> fixed_kernel(int out, const std::vector<double>& k) {
  std::vector<T> v(k.begin(), k.end());
  return ag::Tensor<T>::constant({out, 1, 3, 3}, std::move(v));
}

// Smooth clip to [0, 1]: u - softplus(u - 1) + softplus(-u).
template <class T>
ag::Tensor<T> soft_clip01(const ag::Tensor<T>& u) {
  constexpr T k = T(40);
  return ag::add(ag::sub(u, ag::softplus(ag::add_scalar(u, T(-1)), k)),
                 ag::softplus(ag::scale(u, T(-1)), k));
}

}  // namespace iqa_detail

template <class T>
ag::Tensor<T> ProxyScorer::raw(const ag::Tensor<T>& image) const {
  require(image.rank() == 3 && image.dim(0) == 3 && image.dim(1) >= 3 && image.dim(2) >= 3,
          ErrorKind::kData, "scorer " + name() + ": expects a [3,H,W] image, H,W >= 3");
  const ag::Tensor<T> y = iqa_detail::luminance(image);
  switch (kind_) {
    case ScorerKind::kSharpness: {
      // Mean squared horizontal/vertical forward difference of luminance.
      const auto k = iqa_detail::fixed_kernel<T>(
          2, {0, 0, 0, 0, -1, 1, 0, 0, 0, /**/ 0, 0, 0, 0, -1, 0, 0, 1, 0});
      return ag::mean(ag::square(ag::conv2d(y, k, ag::Tensor<T>(), 1, 0)));
    }
    case ScorerKind::kNoise: {
      // Immerkaer's estimator: sigma = sqrt(pi/2)/6 * mean |Y * N|, with a
      // smooth absolute value.
      const auto k = iqa_detail::fixed_kernel<T>(1, {1, -2, 1, -2, 4, -2, 1, -2, 1});
      const auto r = ag::conv2d(y, k, ag::Tensor<T>(), 1, 0);
      return ag::scale(ag::mean(ag::smooth_abs(r, T(1e-2))),
                       static_cast<T>(std::sqrt(std::numbers::pi / 2.0) / 6.0));
    }
    case ScorerKind::kExposure: {
      // Gaussian bump on mean luminance, peak 1 at 0.5.
      constexpr T width = T(0.15);
      const auto mu = ag::mean(y);
      return ag::exp(ag::scale(ag::square(ag::add_scalar(mu, T(-0.5))),
                               T(-0.5) / (width * width)));
    }
  }
  fail(ErrorKind::kUsage, "unknown scorer kind");
}

template <class T>
ag::Tensor<T> ScorerEnsemble::ensemble(const ag::Tensor<T>& image, bool smooth) const {
  std::vector<ag::Tensor<T>> parts;
  parts.reserve(scorers_.size());
  for (std::size_t i = 0; i < scorers_.size(); ++i) {
    const auto& cal = calibrations_[i];
    ag::Tensor<T> raw;
    try {
      raw = scorers_[i].raw(image);
    } catch (const Error& e) {
      fail(e.kind(), "scorer " + scorers_[i].name() + " failed: " + e.what());
    }
    const T span = static_cast<T>(cal.raw_max - cal.raw_min);
    ag::Tensor<T> u;
    if (cal.orientation == Orientation::kHigherIsBetter) {
      u = ag::scale(ag::add_scalar(raw, static_cast<T>(-cal.raw_min)), T(1) / span);
    } else {
      u = ag::scale(ag::add_scalar(raw, static_cast<T>(-cal.raw_max)), T(-1) / span);
    }
    parts.push_back(smooth ? iqa_detail::soft_clip01(u) : ag::clamp(u, T(0), T(1)));
  }
  ag::Tensor<T> total = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) total = ag::add(total, parts[i]);
  return ag::scale(total, T(1) / static_cast<T>(parts.size()));
}

}  // namespace qprior

#endif  // QPRIOR_IQA_HPP_

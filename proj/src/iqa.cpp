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

#include "qprior/iqa.hpp"

#include <algorithm>
#include <set>

namespace qprior {

const char* orientation_name(Orientation o) {
  return o == Orientation::kHigherIsBetter ? "higher" : "lower";
}

Orientation parse_orientation(const std::string& s) {
  if (s == "higher") return Orientation::kHigherIsBetter;
  if (s == "lower") return Orientation::kLowerIsBetter;
  fail(ErrorKind::kData, "unknown orientation '" + s + "' (expected higher|lower)");
}

void validate(const ScorerCalibration& cal) {
  require(std::isfinite(cal.raw_min) && std::isfinite(cal.raw_max) && cal.raw_min < cal.raw_max,
          ErrorKind::kData, "calibration requires finite raw_min < raw_max");
}

double normalize_score(double raw, const ScorerCalibration& cal) {
  validate(cal);
  require(std::isfinite(raw), ErrorKind::kNumerical, "raw score is not finite");
  const double span = cal.raw_max - cal.raw_min;
  const double u = cal.orientation == Orientation::kHigherIsBetter ? (raw - cal.raw_min) / span
                                                                   : (cal.raw_max - raw) / span;
  return std::clamp(u, 0.0, 1.0);
}

double ensemble_score(const std::vector<double>& normalized) {
  require(!normalized.empty(), ErrorKind::kUsage, "ensemble of zero scores");
  double acc = 0.0;
  for (double s : normalized) {
    require(std::isfinite(s) && s >= 0.0 && s <= 1.0, ErrorKind::kData,
            "normalized score outside [0,1]");
    acc += s;
  }
  return acc / static_cast<double>(normalized.size());
}

std::string ProxyScorer::name() const {
  switch (kind_) {
    case ScorerKind::kSharpness: return "sharpness";
    case ScorerKind::kNoise: return "noise";
    case ScorerKind::kExposure: return "exposure";
  }
  return "?";
}

Orientation ProxyScorer::orientation() const {
  return kind_ == ScorerKind::kNoise ? Orientation::kLowerIsBetter
                                     : Orientation::kHigherIsBetter;
}

ScorerCalibration ProxyScorer::default_calibration() const {
  switch (kind_) {
    case ScorerKind::kSharpness: return {0.0, 0.01, orientation()};
    case ScorerKind::kNoise: return {0.0, 0.05, orientation()};
    case ScorerKind::kExposure: return {0.0, 1.0, orientation()};
  }
  return {};
}

ProxyScorer make_scorer(const std::string& name) {
  if (name == "sharpness") return ProxyScorer(ScorerKind::kSharpness);
  if (name == "noise") return ProxyScorer(ScorerKind::kNoise);
  if (name == "exposure") return ProxyScorer(ScorerKind::kExposure);
  fail(ErrorKind::kUsage, "unknown scorer '" + name + "' (known: sharpness, noise, exposure)");
}

std::vector<std::string> scorer_names() { return {"sharpness", "noise", "exposure"}; }

std::vector<ProxyScorer> default_scorers() {
  std::vector<ProxyScorer> out;
  for (const auto& n : scorer_names()) out.push_back(make_scorer(n));
  return out;
}

ScorerEnsemble::ScorerEnsemble(std::vector<ProxyScorer> scorers,
                               std::vector<ScorerCalibration> calibrations)
    : scorers_(std::move(scorers)) {
  require(!scorers_.empty(), ErrorKind::kUsage, "scorer ensemble needs at least one scorer");
  set_calibrations(std::move(calibrations));
}

ScorerEnsemble ScorerEnsemble::defaults() { return from_names(scorer_names()); }

ScorerEnsemble ScorerEnsemble::from_names(const std::vector<std::string>& names) {
  std::vector<ProxyScorer> scorers;
  std::vector<ScorerCalibration> cals;
  for (const auto& n : names) {
    scorers.push_back(make_scorer(n));
    cals.push_back(scorers.back().default_calibration());
  }
  return ScorerEnsemble(std::move(scorers), std::move(cals));
}

std::vector<std::string> ScorerEnsemble::names() const {
  std::vector<std::string> out;
  for (const auto& s : scorers_) out.push_back(s.name());
  return out;
}

void ScorerEnsemble::set_calibrations(std::vector<ScorerCalibration> calibrations) {
  require(calibrations.size() == scorers_.size(), ErrorKind::kUsage,
          "one calibration per scorer required");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < scorers_.size(); ++i) {
    require(seen.insert(scorers_[i].name()).second, ErrorKind::kUsage,
            "duplicate scorer name '" + scorers_[i].name() + "'");
    validate(calibrations[i]);
    require(calibrations[i].orientation == scorers_[i].orientation(), ErrorKind::kData,
            "calibration orientation does not match scorer " + scorers_[i].name());
  }
  calibrations_ = std::move(calibrations);
}

std::vector<double> ScorerEnsemble::raw_scores(const Image& img) const {
  validate(img);
  ag::NoGradGuard no_grad;
  const auto t = to_tensor<double>(img);
  std::vector<double> raw;
  for (const auto& s : scorers_) {
    double v;
    try {
      v = s.raw(t).item();
    } catch (const Error& e) {
      fail(e.kind(), "scorer " + s.name() + " failed: " + e.what());
    }
    require(std::isfinite(v), ErrorKind::kNumerical, "scorer " + s.name() + " returned non-finite");
    raw.push_back(v);
  }
  return raw;
}

QualityRecord ScorerEnsemble::record_from_raw(std::vector<double> raw) const {
  require(raw.size() == scorers_.size(), ErrorKind::kData, "raw score count mismatch");
  QualityRecord rec;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    rec.normalized_scores.push_back(normalize_score(raw[i], calibrations_[i]));
  }
  rec.raw_scores = std::move(raw);
  rec.ensemble = ensemble_score(rec.normalized_scores);
  return rec;
}

QualityRecord score_image(const Image& img, const ScorerEnsemble& ens) {
  return ens.record_from_raw(ens.raw_scores(img));
}

double percentile_linear(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::kData, "percentile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

std::vector<ScorerCalibration> fit_calibrations(
    const std::vector<ProxyScorer>& scorers, const std::vector<std::vector<double>>& raw) {
  std::vector<ScorerCalibration> out;
  for (std::size_t i = 0; i < scorers.size(); ++i) {
    std::vector<double> col;
    for (const auto& r : raw) col.push_back(r.at(i));
    ScorerCalibration cal = scorers[i].default_calibration();
    if (col.size() >= 2) {
      const double lo = percentile_linear(col, 0.01);
      const double hi = percentile_linear(col, 0.99);
      if (hi - lo > 1e-12 * std::max(1.0, std::abs(hi))) {
        cal.raw_min = lo;
        cal.raw_max = hi;
      }
    }
    out.push_back(cal);
  }
  return out;
}

}  // namespace qprior

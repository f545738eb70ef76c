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

// Paired-directory evaluation and score histograms.
#ifndef QPRIOR_EVAL_HPP_
#define QPRIOR_EVAL_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "qprior/iqa.hpp"

namespace qprior {

struct NamedImage {
  std::string name;
  Image image;
};

// Every *.png in `dir`, sorted by file name.
std::vector<NamedImage> load_png_dir(const std::filesystem::path& dir);

struct EvalRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  QualityRecord quality;  // of the restored image
};

struct EvalReport {
  std::vector<std::string> scorer_names;
  std::vector<EvalRow> rows;
  std::vector<std::string> unmatched;  // names present in only one directory
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_ensemble = 0.0;
  std::vector<double> mean_normalized;
};

// Matches files by name. Unmatched names are listed and skipped; no match
// at all is a data error.
EvalReport evaluate_dirs(const std::filesystem::path& restored,
                         const std::filesystem::path& reference, const ScorerEnsemble& ens);
EvalReport evaluate_pairs(const std::vector<NamedImage>& restored,
                          const std::vector<NamedImage>& reference, const ScorerEnsemble& ens);

std::string format_eval(const EvalReport& r);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges over [0, 1]
  std::vector<int> counts;
};

// Equal-width bins on [0, 1]; a value of exactly 1 lands in the last bin.
Histogram histogram01(const std::vector<double>& values, int bins);

}  // namespace qprior

#endif  // QPRIOR_EVAL_HPP_

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

// Scored dataset manifests.
//
// Text format, tab separated, one record per line:
//
//   #qprior-manifest  1
//   path  split  raw_<scorer>...  norm_<scorer>...  ensemble
//   <record lines>
//   #calibration  <scorer>  <raw_min>  <raw_max>  higher|lower
//   #skipped  <path>  <reason>
//   #threshold  <S_thr>  <quantile>
//
// The header row names the scorers. Reals are written with 17 significant
// digits so reading a manifest back reproduces every value exactly.
#ifndef QPRIOR_MANIFEST_HPP_
#define QPRIOR_MANIFEST_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "qprior/iqa.hpp"

namespace qprior {

struct ManifestEntry {
  std::string path;
  QualityRecord record;
  std::string split = "train";
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct DatasetManifest {
  std::vector<std::string> scorer_names;
  std::vector<ScorerCalibration> calibrations;
  std::vector<ManifestEntry> entries;
  std::vector<SkippedFile> skipped;
  double threshold = 0.0;
  double quantile = 0.8;

  ScorerEnsemble ensemble() const;
  std::vector<double> ensemble_scores() const;
};

// numpy-style "midpoint" quantile: mean of the two order statistics that
// bracket position q * (n - 1).
double quantile_midpoint(std::vector<double> values, double q);

struct ManifestOptions {
  double quantile = 0.8;
  std::string split = "train";
  // Fit per-scorer bounds on this corpus; otherwise keep the ensemble's.
  bool fit_calibration = true;
};

// Scores every *.png under image_dir (sorted by name). Undecodable files are
// skipped with a warning on stderr and listed in the footer.
DatasetManifest build_manifest(const std::filesystem::path& image_dir,
                               const ScorerEnsemble& scorers,
                               const ManifestOptions& options = {});

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(const std::string& text);

}  // namespace qprior

#endif  // QPRIOR_MANIFEST_HPP_

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

// Quality-score fine-tuning through the discrete bottleneck, and the
// pixel-space versus code-space over-optimization comparison.
#ifndef QPRIOR_QUALITY_OPT_HPP_
#define QPRIOR_QUALITY_OPT_HPP_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "qprior/transformer.hpp"

namespace qprior {

// One trajectory point. `space` is "continuous" or "discrete"; PSNR/SSIM are
// against the reference image the run was given.
struct OveroptRecord {
  int step = 0;
  std::string space;
  double score = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct OveroptReport {
  std::vector<OveroptRecord> rows;
};

struct OveroptRun {
  Image image;
  OveroptReport report;
  bool on_manifold = true;  // discrete runs: every logged output re-quantized to itself
};

// Plain gradient ascent x <- clip(x + step_size * grad S, 0, 1) of the
// ensemble score on raw pixels. Rows cover steps 0..steps; steps == 0
// returns the input and no rows. Without a reference, fidelity is measured
// against `img`.
OveroptRun continuous_overopt(const Image& img, const ScorerEnsemble& ens, int steps,
                              double step_size, const Image* reference = nullptr);

// Plain gradient ascent over an offset added to the conditioned latent;
// every output is decoded from argmax code lookups. steps == 0 returns the plain
// restoration and no rows. Without a reference, fidelity is measured
// against the plain restoration.
OveroptRun discrete_overopt(const Image& x_l, const RestorationModel& model,
                            const ScorerEnsemble& ens, int steps, double step_size,
                            double condition = 1.0, const Image* reference = nullptr);

struct OveroptOptions {
  int steps = 20;         // latent-offset steps
  int pixel_steps = 300;  // pixel ascent needs small steps to stay monotone
  double pixel_step = 0.5;
  double latent_step = 50.0;
  double condition = 1.0;
};

struct OveroptSummary {
  OveroptReport continuous;  // per-step means over images
  OveroptReport discrete;
  std::size_t images = 0;
  // Largest score gain both mean trajectories reach, and the PSNR each has
  // lost on first reaching it (linear interpolation between steps).
  double matched_gain = 0.0;
  double continuous_drop = 0.0;
  double discrete_drop = 0.0;
  bool discrete_on_manifold = true;
};

// Both branches start from the plain restoration of each LQ image and are
// measured against its ground truth.
OveroptSummary overopt_experiment(const std::vector<Image>& lq, const std::vector<Image>& gt,
                                  const RestorationModel& model, const ScorerEnsemble& ens,
                                  const OveroptOptions& opts);

// Mean of equally long trajectories, step by step.
OveroptReport mean_report(const std::vector<OveroptReport>& runs);

// PSNR lost (relative to step 0) when the score gain first reaches `gain`.
double drop_at_gain(const OveroptReport& r, double gain);

void write_overopt_report(const OveroptSummary& s, const std::filesystem::path& path);
// Two series of (score gain, PSNR drop), one per space.
void write_plot_data(const OveroptSummary& s, const std::filesystem::path& path);
std::string format_report(const OveroptReport& r);

struct FinetuneResult {
  RestorationModel model;
  std::vector<Stage2StepLog> steps;
  OveroptReport report;  // per-step batch means, space "discrete"
};

// Continues the stage-2 objective with the quality term active for `steps`
// batches. With lambda2 == 0 this is exactly continue_stage2.
FinetuneResult finetune_quality(const RestorationModel& model, const DatasetManifest& manifest,
                                const Stage2Config& cfg, int steps, std::ostream* log = nullptr);

}  // namespace qprior

#endif  // QPRIOR_QUALITY_OPT_HPP_

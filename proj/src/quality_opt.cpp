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

#include "qprior/quality_opt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qprior/metrics.hpp"

namespace qprior {
namespace {

OveroptRecord measure(int step, const char* space, const Image& img, const Image& ref,
                      const ScorerEnsemble& ens) {
  return {step, space, score_image(img, ens).ensemble, psnr(img, ref), ssim(img, ref)};
}

void freeze_all(const nn::ParamList& params) {
  for (const auto& [name, t] : params) {
    nn::Tensor h = t;
    h.set_requires_grad(false);
  }
}

}  // namespace

OveroptRun continuous_overopt(const Image& img, const ScorerEnsemble& ens, int steps,
                              double step_size, const Image* reference) {
  validate(img);
  require(steps >= 0, ErrorKind::kUsage, "step count must be non-negative");
  require(std::isfinite(step_size) && step_size > 0.0, ErrorKind::kUsage,
          "step size must be positive");
  OveroptRun run;
  run.image = img;
  if (steps == 0) return run;
  const Image& ref = reference ? *reference : img;
  const float eta = static_cast<float>(step_size);
  run.report.rows.push_back(measure(0, "continuous", run.image, ref, ens));
  for (int k = 1; k <= steps; ++k) {
    nn::Tensor x = nn::Tensor::parameter({3, img.height, img.width},
                                         to_tensor<float>(run.image).values());
    ens.ensemble(x, true).backward();
    const auto g = x.grad();
    const std::size_t hw = static_cast<std::size_t>(img.height) * img.width;
    for (std::size_t p = 0; p < hw; ++p)
      for (int c = 0; c < 3; ++c) {
        float& v = run.image.pixels[p * 3 + c];
        v = std::clamp(v + eta * g[c * hw + p], 0.0f, 1.0f);
      }
    run.report.rows.push_back(measure(k, "continuous", run.image, ref, ens));
  }
  return run;
}

OveroptRun discrete_overopt(const Image& x_l, const RestorationModel& model,
                            const ScorerEnsemble& ens, int steps, double step_size,
                            double condition, const Image* reference) {
  require(steps >= 0, ErrorKind::kUsage, "step count must be non-negative");
  require(std::isfinite(step_size) && step_size > 0.0, ErrorKind::kUsage,
          "step size must be positive");
  OveroptRun run;
  const RestoreTrace plain = model.trace(x_l, condition);
  run.image = plain.image;
  if (steps == 0) return run;
  const Image& ref = reference ? *reference : plain.image;

  RestorationModel m = model.clone();
  freeze_all(m.trainable_params());
  const int s = m.ae.config.latent_size();
  nn::Tensor base;
  {
    ag::NoGradGuard guard;
    base = m.conditioned_tokens(x_l, condition);
  }
  nn::Tensor delta = nn::const_param(base.shape(), 0.0f);
  const bool gate = condition > m.ae.threshold;
  const float eta = static_cast<float>(step_size);
  for (int k = 0; k <= steps; ++k) {
    const QualityTransformer::Output out = m.transformer.forward(ag::add(base, delta));
    RestoreTrace t;
    std::vector<int> c1, c2;
    nn::Tensor fused = code_features(out.common, m.ae.common, &c1);
    t.common_codes = CodeGrid{s, s, c1};
    t.common_features = lookup(t.common_codes, m.ae.common);
    if (gate) {
      nn::Tensor f2 = code_features(out.hq, m.ae.hq, &c2);
      t.hq_codes = CodeGrid{s, s, c2};
      t.hq_features = lookup(*t.hq_codes, m.ae.hq);
      if (m.ae.alpha != 0.0) fused = ag::add(fused, ag::scale(f2, static_cast<float>(m.ae.alpha)));
    }
    t.fused = from_tokens(fused, s, s);
    const nn::Tensor x = m.ae.decoder.forward(ag::tokens_to_chw(fused, s, s));
    run.image = from_tensor(x);
    run.on_manifold = run.on_manifold && on_code_manifold(t, m);
    run.report.rows.push_back(measure(k, "discrete", run.image, ref, ens));
    if (k == steps) break;
    ens.ensemble(x, true).backward();
    auto d = delta.mutable_data();
    const auto g = delta.grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += eta * g[i];
    delta.zero_grad();
  }
  return run;
}

OveroptReport mean_report(const std::vector<OveroptReport>& runs) {
  OveroptReport out;
  if (runs.empty()) return out;
  const std::size_t len = runs[0].rows.size();
  for (const auto& r : runs) {
    require(r.rows.size() == len, ErrorKind::kData, "trajectories differ in length");
  }
  for (std::size_t k = 0; k < len; ++k) {
    OveroptRecord m = runs[0].rows[k];
    m.score = m.psnr = m.ssim = 0.0;
    for (const auto& r : runs) {
      m.score += r.rows[k].score;
      m.psnr += r.rows[k].psnr;
      m.ssim += r.rows[k].ssim;
    }
    const double n = static_cast<double>(runs.size());
    m.score /= n;
    m.psnr /= n;
    m.ssim /= n;
    out.rows.push_back(m);
  }
  return out;
}

double drop_at_gain(const OveroptReport& r, double gain) {
  require(!r.rows.empty(), ErrorKind::kData, "empty trajectory");
  const double s0 = r.rows[0].score, p0 = r.rows[0].psnr;
  if (gain <= 0.0) return 0.0;
  for (std::size_t k = 1; k < r.rows.size(); ++k) {
    const double g1 = r.rows[k].score - s0;
    if (g1 < gain) continue;
    const double g0 = r.rows[k - 1].score - s0;
    const double d0 = p0 - r.rows[k - 1].psnr, d1 = p0 - r.rows[k].psnr;
    const double t = g1 > g0 ? (gain - g0) / (g1 - g0) : 1.0;
    return d0 + std::clamp(t, 0.0, 1.0) * (d1 - d0);
  }
  fail(ErrorKind::kData, "trajectory never reaches the requested score gain");
}

OveroptSummary overopt_experiment(const std::vector<Image>& lq, const std::vector<Image>& gt,
                                  const RestorationModel& model, const ScorerEnsemble& ens,
                                  const OveroptOptions& opts) {
  require(!lq.empty(), ErrorKind::kData, "over-optimization corpus is empty");
  require(lq.size() == gt.size(), ErrorKind::kData, "one reference per LQ image is required");
  require(opts.steps >= 1 && opts.pixel_steps >= 1, ErrorKind::kUsage,
          "over-optimization needs at least one step per branch");
  std::vector<OveroptReport> cont, disc;
  OveroptSummary s;
  s.images = lq.size();
  for (std::size_t i = 0; i < lq.size(); ++i) {
    OveroptRun d = discrete_overopt(lq[i], model, ens, opts.steps, opts.latent_step,
                                    opts.condition, &gt[i]);
    const Image start = model.restore(lq[i], opts.condition);
    OveroptRun c = continuous_overopt(start, ens, opts.pixel_steps, opts.pixel_step, &gt[i]);
    s.discrete_on_manifold = s.discrete_on_manifold && d.on_manifold;
    cont.push_back(std::move(c.report));
    disc.push_back(std::move(d.report));
  }
  s.continuous = mean_report(cont);
  s.discrete = mean_report(disc);
  auto max_gain = [](const OveroptReport& r) {
    double g = 0.0;
    for (const auto& row : r.rows) g = std::max(g, row.score - r.rows[0].score);
    return g;
  };
  s.matched_gain = std::min(max_gain(s.continuous), max_gain(s.discrete));
  s.continuous_drop = drop_at_gain(s.continuous, s.matched_gain);
  s.discrete_drop = drop_at_gain(s.discrete, s.matched_gain);
  return s;
}

std::string format_report(const OveroptReport& r) {
  std::ostringstream os;
  char buf[160];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "%d\t%s\t%.9g\t%.9g\t%.9g\n", row.step, row.space.c_str(),
                  row.score, row.psnr, row.ssim);
    os << buf;
  }
  return os.str();
}

void write_overopt_report(const OveroptSummary& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kData, "cannot write " + path.string());
  out << "step\tspace\tscore\tpsnr\tssim\n"
      << format_report(s.continuous) << format_report(s.discrete);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "#images\t%zu\n#matched_gain\t%.9g\n#psnr_drop_continuous\t%.9g\n"
                "#psnr_drop_discrete\t%.9g\n#discrete_on_manifold\t%d\n",
                s.images, s.matched_gain, s.continuous_drop, s.discrete_drop,
                s.discrete_on_manifold ? 1 : 0);
  out << buf;
  require(static_cast<bool>(out), ErrorKind::kData, "error writing " + path.string());
}

void write_plot_data(const OveroptSummary& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kData, "cannot write " + path.string());
  out << "space\tstep\tscore_gain\tpsnr_drop\n";
  char buf[160];
  for (const OveroptReport* r : {&s.continuous, &s.discrete}) {
    if (r->rows.empty()) continue;
    for (const auto& row : r->rows) {
      std::snprintf(buf, sizeof(buf), "%s\t%d\t%.9g\t%.9g\n", row.space.c_str(), row.step,
                    row.score - r->rows[0].score, r->rows[0].psnr - row.psnr);
      out << buf;
    }
  }
}

FinetuneResult finetune_quality(const RestorationModel& model, const DatasetManifest& manifest,
                                const Stage2Config& cfg, int steps, std::ostream* log) {
  Stage2Result r = continue_stage2(manifest, model, cfg, steps, log);
  FinetuneResult out{std::move(r.model), std::move(r.steps), {}};
  for (const auto& s : out.steps) {
    out.report.rows.push_back({s.step, "discrete", s.score, s.psnr, s.ssim});
  }
  return out;
}

}  // namespace qprior

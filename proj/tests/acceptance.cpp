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

// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--only 1,5,...] [--reuse]
//
// Criteria 5-8 and 10 drive the qprior CLI on a synthetic desk corpus
// (100 training images, 50 held-out LQ/GT pairs); the rest call the library.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "qprior/autoencoder.hpp"
#include "qprior/checkpoint.hpp"
#include "qprior/config.hpp"
#include "qprior/eval.hpp"
#include "qprior/iqa.hpp"
#include "qprior/manifest.hpp"
#include "qprior/metrics.hpp"
#include "qprior/quality_opt.hpp"
#include "qprior/transformer.hpp"
#include "qprior/vq.hpp"

namespace fs = std::filesystem;
using namespace qprior;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ------------------------------------------------------------------ 1-4, 9

Codebook random_codebook(std::mt19937_64& rng, int k, int d) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> e(static_cast<std::size_t>(k) * d);
  for (float& v : e) v = n(rng);
  return Codebook(CodebookRole::kCommon, k, d, std::move(e));
}

LatentGrid random_latent(std::mt19937_64& rng, int h, int w, int d) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  LatentGrid z(h, w, d);
  for (float& v : z.values) v = n(rng);
  return z;
}

int exhaustive(std::span<const float> v, const Codebook& cb) {
  int best = 0;
  double bd = INFINITY;
  for (int k = 0; k < cb.size(); ++k) {
    double s = 0.0;
    for (int j = 0; j < cb.dim(); ++j) {
      const double t = static_cast<double>(v[j]) - cb.entry(k)[j];
      s += t * t;
    }
    if (s < bd) bd = s, best = k;
  }
  return best;
}

Outcome quantizer_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> pk(1, 64), pd(1, 8), pg(1, 4);
  int mismatches = 0, cells = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int k = pk(rng), d = pd(rng), h = pg(rng), w = pg(rng);
    const Codebook cb = random_codebook(rng, k, d);
    const LatentGrid z = random_latent(rng, h, w, d);
    const Quantized q = quantize_grid(z, cb);
    for (std::size_t i = 0; i < z.cells(); ++i, ++cells) {
      const int want = exhaustive(z.cell(i), cb);
      if (q.codes.indices[i] != want || nearest_code(z.cell(i), cb).index != want) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          std::to_string(mismatches) + " mismatches over " + std::to_string(cells) +
              " cells in 1000 instances, " + fmt("%.3f", secs) + " s (limit 10 s)"};
}

Outcome gate_exactness() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int closed_bad = 0, alpha0_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = 8;
    const Codebook c1 = random_codebook(rng, 32, d);
    const Codebook c2 = random_codebook(rng, 32, d);
    const LatentGrid z = random_latent(rng, 4, 4, d);
    const double thr = u(rng);
    const double s = thr * u(rng);  // S <= S_thr
    const Quantized single = quantize_grid(z, c1);
    const DualQuantized a = dual_quantize(z, c1, c2, s, thr, 1.0);
    if (a.fused != single.latent || a.common_codes != single.codes || a.hq_codes) ++closed_bad;
    const DualQuantized b = dual_quantize(z, c1, c2, std::min(1.0, thr + 0.1), thr, 0.0);
    if (b.fused != single.latent) ++alpha0_bad;
  }
  return {closed_bad == 0 && alpha0_bad == 0,
          "100 latents: " + std::to_string(closed_bad) + " differ with S <= S_thr, " +
              std::to_string(alpha0_bad) + " differ with alpha = 0"};
}

Outcome loss_identities() {
  const int h = 16, w = 16, k = 256;
  CodeLogits uniform{h * w, k, k, std::vector<float>(h * w * k, 0.0f),
                     std::vector<float>(h * w * k, 0.0f)};
  CodeGrid targets{h, w, std::vector<int>(h * w)};
  std::mt19937_64 rng(3);
  for (int& t : targets.indices) t = static_cast<int>(rng() % k);
  const double li = loss_index(uniform, targets, targets);
  const double expect = 2.0 * h * w * std::log(static_cast<double>(k));
  const double err_index = std::abs(li - expect);

  const LatentGrid z = random_latent(rng, 4, 4, 8);
  const double lf = loss_feat(z, z);

  Stage2Config cfg;  // lambda1 0.5, lambda2 0.1
  const double tl = total_loss(1.0, 2.0, -3.0, cfg);
  const double err_total = std::abs(tl - 1.7);
  return {err_index <= 1e-5 && lf == 0.0 && err_total <= 1e-9 && cfg.lambda1 == 0.5 &&
              cfg.lambda2 == 0.1,
          "uniform L_index " + fmt("%.9f", li) + " vs " + fmt("%.9f", expect) + " (err " +
              fmt("%.2e", err_index) + "), L_feat(Z,Z) " + fmt("%g", lf) +
              ", total_loss(1,2,-3) " + fmt("%.12f", tl)};
}

Outcome gradient_checks() {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n(0.0f, 1.0f);
  // Straight-through on a linear loss: dL/dz equals the loss weights exactly.
  int st_bad = 0;
  for (int t = 0; t < 20; ++t) {
    std::vector<float> zv(24), qv(24), wv(24);
    for (int i = 0; i < 24; ++i) zv[i] = n(rng), qv[i] = n(rng), wv[i] = n(rng);
    auto z = nn::Tensor::parameter({6, 4}, zv);
    const auto q = nn::Tensor::constant({6, 4}, qv);
    const auto st = straight_through(z, q);
    if (st.values() != qv) ++st_bad;
    ag::sum(ag::mul(st, nn::Tensor::constant({6, 4}, wv))).backward();
    for (int i = 0; i < 24; ++i) st_bad += z.grad()[i] != wv[i];
  }

  // Scorer gradients against central differences, in double.
  const ScorerEnsemble ens = ScorerEnsemble::defaults();
  double worst = 0.0;
  int checked = 0;
  for (int img = 0; img < 3; ++img) {
    std::vector<double> v(3 * 16 * 16);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (double& x : v) x = u(rng);
    auto x = ag::Tensor<double>::parameter({3, 16, 16}, v);
    for (std::size_t s = 0; s < ens.size(); ++s) {
      const ScorerEnsemble one({ens.scorers()[s]}, {ens.calibrations()[s]});
      x.zero_grad();
      one.ensemble(x, true).backward();
      const std::vector<double> g(x.grad().begin(), x.grad().end());
      for (int t = 0; t < 10; ++t) {
        const std::size_t i = rng() % v.size();
        const double hstep = 1e-6;
        std::vector<double> p = v, m = v;
        p[i] += hstep;
        m[i] -= hstep;
        const double fd = (one.ensemble(ag::Tensor<double>::constant({3, 16, 16}, p), true).item() -
                           one.ensemble(ag::Tensor<double>::constant({3, 16, 16}, m), true).item()) /
                          (2 * hstep);
        const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
        worst = std::max(worst, std::abs(g[i] - fd) / scale);
        ++checked;
      }
    }
  }

  // L_feat gradient does not reach the target.
  auto zl = nn::Tensor::parameter({4, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
  auto tgt = nn::Tensor::parameter({4, 2}, {1, 1, 1, 1, 1, 1, 1, 1});
  loss_feat(zl, tgt).backward();
  bool target_zero = true;
  if (tgt.has_grad())
    for (float g : tgt.grad()) target_zero &= g == 0.0f;

  return {st_bad == 0 && worst <= 1e-3 && target_zero,
          "straight-through mismatches " + std::to_string(st_bad) + "; scorer gradient worst rel err " +
              fmt("%.2e", worst) + " over " + std::to_string(checked) +
              " pixels; dL_feat/dtarget zero: " + (target_zero ? "yes" : "no")};
}

Outcome ensemble_exactness() {
  const double e = ensemble_score({0.2, 0.4, 0.9});
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 8);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(len(rng));
    for (double& x : v) x = u(rng);
    const double ref = ensemble_score(v);
    for (int p = 0; p < 10; ++p) {
      std::shuffle(v.begin(), v.end(), rng);
      worst = std::max(worst, std::abs(ensemble_score(v) - ref));
    }
  }
  return {std::abs(e - 0.5) <= 1e-12 && worst <= 1e-12,
          "ensemble{0.2,0.4,0.9} = " + fmt("%.17g", e) + "; worst permutation difference " +
              fmt("%.2e", worst) + " over 100 sets"};
}

// ------------------------------------------------------------------ pipeline

struct Pipeline {
  fs::path work;
  bool reuse = false;
  std::string cli = QPRIOR_CLI_PATH;

  fs::path p(const std::string& s) const { return work / s; }
  std::string cfg() const { return "--config " + p("run.cfg").string(); }

  // Runs the CLI; output goes to a per-call log under work/logs.
  int run(const std::string& args, const std::string& tag) const {
    fs::create_directories(p("logs"));
    const std::string cmd =
        cli + " " + cfg() + " " + args + " > " + p("logs/" + tag + ".out").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 0) {
      std::cerr << "command failed (" << code << "): " << cmd << "\n";
      std::ifstream in(p("logs/" + tag + ".out"));
      std::cerr << in.rdbuf() << "\n";
    }
    return code;
  }

  void write_config() const {
    fs::create_directories(work);
    std::ofstream(p("run.cfg")) << "data_dir = " << p("train/gt").string() << "\n"
                                << "manifest = " << p("manifest.tsv").string() << "\n"
                                << "output_dir = " << p("runs").string() << "\n"
                                << "stage1_checkpoint = " << p("runs/stage1.qck").string() << "\n"
                                << "stage2_checkpoint = " << p("runs/stage2.qck").string() << "\n"
                                << "finetune_checkpoint = " << p("runs/finetune.qck").string()
                                << "\n";
  }
};

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, '\t')) cols.push_back(c);
    rows.push_back(std::move(cols));
  }
  return rows;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Epoch means of the per-step reconstruction loss, weighted by batch size.
std::vector<double> epoch_recon_from_log(const fs::path& log, int n, int batch) {
  std::map<int, std::pair<double, int>> acc;
  std::map<int, int> pos;
  const auto rows = read_tsv(log);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 3) continue;
    const int epoch = std::stoi(rows[i][1]);
    const int start = pos[epoch];
    const int bsz = std::min(batch, n - start);
    pos[epoch] += bsz;
    acc[epoch].first += std::stod(rows[i][2]) * bsz;
    acc[epoch].second += bsz;
  }
  std::vector<double> out;
  for (auto& [e, v] : acc) out.push_back(v.first / v.second);
  return out;
}

struct HeldOut {
  std::vector<std::string> names;
  std::vector<Image> lq, gt;
};

HeldOut load_heldout(const Pipeline& pl) {
  HeldOut h;
  for (auto& img : load_png_dir(pl.p("heldout/lq"))) {
    h.names.push_back(img.name);
    h.lq.push_back(std::move(img.image));
    h.gt.push_back(load_png(pl.p("heldout/gt") / h.names.back()));
  }
  return h;
}

struct RestoreStats {
  double score = 0.0;
  double psnr = 0.0;
  std::vector<Image> images;
};

RestoreStats restore_all(const RestorationModel& m, const HeldOut& h, const ScorerEnsemble& ens,
                         double condition) {
  RestoreStats s;
  for (std::size_t i = 0; i < h.lq.size(); ++i) {
    Image out = quantize_8bit(m.restore(h.lq[i], condition));
    s.score += score_image(out, ens).ensemble;
    s.psnr += psnr(out, h.gt[i]);
    s.images.push_back(std::move(out));
  }
  s.score /= static_cast<double>(h.lq.size());
  s.psnr /= static_cast<double>(h.lq.size());
  return s;
}

bool exists_all(const Pipeline& pl, std::initializer_list<const char*> files) {
  if (!pl.reuse) return false;
  for (const char* f : files)
    if (!fs::exists(pl.p(f))) return false;
  return true;
}

void report(int id, const Outcome& o, int& failures) {
  std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
            << std::endl;
  failures += !o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  Pipeline pl;
  pl.work = fs::current_path() / "acceptance_run";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      pl.work = fs::absolute(argv[++i]);
    } else if (a == "--reuse") {
      pl.reuse = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string t;
      while (std::getline(ss, t, ',')) only.insert(std::stoi(t));
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--only 1,2,...] [--reuse]\n";
      return 1;
    }
  }
  auto want = [&](int id) { return only.empty() || only.count(id); };
  int failures = 0;

  try {
    if (want(1)) report(1, quantizer_oracle(), failures);
    if (want(2)) report(2, gate_exactness(), failures);
    if (want(3)) report(3, loss_identities(), failures);
    if (want(4)) report(4, gradient_checks(), failures);
    if (want(9)) report(9, ensemble_exactness(), failures);

    const bool need_pipeline = want(5) || want(6) || want(7) || want(8) || want(10);
    if (!need_pipeline) return failures == 0 ? 0 : 1;

    if (!pl.reuse) fs::remove_all(pl.work);
    pl.write_config();
    auto step = [&](const std::string& args, const std::string& tag) {
      if (pl.run(args, tag) != 0) throw std::runtime_error("pipeline step failed: " + tag);
    };

    // Corpus and manifest.
    if (!exists_all(pl, {"manifest.tsv", "heldout/lq"})) {
      step("--seed 0 synth --out " + pl.p("train").string() + " --count 100", "synth_train");
      step("--seed 1 synth --out " + pl.p("heldout").string() + " --count 50 --lq", "synth_heldout");
      step("manifest", "manifest");
    }
    const DatasetManifest manifest = read_manifest(pl.p("manifest.tsv"));
    const ScorerEnsemble ens = manifest.ensemble();
    const RunConfig defaults;

    // Stage 1.
    double stage1_secs = 0.0;
    if (!exists_all(pl, {"runs/stage1.qck", "runs/stage1_metrics.tsv"})) {
      const auto t0 = Clock::now();
      step("train-stage1", "stage1");
      stage1_secs = seconds_since(t0);
      std::ofstream(pl.p("runs/stage1_seconds")) << stage1_secs;
    } else {
      std::ifstream(pl.p("runs/stage1_seconds")) >> stage1_secs;
    }
    if (want(5)) {
      const int n = static_cast<int>(manifest.entries.size());
      const auto recon = epoch_recon_from_log(pl.p("runs/stage1_metrics.tsv"), n,
                                              defaults.stage1().batch_size);
      const double drop = recon.size() >= 2 ? 1.0 - recon.back() / recon.front() : 0.0;

      // Gate check: force every score under the threshold on a small subset.
      DatasetManifest low = manifest;
      low.entries.resize(8);
      low.threshold = 1.0;
      Stage1Config c = defaults.stage1();
      c.batch_size = 4;
      c.epochs = 1;
      const Stage1Result one = train_stage1(low, defaults.autoencoder(), c);
      c.epochs = 3;
      const Stage1Result three = train_stage1(low, defaults.autoencoder(), c);
      const bool untouched = three.hq_updates == 0 && !three.hq_trained && one.model.hq == three.model.hq;

      report(5,
             {recon.size() == 50 && drop >= 0.5 && untouched && stage1_secs <= 1800.0,
              "recon " + fmt("%.4f", recon.empty() ? 0.0 : recon.front()) + " (epoch 1) -> " +
                  fmt("%.4f", recon.empty() ? 0.0 : recon.back()) + " (epoch " +
                  std::to_string(recon.size()) + "), drop " + fmt("%.1f%%", 100 * drop) +
                  " (need >= 50%); HQ+ untouched with all S <= S_thr: " +
                  (untouched ? "yes" : "no") + "; stage-1 runtime " + fmt("%.0f", stage1_secs) +
                  " s (limit 1800 s)"},
             failures);
    }

    // Stage 2.
    if (!exists_all(pl, {"runs/stage2.qck"})) step("train-stage2", "stage2");
    const HeldOut held = load_heldout(pl);
    const RestorationModel stage2 = RestorationModel::load(load_checkpoint(pl.p("runs/stage2.qck")));
    RestoreStats at0, at1;
    if (want(6) || want(7)) {
      at0 = restore_all(stage2, held, ens, 0.0);
      at1 = restore_all(stage2, held, ens, 1.0);
    }
    if (want(6)) {
      const RestoreStats mid = restore_all(stage2, held, ens, 0.5);
      std::size_t changed = 0, total = 0;
      for (std::size_t i = 0; i < at0.images.size(); ++i)
        for (std::size_t k = 0; k < at0.images[i].pixels.size(); ++k, ++total)
          changed += std::abs(at1.images[i].pixels[k] - at0.images[i].pixels[k]) >= 1.0f / 255.0f - 1e-6f;
      report(6,
             {at1.score > at0.score && at0.score <= mid.score && mid.score <= at1.score,
              "mean ensemble over " + std::to_string(held.lq.size()) + " held-out: S=0 " +
                  fmt("%.6f", at0.score) + ", S=0.5 " + fmt("%.6f", mid.score) + ", S=1 " +
                  fmt("%.6f", at1.score)},
             failures);
      std::cout << "info: conditioning sensitivity, pixels differing by >= 1/255 between S=1 and S=0: "
                << fmt("%.2f%%", 100.0 * changed / std::max<std::size_t>(total, 1)) << std::endl;

      // Index accuracy against stage-1 codes of the GT.
      std::size_t hit = 0, cells = 0;
      for (std::size_t i = 0; i < held.lq.size(); ++i) {
        const double s = score_image(held.gt[i], ens).ensemble;
        const LatentGrid z = stage2.target_encoder.encode(held.gt[i]);
        const DualQuantized q = dual_quantize(z, stage2.ae.common, stage2.ae.hq, s,
                                              stage2.ae.threshold, stage2.ae.alpha);
        const RestoreTrace t = stage2.trace(held.lq[i], s);
        for (std::size_t k = 0; k < q.common_codes.indices.size(); ++k, ++cells)
          hit += t.common_codes.indices[k] == q.common_codes.indices[k];
      }
      std::cout << "info: held-out common-code argmax accuracy vs stage-1 GT codes: "
                << fmt("%.1f%%", 100.0 * hit / std::max<std::size_t>(cells, 1)) << std::endl;
    }

    // Quality fine-tuning.
    if (want(7)) {
      if (!exists_all(pl, {"runs/finetune.qck"})) step("finetune", "finetune");
      const RestorationModel ft = RestorationModel::load(load_checkpoint(pl.p("runs/finetune.qck")));
      const RestoreStats after = restore_all(ft, held, ens, 1.0);
      const double rel = after.score / at1.score - 1.0;
      const double drop = at1.psnr - after.psnr;
      report(7,
             {rel >= 0.02 && drop < 1.0,
              std::to_string(defaults.finetune_steps()) + " steps: mean ensemble " +
                  fmt("%.6f", at1.score) + " -> " + fmt("%.6f", after.score) + " (" +
                  fmt("%+.2f%%", 100 * rel) + ", need >= +2%), PSNR " + fmt("%.3f", at1.psnr) +
                  " -> " + fmt("%.3f", after.psnr) + " dB (drop " + fmt("%.3f", drop) +
                  ", need < 1)"},
             failures);
    }

    // Over-optimization contrast.
    if (want(8)) {
      if (!exists_all(pl, {"runs/overopt_report.tsv"})) {
        step("overopt --lq-dir " + pl.p("heldout/lq").string() + " --gt-dir " +
                 pl.p("heldout/gt").string(),
             "overopt");
      }
      std::map<std::string, double> meta;
      for (const auto& row : read_tsv(pl.p("runs/overopt_report.tsv")))
        if (row.size() == 2 && !row[0].empty() && row[0][0] == '#') meta[row[0]] = std::stod(row[1]);
      const double gain = meta["#matched_gain"];
      const double cont = meta["#psnr_drop_continuous"], disc = meta["#psnr_drop_discrete"];
      const bool manifold = meta["#discrete_on_manifold"] == 1.0;
      report(8,
             {meta["#images"] == 50 && gain > 0.0 && cont > disc && manifold,
              "at matched gain " + fmt("%.6f", gain) + ": PSNR drop continuous " +
                  fmt("%.6f", cont) + " dB vs discrete " + fmt("%.6f", disc) +
                  " dB; discrete outputs on code manifold: " + (manifold ? "yes" : "no")},
             failures);
    }

    // Reproducibility: reruns of the same commands give identical logs.
    if (want(10)) {
      std::vector<std::string> diffs;
      auto twice = [&](const std::string& args, const std::string& tag,
                       const std::vector<std::string>& files) {
        std::vector<std::string> first;
        for (int k = 0; k < 2; ++k) {
          step(args, tag + "_" + std::to_string(k));
          for (std::size_t f = 0; f < files.size(); ++f) {
            // Checkpoint headers carry a save timestamp; compare their payloads.
            const fs::path file = pl.p(files[f]);
            std::string body;
            if (file.extension() == ".qck") {
              const auto bytes = read_checkpoint_payload(file);
              body.assign(bytes.begin(), bytes.end());
            } else {
              body = slurp(file);
            }
            if (k == 0) first.push_back(body);
            else if (body != first[f] || body.empty()) diffs.push_back(tag + ":" + files[f]);
          }
        }
      };
      const std::string s1 = "--set stage1_checkpoint=" + pl.p("repro/stage1.qck").string();
      const std::string s2 = "--set stage2_checkpoint=" + pl.p("repro/stage2.qck").string();
      twice("--set manifest=" + pl.p("repro/manifest.tsv").string() + " manifest", "manifest",
            {"repro/manifest.tsv"});
      twice(s1 + " --set stage1.epochs=2 train-stage1 --log " + pl.p("repro/stage1.tsv").string(),
            "stage1", {"repro/stage1.tsv", "repro/stage1.qck"});
      twice(s1 + " " + s2 + " --set stage2.epochs=1 train-stage2 --log " +
                pl.p("repro/stage2.tsv").string(),
            "stage2", {"repro/stage2.tsv", "repro/stage2.qck"});
      twice(s2 + " --set finetune_checkpoint=" + pl.p("repro/ft.qck").string() +
                " --set finetune.steps=5 finetune --log " + pl.p("repro/ft.tsv").string(),
            "finetune", {"repro/ft.tsv", "repro/ft.qck"});
      twice("overopt --lq-dir " + pl.p("heldout/lq").string() + " --gt-dir " +
                pl.p("heldout/gt").string() + " --limit 3 --report " +
                pl.p("repro/overopt.tsv").string() + " --plot-data " +
                pl.p("repro/plot.tsv").string(),
            "overopt", {"repro/overopt.tsv", "repro/plot.tsv"});
      std::string detail = "manifest, train-stage1, train-stage2, finetune and overopt each run twice: ";
      if (diffs.empty()) {
        detail += "all logs and checkpoint payloads bit-identical";
      } else {
        detail += "differences in";
        for (const auto& d : diffs) detail += " " + d;
      }
      report(10, {diffs.empty(), detail}, failures);
    }
  } catch (const std::exception& e) {
    std::cout << "error: " << e.what() << std::endl;
    return 2;
  }
  return failures == 0 ? 0 : 1;
}

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

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "common.hpp"
#include "qprior/config.hpp"
#include "qprior/eval.hpp"
#include "qprior/metrics.hpp"

namespace qprior {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

// ------------------------------------------------------------------ config

TEST(Config, UnknownKeyListsValidKeys) {
  try {
    RunConfig::parse("lambda1 = 0.5\nlamda2 = 0.1\n", "run.cfg");
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_EQ(e.kind(), ErrorKind::kUsage);
    EXPECT_NE(msg.find("run.cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lamda2"), std::string::npos);
    EXPECT_NE(msg.find("lambda2"), std::string::npos);
    EXPECT_NE(msg.find("stage1.epochs"), std::string::npos);
  }
}

TEST(Config, ParsesCommentsAndOverrides) {
  RunConfig c = RunConfig::parse("# comment\nlambda1 = 0.25  # trailing\n\nseed=9\n");
  EXPECT_DOUBLE_EQ(c.get_double("lambda1"), 0.25);
  EXPECT_EQ(c.seed(), 9u);
  c.apply_override("stage2.epochs=3");
  EXPECT_EQ(c.stage2().epochs, 3);
  EXPECT_THROW(c.apply_override("no_equals_sign"), Error);
  EXPECT_THROW(RunConfig::parse("just words\n"), Error);
  EXPECT_EQ(RunConfig::parse(c.dump()).dump(), c.dump());
}

TEST(Config, DefaultsMatchLibraryDefaults) {
  const RunConfig c;
  EXPECT_DOUBLE_EQ(c.get_double("quantile"), 0.8);
  EXPECT_DOUBLE_EQ(c.stage2().lambda1, 0.5);
  EXPECT_DOUBLE_EQ(c.stage2().lambda2, 0.1);
  EXPECT_EQ(c.autoencoder().codebook_size, 256);
  EXPECT_EQ(c.get_list("scorers"), scorer_names());
}

TEST(Config, BadValuesAreUsageErrors) {
  RunConfig c;
  c.set("stage1.epochs", "many");
  EXPECT_THROW(c.stage1(), Error);
  c = RunConfig();
  c.set("quantile", "1.5");
  EXPECT_THROW(c.manifest_options(), Error);
}

// ------------------------------------------------------------------ metrics

double naive_ssim(const Image& a, const Image& b) {
  const int k = 7;
  double total = 0.0;
  int count = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y + k <= a.height; ++y)
      for (int x = 0; x + k <= a.width; ++x) {
        double mx = 0, my = 0;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            mx += a.at(y + dy, x + dx, c);
            my += b.at(y + dy, x + dx, c);
          }
        mx /= k * k;
        my /= k * k;
        double vx = 0, vy = 0, cv = 0;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const double u = a.at(y + dy, x + dx, c) - mx, v = b.at(y + dy, x + dx, c) - my;
            vx += u * u;
            vy += v * v;
            cv += u * v;
          }
        vx /= k * k - 1;
        vy /= k * k - 1;
        cv /= k * k - 1;
        const double c1 = 1e-4, c2 = 9e-4;
        total += (2 * mx * my + c1) * (2 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return total / count;
}

double naive_psnr(const Image& a, const Image& b) {
  double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  const double mse = se / a.pixels.size();
  return mse == 0 ? kPsnrCap : std::min(kPsnrCap, -10.0 * std::log10(mse));
}

TEST(Metrics, ConstantOffsetGivesTwentyDecibels) {
  Image a = testing::random_image(16, 16, 1);
  for (float& v : a.pixels) v *= 0.8f;
  Image b = a;
  for (float& v : b.pixels) v += 0.1f;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-4);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
}

TEST(Metrics, SsimIdentityAndSymmetry) {
  const Image a = testing::scene(24, 1), b = testing::scene(24, 2);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LT(ssim(a, b), 1.0);
  EXPECT_THROW(ssim(a, testing::scene(32, 1)), Error);
  EXPECT_THROW(ssim(Image(5, 5), Image(5, 5)), Error);
}

TEST(Metrics, AgreeWithDirectComputation) {
  for (int i = 0; i < 20; ++i) {
    const Image a = testing::scene(20, 100 + i);
    Image b = a;
    std::mt19937_64 rng(i);
    std::normal_distribution<float> n(0.0f, 0.05f * (i % 5 + 1));
    for (float& v : b.pixels) v = std::clamp(v + n(rng), 0.0f, 1.0f);
    EXPECT_NEAR(psnr(a, b), naive_psnr(a, b), 1e-6) << i;
    EXPECT_NEAR(ssim(a, b), naive_ssim(a, b), 1e-4) << i;
  }
}

// ------------------------------------------------------------------ eval

TEST(Eval, PairsByNameAndReportsUnmatched) {
  const ScorerEnsemble ens = ScorerEnsemble::defaults();
  const std::vector<NamedImage> restored{{"a.png", testing::scene(16, 1)},
                                         {"b.png", testing::scene(16, 2)},
                                         {"only_r.png", testing::scene(16, 3)}};
  const std::vector<NamedImage> reference{{"b.png", testing::scene(16, 2)},
                                          {"a.png", testing::scene(16, 5)},
                                          {"only_g.png", testing::scene(16, 4)}};
  const EvalReport r = evaluate_pairs(restored, reference, ens);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.unmatched, (std::vector<std::string>{"only_g.png", "only_r.png"}));
  for (const auto& row : r.rows) {
    if (row.name == "b.png") EXPECT_EQ(row.psnr, kPsnrCap);
    if (row.name == "a.png") EXPECT_LT(row.psnr, kPsnrCap);
  }
  EXPECT_NEAR(r.mean_psnr, (r.rows[0].psnr + r.rows[1].psnr) / 2, 1e-12);
  EXPECT_THROW(evaluate_pairs({{"x.png", testing::scene(16, 1)}}, reference, ens), Error);
}

TEST(Eval, HistogramBinsCoverUnitInterval) {
  const Histogram h = histogram01({0.0, 0.05, 0.5, 0.99, 1.0}, 10);
  ASSERT_EQ(h.edges.size(), 11u);
  EXPECT_EQ(h.counts[0], 2);
  EXPECT_EQ(h.counts[5], 1);
  EXPECT_EQ(h.counts[9], 2);
  EXPECT_THROW(histogram01({0.5}, 0), Error);
}

// ------------------------------------------------------------------ CLI

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + QPRIOR_CLI_PATH + " " + args + " 2>&1";
  CliRun r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const fs::path d = dir_->path();
    std::ofstream(d / "run.cfg") << "data_dir = " << (d / "corpus/gt").string() << "\n"
                                 << "manifest = " << (d / "manifest.tsv").string() << "\n"
                                 << "output_dir = " << (d / "out").string() << "\n"
                                 << "stage1_checkpoint = " << (d / "s1.qck").string() << "\n"
                                 << "stage2_checkpoint = " << (d / "s2.qck").string() << "\n"
                                 << "finetune_checkpoint = " << (d / "ft.qck").string() << "\n"
                                 << "ae.input_size = 16\nae.latent_channels = 8\n"
                                 << "ae.base_width = 4\nae.codebook_size = 16\n"
                                 << "ae.hq_codebook_size = 16\n"
                                 << "stage1.epochs = 2\nstage1.batch_size = 4\n"
                                 << "stage2.epochs = 1\nstage2.batch_size = 4\n"
                                 << "transformer.depth = 1\ntransformer.heads = 2\n"
                                 << "transformer.width = 16\nfinetune.steps = 2\n"
                                 << "overopt.steps = 2\noveropt.pixel_steps = 2\n";
    cfg_ = new std::string("--config " + (d / "run.cfg").string());
    setup_ = new std::string;
    for (const std::string& step :
         {"synth --out " + (d / "corpus").string() + " --count 8 --lq", std::string("manifest"),
          std::string("train-stage1")}) {
      const CliRun r = run_cli(*cfg_ + " " + step);
      *setup_ += r.out;
      if (r.code != 0) *setup_ += "\nFAILED: " + step + "\n";
    }
  }
  static void TearDownTestSuite() {
    delete setup_;
    delete cfg_;
    delete dir_;
  }
  void SetUp() override { ASSERT_EQ(setup_->find("FAILED"), std::string::npos) << *setup_; }
  static fs::path path(const std::string& s) { return dir_->path() / s; }
  static TempDir* dir_;
  static std::string* cfg_;
  static std::string* setup_;
};
TempDir* CliPipeline::dir_ = nullptr;
std::string* CliPipeline::cfg_ = nullptr;
std::string* CliPipeline::setup_ = nullptr;

TEST_F(CliPipeline, Stage2WithoutStage1CheckpointIsDataError) {
  const CliRun r = run_cli(*cfg_ + " --set stage1_checkpoint=" + path("missing.qck").string() +
                        " train-stage2");
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("stage1 checkpoint required"), std::string::npos) << r.out;
}

TEST_F(CliPipeline, UsageErrors) {
  CliRun r = run_cli(*cfg_ + " --set nonsense_key=1 score " + path("corpus/gt/img_0000.png").string());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("valid keys"), std::string::npos);
  EXPECT_EQ(run_cli("").code, 1);
  EXPECT_EQ(run_cli("frobnicate").code, 1);
  EXPECT_EQ(run_cli(*cfg_ + " restore --input x.png --output y.png --score 1.5").code, 1);
}

TEST_F(CliPipeline, ConfigComesFromEnvironment) {
  const std::string env = "QPRIOR_CONFIG=" + path("run.cfg").string();
  const CliRun r = run_cli("score " + path("corpus/gt/img_0000.png").string(), env);
  EXPECT_EQ(r.code, 0) << r.out;
  const CliRun bad = run_cli("score " + path("corpus/gt/img_0000.png").string(),
                          "QPRIOR_CONFIG=" + path("nope.cfg").string());
  EXPECT_EQ(bad.code, 1) << bad.out;
}

TEST_F(CliPipeline, ScoreSingleImage) {
  const CliRun r = run_cli(*cfg_ + " score " + path("corpus/gt/img_0001.png").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("ensemble"), std::string::npos);
  EXPECT_NE(r.out.find("img_0001.png"), std::string::npos);
  EXPECT_NE(r.out.find("#histogram"), std::string::npos);
  const CliRun missing = run_cli(*cfg_ + " score " + path("nothing.png").string());
  EXPECT_EQ(missing.code, 2) << missing.out;
}

TEST_F(CliPipeline, Stage2SweepRestoreEval) {
  CliRun r = run_cli(*cfg_ + " train-stage2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(path("out/stage2_metrics.tsv")));

  r = run_cli(*cfg_ + " sweep --input " + path("corpus/lq/img_0002.png").string() +
              " --out-dir " + path("sweep").string());
  ASSERT_EQ(r.code, 0) << r.out;
  int pngs = 0;
  for (const auto& e : fs::directory_iterator(path("sweep"))) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 3);
  std::ifstream tsv(path("sweep/sweep.tsv"));
  std::string line;
  int rows = 0;
  while (std::getline(tsv, line))
    if (!line.empty() && line[0] != '#' && line.rfind("condition", 0) != 0) ++rows;
  EXPECT_EQ(rows, 3);

  r = run_cli(*cfg_ + " restore --input " + path("corpus/lq").string() + " --output " +
              path("restored").string() + " --score 0.8");
  ASSERT_EQ(r.code, 0) << r.out;
  r = run_cli(*cfg_ + " eval --restored " + path("restored").string() + " --reference " +
              path("corpus/gt").string() + " --out " + path("eval.tsv").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(path("eval.tsv")));

  r = run_cli(*cfg_ + " finetune");
  EXPECT_EQ(r.code, 0) << r.out;
  r = run_cli(*cfg_ + " overopt --lq-dir " + path("corpus/lq").string() + " --gt-dir " +
              path("corpus/gt").string() + " --limit 2");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(path("out/overopt_report.tsv")));
}

TEST_F(CliPipeline, CorruptCheckpointIsDataError) {
  std::ofstream(path("junk.qck")) << "garbage";
  const CliRun r = run_cli(*cfg_ + " restore --input " + path("corpus/lq/img_0000.png").string() +
                        " --output " + path("x.png").string() + " --checkpoint " +
                        path("junk.qck").string());
  EXPECT_EQ(r.code, 2) << r.out;
}

}  // namespace
}  // namespace qprior

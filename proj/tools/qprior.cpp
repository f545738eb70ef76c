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

// qprior: command-line entry point for the quality-prior restoration
// pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "qprior/config.hpp"
#include "qprior/corpus.hpp"
#include "qprior/eval.hpp"
#include "qprior/metrics.hpp"
#include "qprior/runtime.hpp"

namespace fs = std::filesystem;
using namespace qprior;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed;
};

RunConfig make_config(const Globals& g) {
  RunConfig cfg;
  std::string path = g.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar)) path = env;
  }
  if (!path.empty()) cfg = RunConfig::load(path);
  for (const auto& o : g.overrides) cfg.apply_override(o);
  if (!g.seed.empty()) cfg.set("seed", g.seed);
  cfg.seed();  // validates
  return cfg;
}

std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Calibrated ensemble: an explicit manifest, else the configured manifest
// if it exists, else the configured scorers with default bounds.
ScorerEnsemble load_ensemble(const RunConfig& cfg, const std::string& manifest_path) {
  if (!manifest_path.empty()) return read_manifest(manifest_path).ensemble();
  const fs::path configured = cfg.get("manifest");
  if (fs::exists(configured)) return read_manifest(configured).ensemble();
  const auto names = cfg.get_list("scorers");
  require(!names.empty(), ErrorKind::kUsage, "the scorer list is empty");
  return ScorerEnsemble::from_names(names);
}

void require_checkpoint(const std::string& path, const char* stage) {
  if (!fs::exists(path)) {
    fail(ErrorKind::kData, std::string(stage) + " checkpoint required (not found: " + path + ")");
  }
}

std::ofstream open_log(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kData, "cannot write " + path.string());
  return out;
}

void save_bundle(const CheckpointBundle& b, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(b, path);
}

std::vector<double> parse_scores(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorKind::kUsage, "not a score: '" + item + "'");
    }
  }
  require(!out.empty(), ErrorKind::kUsage, "empty score list");
  for (double s : out) {
    require(s >= 0.0 && s <= 1.0, ErrorKind::kUsage, "score " + fmt(s, "%g") + " is outside [0,1]");
  }
  return out;
}

std::string score_tag(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%.3f", s);
  return buf;
}

// ------------------------------------------------------------ commands

int cmd_synth(const RunConfig& cfg, const std::string& out, int count, bool lq, double pristine) {
  CorpusOptions o;
  o.count = count;
  o.size = cfg.get_int("ae.input_size");
  o.seed = cfg.seed();
  o.write_lq = lq;
  o.pristine_fraction = pristine;
  o.degradation = cfg.degradation();
  const auto items = write_corpus(out, o);
  std::cout << "wrote " << items.size() << " images to " << out << "\n";
  return 0;
}

int cmd_score(const RunConfig& cfg, const std::vector<std::string>& inputs,
              const std::string& scorers, const std::string& manifest, int bins) {
  ScorerEnsemble ens = [&] {
    if (!scorers.empty() || manifest.empty()) {
      std::vector<std::string> names;
      std::stringstream ss(scorers.empty() ? cfg.get("scorers") : scorers);
      std::string n;
      while (std::getline(ss, n, ',')) {
        if (!n.empty()) names.push_back(n);
      }
      require(!names.empty(), ErrorKind::kUsage, "the scorer list is empty");
      return ScorerEnsemble::from_names(names);
    }
    return read_manifest(manifest).ensemble();
  }();
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& de : fs::directory_iterator(in))
        if (de.is_regular_file() && de.path().extension() == ".png") found.push_back(de.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  require(!files.empty(), ErrorKind::kData, "no images to score");
  std::cout << "path";
  for (const auto& n : ens.names()) std::cout << "\traw_" << n;
  for (const auto& n : ens.names()) std::cout << "\tnorm_" << n;
  std::cout << "\tensemble\tdisplay\n";
  std::vector<double> ensembles;
  for (const auto& f : files) {
    QualityRecord r;
    try {
      r = score_image(load_png(f), ens);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kData) throw;
      std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
      continue;
    }
    std::cout << f.string();
    for (double v : r.raw_scores) std::cout << '\t' << fmt(v, "%.9g");
    for (double v : r.normalized_scores) std::cout << '\t' << fmt(v);
    std::cout << '\t' << fmt(r.ensemble) << '\t' << fmt(10.0 * r.ensemble, "%.2f") << '\n';
    ensembles.push_back(r.ensemble);
  }
  require(!ensembles.empty(), ErrorKind::kData, "no decodable images");
  const Histogram h = histogram01(ensembles, bins);
  std::cout << "#histogram\tlo\thi\tcount\n";
  for (int b = 0; b < bins; ++b) {
    std::cout << "#bin\t" << fmt(h.edges[b], "%.4f") << '\t' << fmt(h.edges[b + 1], "%.4f") << '\t'
              << h.counts[b] << '\n';
  }
  return 0;
}

int cmd_manifest(const RunConfig& cfg, const std::string& data_dir, const std::string& out,
                 const std::string& split) {
  ManifestOptions o = cfg.manifest_options();
  o.split = split;
  const auto names = cfg.get_list("scorers");
  require(!names.empty(), ErrorKind::kUsage, "the scorer list is empty");
  const DatasetManifest m =
      build_manifest(data_dir.empty() ? cfg.get("data_dir") : data_dir,
                     ScorerEnsemble::from_names(names), o);
  const fs::path path = out.empty() ? fs::path(cfg.get("manifest")) : fs::path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_manifest(m, path);
  int above = 0;
  for (double s : m.ensemble_scores()) above += s > m.threshold;
  std::cout << "manifest " << path.string() << ": " << m.entries.size() << " images, "
            << m.skipped.size() << " skipped, S_thr " << fmt(m.threshold) << " (quantile "
            << fmt(m.quantile, "%g") << "), " << above << " above threshold\n";
  return 0;
}

int cmd_train_stage1(const RunConfig& cfg, const std::string& log_path) {
  const DatasetManifest m = read_manifest(cfg.get("manifest"));
  const fs::path log = log_path.empty() ? fs::path(cfg.get("output_dir")) / "stage1_metrics.tsv"
                                        : fs::path(log_path);
  std::ofstream out = open_log(log);
  Stage1Result r = train_stage1(m, cfg.autoencoder(), cfg.stage1(), &out);
  CheckpointBundle b;
  b.stage = "stage1";
  r.model.store(b);
  b.config["hq_plus_trained"] = r.hq_trained ? "true" : "false";
  b.config["seed"] = cfg.get("seed");
  save_bundle(b, cfg.get("stage1_checkpoint"));
  std::cout << "stage1: " << r.steps.size() << " steps, recon " << fmt(r.epoch_recon.front())
            << " (epoch 1) -> " << fmt(r.epoch_recon.back()) << " (epoch "
            << r.epoch_recon.size() << "), hq_updates " << r.hq_updates << "\n"
            << "checkpoint " << cfg.get("stage1_checkpoint") << ", log " << log.string() << "\n";
  return 0;
}

int cmd_train_stage2(const RunConfig& cfg, const std::string& log_path) {
  require_checkpoint(cfg.get("stage1_checkpoint"), "stage1");
  const CheckpointBundle s1 = load_checkpoint(cfg.get("stage1_checkpoint"));
  require(s1.stage == "stage1", ErrorKind::kData,
          "stage1 checkpoint required; " + cfg.get("stage1_checkpoint") + " is a " + s1.stage +
              " checkpoint");
  const VqAutoencoder ae = VqAutoencoder::load(s1);
  const DatasetManifest m = read_manifest(cfg.get("manifest"));
  const fs::path log = log_path.empty() ? fs::path(cfg.get("output_dir")) / "stage2_metrics.tsv"
                                        : fs::path(log_path);
  std::ofstream out = open_log(log);
  Stage2Result r = train_stage2(m, ae, cfg.stage2(), &out);
  CheckpointBundle b;
  b.stage = "stage2";
  r.model.store(b);
  b.config["seed"] = cfg.get("seed");
  save_bundle(b, cfg.get("stage2_checkpoint"));
  if (!r.epoch_index.empty()) {
    std::cout << "stage2: " << r.steps.size() << " steps, index loss "
              << fmt(r.epoch_index.front()) << " (epoch 1) -> " << fmt(r.epoch_index.back())
              << " (epoch " << r.epoch_index.size() << ")\n";
  }
  std::cout << "checkpoint " << cfg.get("stage2_checkpoint") << ", log " << log.string() << "\n";
  return 0;
}

int cmd_finetune(const RunConfig& cfg, const std::string& log_path) {
  require_checkpoint(cfg.get("stage2_checkpoint"), "stage2");
  const CheckpointBundle s2 = load_checkpoint(cfg.get("stage2_checkpoint"));
  const RestorationModel model = RestorationModel::load(s2);
  const DatasetManifest m = read_manifest(cfg.get("manifest"));
  const fs::path log = log_path.empty() ? fs::path(cfg.get("output_dir")) / "finetune_metrics.tsv"
                                        : fs::path(log_path);
  std::ofstream out = open_log(log);
  FinetuneResult r = finetune_quality(model, m, cfg.finetune(), cfg.finetune_steps(), &out);
  CheckpointBundle b;
  b.stage = "finetune";
  r.model.store(b);
  b.config["seed"] = cfg.get("seed");
  save_bundle(b, cfg.get("finetune_checkpoint"));
  if (!r.steps.empty()) {
    std::cout << "finetune: " << r.steps.size() << " steps, batch score "
              << fmt(r.steps.front().score) << " -> " << fmt(r.steps.back().score) << "\n";
  }
  std::cout << "checkpoint " << cfg.get("finetune_checkpoint") << ", log " << log.string() << "\n";
  return 0;
}

RestorationModel load_model(const RunConfig& cfg, const std::string& ckpt) {
  const std::string path = ckpt.empty() ? cfg.get("stage2_checkpoint") : ckpt;
  require_checkpoint(path, "stage2");
  return RestorationModel::load(load_checkpoint(path));
}

int cmd_restore(const RunConfig& cfg, const std::string& input, const std::string& output,
                double score, const std::string& ckpt) {
  require(std::isfinite(score) && score >= 0.0 && score <= 1.0, ErrorKind::kUsage,
          "--score must lie in [0,1]");
  const RestorationModel model = load_model(cfg, ckpt);
  if (fs::is_directory(input)) {
    fs::create_directories(output);
    const auto images = load_png_dir(input);
    require(!images.empty(), ErrorKind::kData, "no PNG images in " + input);
    for (const auto& img : images) save_png(model.restore(img.image, score), fs::path(output) / img.name);
    std::cout << "restored " << images.size() << " images into " << output << "\n";
  } else {
    const fs::path out(output);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_png(model.restore(load_png(input), score), out);
    std::cout << "restored " << input << " -> " << output << " (score " << fmt(score, "%g") << ")\n";
  }
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& input, const std::string& scores_list,
              const std::string& out_dir, const std::string& ckpt, const std::string& manifest) {
  const std::vector<double> scores = parse_scores(scores_list);
  const RestorationModel model = load_model(cfg, ckpt);
  const ScorerEnsemble ens = load_ensemble(cfg, manifest);
  std::vector<NamedImage> inputs;
  if (fs::is_directory(input)) {
    inputs = load_png_dir(input);
  } else {
    inputs.push_back({fs::path(input).filename().string(), load_png(input)});
  }
  require(!inputs.empty(), ErrorKind::kData, "no PNG images in " + input);
  fs::create_directories(out_dir);
  std::ostringstream table;
  table << "condition";
  for (const auto& n : ens.names()) table << '\t' << n;
  table << "\tensemble\n";
  for (double s : scores) {
    std::vector<double> mean(ens.size(), 0.0);
    double ensemble = 0.0;
    for (const auto& in : inputs) {
      const Image out = model.restore(in.image, s);
      const fs::path stem = fs::path(in.name).stem();
      save_png(out, fs::path(out_dir) / (stem.string() + "_" + score_tag(s) + ".png"));
      const QualityRecord r = score_image(quantize_8bit(out), ens);
      for (std::size_t i = 0; i < ens.size(); ++i) mean[i] += r.normalized_scores[i];
      ensemble += r.ensemble;
    }
    const double n = static_cast<double>(inputs.size());
    table << fmt(s, "%g");
    for (double v : mean) table << '\t' << fmt(v / n);
    table << '\t' << fmt(ensemble / n) << '\n';
  }
  std::ofstream(fs::path(out_dir) / "sweep.tsv") << table.str();
  std::cout << table.str();
  return 0;
}

int cmd_overopt(const RunConfig& cfg, const std::string& lq_dir, const std::string& gt_dir,
                const std::string& ckpt, const std::string& manifest, const std::string& report,
                const std::string& plot, int limit) {
  const RestorationModel model = load_model(cfg, ckpt);
  const ScorerEnsemble ens = load_ensemble(cfg, manifest);
  const auto lq = load_png_dir(lq_dir);
  const auto gt = load_png_dir(gt_dir);
  std::vector<Image> lq_images, gt_images;
  for (const auto& l : lq) {
    const auto it = std::find_if(gt.begin(), gt.end(), [&](const NamedImage& g) { return g.name == l.name; });
    if (it == gt.end()) {
      std::cerr << "warning: no reference for " << l.name << "; skipped\n";
      continue;
    }
    lq_images.push_back(l.image);
    gt_images.push_back(it->image);
    if (limit > 0 && static_cast<int>(lq_images.size()) == limit) break;
  }
  const OveroptSummary s = overopt_experiment(lq_images, gt_images, model, ens, cfg.overopt());
  const fs::path out_dir = cfg.get("output_dir");
  const fs::path rp = report.empty() ? out_dir / "overopt_report.tsv" : fs::path(report);
  const fs::path pp = plot.empty() ? out_dir / "overopt_plot.tsv" : fs::path(plot);
  for (const fs::path& p : {rp, pp})
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_overopt_report(s, rp);
  write_plot_data(s, pp);
  std::cout << "overopt: " << s.images << " images, matched gain " << fmt(s.matched_gain)
            << ", PSNR drop continuous " << fmt(s.continuous_drop) << " dB, discrete "
            << fmt(s.discrete_drop) << " dB, discrete outputs on code manifold: "
            << (s.discrete_on_manifold ? "yes" : "no") << "\n"
            << "report " << rp.string() << ", plot data " << pp.string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& restored, const std::string& reference,
             const std::string& manifest, const std::string& out) {
  const EvalReport r = evaluate_dirs(restored, reference, load_ensemble(cfg, manifest));
  for (const auto& u : r.unmatched) std::cerr << "warning: unmatched file " << u << "\n";
  const std::string text = format_eval(r);
  if (!out.empty()) {
    std::ofstream f(out);
    require(static_cast<bool>(f), ErrorKind::kData, "cannot write " + out);
    f << text;
  }
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"qprior: quality-prior image restoration with dual codebooks"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path,
                 std::string("config file (default: $") + kConfigEnvVar + ")");
  app.add_option("--set", g.overrides, "override a config key, key=value (repeatable)");
  app.add_option("--seed", g.seed, "override the config seed");

  int code = 0;
  auto run = [&](auto&& fn) { return [&, fn] { code = fn(make_config(g)); }; };

  // synth
  std::string synth_out;
  int synth_count = 100;
  bool synth_lq = false;
  double synth_pristine = 0.4;
  auto* synth = app.add_subcommand("synth", "generate a synthetic desk corpus");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", synth_count, "number of images");
  synth->add_flag("--lq", synth_lq, "also write degraded copies under lq/");
  synth->add_option("--pristine-fraction", synth_pristine, "share of pristine references");
  synth->callback(run([&](const RunConfig& c) {
    return cmd_synth(c, synth_out, synth_count, synth_lq, synth_pristine);
  }));

  // score
  std::vector<std::string> score_inputs;
  std::string score_scorers, score_manifest;
  int score_bins = 10;
  auto* score = app.add_subcommand("score", "score images and print a histogram");
  score->add_option("inputs", score_inputs, "PNG files or directories")->required();
  score->add_option("--scorers", score_scorers, "comma-separated scorer names");
  score->add_option("--manifest", score_manifest, "take scorers and calibration from a manifest");
  score->add_option("--bins", score_bins, "histogram bins");
  score->callback(run([&](const RunConfig& c) {
    return cmd_score(c, score_inputs, score_scorers, score_manifest, score_bins);
  }));

  // manifest
  std::string man_dir, man_out, man_split = "train";
  auto* man = app.add_subcommand("manifest", "score a directory and write a manifest");
  man->add_option("--data-dir", man_dir, "image directory (default: data_dir)");
  man->add_option("--out", man_out, "manifest path (default: manifest)");
  man->add_option("--split", man_split, "split tag for every entry");
  man->callback(run([&](const RunConfig& c) { return cmd_manifest(c, man_dir, man_out, man_split); }));

  // training
  std::string s1_log, s2_log, ft_log;
  auto* s1 = app.add_subcommand("train-stage1", "learn the autoencoder and both codebooks");
  s1->add_option("--log", s1_log, "metrics log path");
  s1->callback(run([&](const RunConfig& c) { return cmd_train_stage1(c, s1_log); }));
  auto* s2 = app.add_subcommand("train-stage2", "learn the score-conditioned code predictor");
  s2->add_option("--log", s2_log, "metrics log path");
  s2->callback(run([&](const RunConfig& c) { return cmd_train_stage2(c, s2_log); }));
  auto* ft = app.add_subcommand("finetune", "fine-tune with the quality loss");
  ft->add_option("--log", ft_log, "metrics log path");
  ft->callback(run([&](const RunConfig& c) { return cmd_finetune(c, ft_log); }));

  // restore / sweep
  std::string r_in, r_out, r_ckpt;
  double r_score = 1.0;
  auto* rest = app.add_subcommand("restore", "restore an image or a directory");
  rest->add_option("--input", r_in, "LQ image or directory")->required();
  rest->add_option("--output", r_out, "output image or directory")->required();
  rest->add_option("--score", r_score, "condition score in [0,1]");
  rest->add_option("--checkpoint", r_ckpt, "checkpoint (default: stage2_checkpoint)");
  rest->callback(run([&](const RunConfig& c) { return cmd_restore(c, r_in, r_out, r_score, r_ckpt); }));

  std::string sw_in, sw_scores = "0,0.5,1", sw_out, sw_ckpt, sw_manifest;
  auto* sweep = app.add_subcommand("sweep", "restore under several condition scores");
  sweep->add_option("--input", sw_in, "LQ image or directory")->required();
  sweep->add_option("--scores", sw_scores, "comma-separated condition scores");
  sweep->add_option("--out-dir", sw_out, "output directory")->required();
  sweep->add_option("--checkpoint", sw_ckpt, "checkpoint (default: stage2_checkpoint)");
  sweep->add_option("--manifest", sw_manifest, "manifest supplying the scorer calibration");
  sweep->callback(run([&](const RunConfig& c) {
    return cmd_sweep(c, sw_in, sw_scores, sw_out, sw_ckpt, sw_manifest);
  }));

  // overopt
  std::string oo_lq, oo_gt, oo_ckpt, oo_manifest, oo_report, oo_plot;
  int oo_limit = 0;
  auto* oo = app.add_subcommand("overopt", "pixel-space vs code-space score ascent");
  oo->add_option("--lq-dir", oo_lq, "LQ inputs")->required();
  oo->add_option("--gt-dir", oo_gt, "references with matching names")->required();
  oo->add_option("--checkpoint", oo_ckpt, "checkpoint (default: stage2_checkpoint)");
  oo->add_option("--manifest", oo_manifest, "manifest supplying the scorer calibration");
  oo->add_option("--report", oo_report, "report path");
  oo->add_option("--plot-data", oo_plot, "plot-data path");
  oo->add_option("--limit", oo_limit, "use at most this many images (0 = all)");
  oo->callback(run([&](const RunConfig& c) {
    return cmd_overopt(c, oo_lq, oo_gt, oo_ckpt, oo_manifest, oo_report, oo_plot, oo_limit);
  }));

  // eval
  std::string ev_res, ev_ref, ev_manifest, ev_out;
  auto* ev = app.add_subcommand("eval", "PSNR, SSIM and quality scores of restored images");
  ev->add_option("--restored", ev_res, "restored directory")->required();
  ev->add_option("--reference", ev_ref, "reference directory")->required();
  ev->add_option("--manifest", ev_manifest, "manifest supplying the scorer calibration");
  ev->add_option("--out", ev_out, "also write the report here");
  ev->callback(run([&](const RunConfig& c) { return cmd_eval(c, ev_res, ev_ref, ev_manifest, ev_out); }));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return code;
}

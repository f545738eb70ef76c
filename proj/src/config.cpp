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

#include "qprior/config.hpp"

#include <fstream>
#include <sstream>

namespace qprior {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string valid_keys() {
  std::string out;
  for (const auto& k : config_keys()) out += "\n  " + k.name + " (default " + k.default_value + ")";
  return out;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "run seed; data, init and degradation streams derive from it"},
      {"data_dir", "data/gt", "directory of ground-truth PNGs"},
      {"manifest", "runs/manifest.tsv", "scored dataset manifest"},
      {"output_dir", "runs", "directory for logs and reports"},
      {"stage1_checkpoint", "runs/stage1.qck", "stage-1 checkpoint path"},
      {"stage2_checkpoint", "runs/stage2.qck", "stage-2 checkpoint path"},
      {"finetune_checkpoint", "runs/finetune.qck", "fine-tuned checkpoint path"},
      {"scorers", "sharpness,noise,exposure", "comma-separated scorer names"},
      {"quantile", "0.8", "quantile of ensemble scores used as the HQ+ threshold"},
      {"alpha", "1.0", "HQ+ balance weight shared by both stages"},
      {"ae.input_size", "64", "image side in pixels"},
      {"ae.downsample_factor", "4", "encoder downsampling (power of two)"},
      {"ae.latent_channels", "64", "latent channels c = codebook dimension"},
      {"ae.base_width", "16", "channels at full resolution"},
      {"ae.residual_blocks", "1", "residual blocks per scale"},
      {"ae.codebook_size", "256", "entries in the common codebook"},
      {"ae.hq_codebook_size", "256", "entries in the HQ+ codebook"},
      {"adam.beta1", "0.9", "Adam first-moment decay"},
      {"adam.beta2", "0.999", "Adam second-moment decay"},
      {"stage1.epochs", "50", "stage-1 epochs"},
      {"stage1.batch_size", "32", "stage-1 batch size"},
      {"stage1.learning_rate", "0.001", "stage-1 learning rate"},
      {"stage1.commitment_beta", "0.25", "commitment loss weight"},
      {"stage1.gate_all", "false", "treat every sample as HQ+"},
      {"stage2.epochs", "30", "stage-2 epochs"},
      {"stage2.batch_size", "32", "stage-2 batch size"},
      {"stage2.learning_rate", "0.0005", "stage-2 learning rate"},
      {"stage2.grad_clip", "0", "global gradient-norm clip, 0 = off"},
      {"lambda1", "0.5", "weight of the code-index loss"},
      {"lambda2", "0.1", "weight of the quality loss"},
      {"transformer.depth", "4", "transformer blocks"},
      {"transformer.heads", "4", "attention heads"},
      {"transformer.width", "64", "transformer width"},
      {"transformer.mlp_ratio", "4", "MLP hidden width / width"},
      {"finetune.steps", "500", "quality fine-tuning steps"},
      {"finetune.batch_size", "4", "quality fine-tuning batch size"},
      {"finetune.learning_rate", "0.000003", "quality fine-tuning learning rate"},
      {"finetune.lambda2", "0.1", "quality loss weight during fine-tuning"},
      {"finetune.train_decoder", "true", "let the quality loss adapt the decoder"},
      {"degrade.blur_min", "1.0", "minimum blur sigma"},
      {"degrade.blur_max", "2.0", "maximum blur sigma"},
      {"degrade.noise_min", "0.01", "minimum noise sigma"},
      {"degrade.noise_max", "0.04", "maximum noise sigma"},
      {"degrade.factor", "2", "downsampling factor"},
      {"degrade.quality_min", "40", "minimum compression quality"},
      {"degrade.quality_max", "80", "maximum compression quality"},
      {"overopt.steps", "20", "latent-offset ascent steps per image"},
      {"overopt.pixel_steps", "300", "pixel-space ascent steps per image"},
      {"overopt.pixel_step", "0.5", "pixel-space gradient ascent rate"},
      {"overopt.latent_step", "50", "latent-offset gradient ascent rate"},
      {"overopt.condition", "1.0", "condition score for over-optimization"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kUsage, origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(e.kind(), origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kUsage, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::kUsage, "unknown config key '" + key + "'; valid keys:" + valid_keys());
  it->second = value;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, ErrorKind::kUsage,
          "override '" + assignment + "' is not of the form key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::kUsage, "unknown config key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used == s.size() && v >= INT32_MIN && v <= INT32_MAX) return static_cast<int>(v);
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kUsage, "config key " + key + ": expected an integer, got '" + s + "'");
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kUsage, "config key " + key + ": expected a number, got '" + s + "'");
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  fail(ErrorKind::kUsage, "config key " + key + ": expected true or false, got '" + s + "'");
}

uint64_t RunConfig::seed() const {
  const std::string& s = get("seed");
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used == s.size() && s[0] != '-') return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kUsage, "config key seed: expected a non-negative integer, got '" + s + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

EncoderDecoderConfig RunConfig::autoencoder() const {
  EncoderDecoderConfig c;
  c.input_size = get_int("ae.input_size");
  c.downsample_factor = get_int("ae.downsample_factor");
  c.latent_channels = get_int("ae.latent_channels");
  c.base_width = get_int("ae.base_width");
  c.residual_blocks = get_int("ae.residual_blocks");
  c.codebook_size = get_int("ae.codebook_size");
  c.hq_codebook_size = get_int("ae.hq_codebook_size");
  c.validate();
  return c;
}

Stage1Config RunConfig::stage1() const {
  Stage1Config c;
  c.epochs = get_int("stage1.epochs");
  c.batch_size = get_int("stage1.batch_size");
  c.learning_rate = static_cast<float>(get_double("stage1.learning_rate"));
  c.beta1 = static_cast<float>(get_double("adam.beta1"));
  c.beta2 = static_cast<float>(get_double("adam.beta2"));
  c.commitment_beta = get_double("stage1.commitment_beta");
  c.alpha = get_double("alpha");
  c.gate_all = get_bool("stage1.gate_all");
  c.seed = seed();
  return c;
}

Stage2Config RunConfig::stage2() const {
  Stage2Config c;
  c.lambda1 = get_double("lambda1");
  c.lambda2 = get_double("lambda2");
  c.transformer.depth = get_int("transformer.depth");
  c.transformer.heads = get_int("transformer.heads");
  c.transformer.width = get_int("transformer.width");
  c.transformer.mlp_ratio = get_int("transformer.mlp_ratio");
  c.epochs = get_int("stage2.epochs");
  c.batch_size = get_int("stage2.batch_size");
  c.learning_rate = static_cast<float>(get_double("stage2.learning_rate"));
  c.grad_clip = static_cast<float>(get_double("stage2.grad_clip"));
  c.beta1 = static_cast<float>(get_double("adam.beta1"));
  c.beta2 = static_cast<float>(get_double("adam.beta2"));
  c.seed = seed();
  c.degradation = degradation();
  c.validate();
  return c;
}

Stage2Config RunConfig::finetune() const {
  Stage2Config c = stage2();
  c.batch_size = get_int("finetune.batch_size");
  c.learning_rate = static_cast<float>(get_double("finetune.learning_rate"));
  c.lambda2 = get_double("finetune.lambda2");
  c.train_decoder = get_bool("finetune.train_decoder");
  c.validate();
  return c;
}

int RunConfig::finetune_steps() const {
  const int s = get_int("finetune.steps");
  require(s >= 0, ErrorKind::kUsage, "finetune.steps must be non-negative");
  return s;
}

DegradationRange RunConfig::degradation() const {
  DegradationRange r;
  r.blur_min = get_double("degrade.blur_min");
  r.blur_max = get_double("degrade.blur_max");
  r.noise_min = get_double("degrade.noise_min");
  r.noise_max = get_double("degrade.noise_max");
  r.factor = get_int("degrade.factor");
  r.quality_min = get_int("degrade.quality_min");
  r.quality_max = get_int("degrade.quality_max");
  require(r.blur_min >= 0 && r.blur_min <= r.blur_max && r.noise_min >= 0 &&
              r.noise_min <= r.noise_max && r.factor >= 1 && r.quality_min >= 10 &&
              r.quality_min <= r.quality_max && r.quality_max <= 100,
          ErrorKind::kUsage, "degradation ranges are inconsistent");
  return r;
}

OveroptOptions RunConfig::overopt() const {
  OveroptOptions o;
  o.steps = get_int("overopt.steps");
  o.pixel_steps = get_int("overopt.pixel_steps");
  o.pixel_step = get_double("overopt.pixel_step");
  o.latent_step = get_double("overopt.latent_step");
  o.condition = get_double("overopt.condition");
  return o;
}

ManifestOptions RunConfig::manifest_options() const {
  ManifestOptions o;
  o.quantile = get_double("quantile");
  require(o.quantile > 0.0 && o.quantile < 1.0, ErrorKind::kUsage, "quantile must lie in (0,1)");
  return o;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace qprior

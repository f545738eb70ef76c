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

#include "qprior/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>

namespace qprior {
namespace {

int norm_groups(int channels) {
  for (int g : {8, 4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

int to_int(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kData, "checkpoint key " + key + " is not an integer: '" + s + "'");
}

}  // namespace

// ------------------------------------------------------------------ config

int EncoderDecoderConfig::levels() const {
  int n = 0;
  for (int f = downsample_factor; f > 1; f >>= 1) ++n;
  return n;
}

int EncoderDecoderConfig::latent_size() const { return input_size / downsample_factor; }

void EncoderDecoderConfig::validate() const {
  require(downsample_factor >= 1 && (downsample_factor & (downsample_factor - 1)) == 0,
          ErrorKind::kUsage, "downsample_factor must be a power of two");
  require(input_size >= 1 && input_size % downsample_factor == 0, ErrorKind::kUsage,
          "input_size " + std::to_string(input_size) + " must be a multiple of downsample_factor " +
              std::to_string(downsample_factor));
  require(latent_channels >= 1 && base_width >= 1 && residual_blocks >= 0, ErrorKind::kUsage,
          "latent_channels and base_width must be positive, residual_blocks non-negative");
  require(codebook_size >= 1 && hq_codebook_size >= 1, ErrorKind::kUsage,
          "codebook sizes must be positive");
}

void EncoderDecoderConfig::store(CheckpointBundle& b) const {
  b.config["ae.input_size"] = std::to_string(input_size);
  b.config["ae.downsample_factor"] = std::to_string(downsample_factor);
  b.config["ae.latent_channels"] = std::to_string(latent_channels);
  b.config["ae.base_width"] = std::to_string(base_width);
  b.config["ae.residual_blocks"] = std::to_string(residual_blocks);
  b.config["ae.codebook_size"] = std::to_string(codebook_size);
  b.config["ae.hq_codebook_size"] = std::to_string(hq_codebook_size);
}

EncoderDecoderConfig EncoderDecoderConfig::load(const CheckpointBundle& b) {
  EncoderDecoderConfig c;
  auto get = [&](const char* key) { return to_int(b.value(key), key); };
  c.input_size = get("ae.input_size");
  c.downsample_factor = get("ae.downsample_factor");
  c.latent_channels = get("ae.latent_channels");
  c.base_width = get("ae.base_width");
  c.residual_blocks = get("ae.residual_blocks");
  c.codebook_size = get("ae.codebook_size");
  c.hq_codebook_size = get("ae.hq_codebook_size");
  c.validate();
  return c;
}

// ------------------------------------------------------------------ layers

ResBlock::ResBlock(int channels, Rng& rng)
    : norm1_(channels, norm_groups(channels)),
      norm2_(channels, norm_groups(channels)),
      conv1_(channels, channels, 3, 1, rng),
      conv2_(channels, channels, 3, 1, rng, 0.5f) {}

nn::Tensor ResBlock::operator()(const nn::Tensor& x) const {
  nn::Tensor h = conv1_(ag::silu(norm1_(x)));
  h = conv2_(ag::silu(norm2_(h)));
  return ag::add(x, h);
}

nn::ParamList ResBlock::params() const {
  nn::ParamList p;
  nn::append(p, "norm1.", norm1_.params());
  nn::append(p, "norm2.", norm2_.params());
  nn::append(p, "conv1.", conv1_.params());
  nn::append(p, "conv2.", conv2_.params());
  return p;
}

Encoder::Encoder(const EncoderDecoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  int ch = cfg.base_width;
  in_ = nn::Conv2d(3, ch, 3, 1, rng);
  for (int level = 0; level <= cfg.levels(); ++level) {
    std::vector<ResBlock> blocks;
    for (int r = 0; r < cfg.residual_blocks; ++r) blocks.emplace_back(ch, rng);
    blocks_.push_back(std::move(blocks));
    if (level < cfg.levels()) {
      down_.emplace_back(ch, ch * 2, 3, 2, rng);
      ch *= 2;
    }
  }
  out_norm_ = nn::GroupNorm(ch, norm_groups(ch));
  out_ = nn::Conv2d(ch, cfg.latent_channels, 1, 1, rng);
}

nn::Tensor Encoder::forward(const nn::Tensor& x) const {
  if (!(x.rank() == 3 && x.dim(0) == 3 && x.dim(1) == cfg_.input_size &&
        x.dim(2) == cfg_.input_size)) {
    const int f = cfg_.downsample_factor;
    const int h = x.rank() == 3 ? x.dim(1) : 0, w = x.rank() == 3 ? x.dim(2) : 0;
    std::string hint;
    if (h % f != 0 || w % f != 0) {
      hint = "; pad to " + std::to_string((h + f - 1) / f * f) + "x" +
             std::to_string((w + f - 1) / f * f) + " (multiples of " + std::to_string(f) + ")";
    }
    fail(ErrorKind::kData, "encoder expects a 3x" + std::to_string(cfg_.input_size) + "x" +
                               std::to_string(cfg_.input_size) + " image, got " +
                               ag::shape_str(x.shape()) + hint);
  }
  nn::Tensor h = in_(x);
  for (std::size_t level = 0; level < blocks_.size(); ++level) {
    for (const auto& b : blocks_[level]) h = b(h);
    if (level < down_.size()) h = down_[level](h);
  }
  return out_(ag::silu(out_norm_(h)));
}

LatentGrid Encoder::encode(const Image& img) const {
  validate(img);
  ag::NoGradGuard guard;
  const nn::Tensor z = ag::chw_to_tokens(forward(to_tensor<float>(img)));
  const int s = cfg_.latent_size();
  return from_tokens(z, s, s);
}

nn::ParamList Encoder::params() const {
  nn::ParamList p;
  nn::append(p, "in.", in_.params());
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    for (std::size_t r = 0; r < blocks_[l].size(); ++r)
      nn::append(p, "level" + std::to_string(l) + ".block" + std::to_string(r) + ".",
                 blocks_[l][r].params());
    if (l < down_.size()) nn::append(p, "level" + std::to_string(l) + ".down.", down_[l].params());
  }
  nn::append(p, "out_norm.", out_norm_.params());
  nn::append(p, "out.", out_.params());
  return p;
}

Decoder::Decoder(const EncoderDecoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  int ch = cfg.base_width << cfg.levels();
  in_ = nn::Conv2d(cfg.latent_channels, ch, 3, 1, rng);
  for (int level = cfg.levels(); level >= 0; --level) {
    std::vector<ResBlock> blocks;
    for (int r = 0; r < cfg.residual_blocks; ++r) blocks.emplace_back(ch, rng);
    blocks_.push_back(std::move(blocks));
    if (level > 0) {
      up_.emplace_back(ch, ch / 2, 3, 1, rng);
      ch /= 2;
    }
  }
  out_norm_ = nn::GroupNorm(ch, norm_groups(ch));
  out_ = nn::Conv2d(ch, 3, 3, 1, rng);
}

nn::Tensor Decoder::forward(const nn::Tensor& z) const {
  const int s = cfg_.latent_size();
  if (!(z.rank() == 3 && z.dim(0) == cfg_.latent_channels && z.dim(1) == s && z.dim(2) == s)) {
    fail(ErrorKind::kData, "decoder expects a latent of shape " +
                               ag::shape_str({cfg_.latent_channels, s, s}) + ", got " +
                               ag::shape_str(z.shape()));
  }
  nn::Tensor h = in_(z);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    for (const auto& b : blocks_[i]) h = b(h);
    if (i < up_.size()) h = up_[i](ag::upsample2x(h));
  }
  return ag::sigmoid(out_(ag::silu(out_norm_(h))));
}

Image Decoder::decode(const LatentGrid& z) const {
  const int s = cfg_.latent_size();
  require(z.height == s && z.width == s && z.channels == cfg_.latent_channels, ErrorKind::kData,
          "decode: latent grid " + std::to_string(z.height) + "x" + std::to_string(z.width) + "x" +
              std::to_string(z.channels) + " does not match the configured " + std::to_string(s) +
              "x" + std::to_string(s) + "x" + std::to_string(cfg_.latent_channels));
  ag::NoGradGuard guard;
  return from_tensor(forward(ag::tokens_to_chw(to_tokens(z), s, s)));
}

nn::ParamList Decoder::params() const {
  nn::ParamList p;
  nn::append(p, "in.", in_.params());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    for (std::size_t r = 0; r < blocks_[i].size(); ++r)
      nn::append(p, "stage" + std::to_string(i) + ".block" + std::to_string(r) + ".",
                 blocks_[i][r].params());
    if (i < up_.size()) nn::append(p, "stage" + std::to_string(i) + ".up.", up_[i].params());
  }
  nn::append(p, "out_norm.", out_norm_.params());
  nn::append(p, "out.", out_.params());
  return p;
}

// ------------------------------------------------------------------ model

VqAutoencoder::VqAutoencoder(const EncoderDecoderConfig& cfg, uint64_t seed) : config(cfg) {
  cfg.validate();
  Rng enc_rng = substream(seed, "init", 0);
  Rng dec_rng = substream(seed, "init", 1);
  encoder = Encoder(cfg, enc_rng);
  decoder = Decoder(cfg, dec_rng);
  common = Codebook(CodebookRole::kCommon, cfg.codebook_size, cfg.latent_channels);
  hq = Codebook(CodebookRole::kHqPlus, cfg.hq_codebook_size, cfg.latent_channels);
}

nn::ParamList VqAutoencoder::params() const {
  nn::ParamList p;
  nn::append(p, "encoder.", encoder.params());
  nn::append(p, "decoder.", decoder.params());
  p.emplace_back("codebook.common", common.tensor());
  p.emplace_back("codebook.hq_plus", hq.tensor());
  return p;
}

void VqAutoencoder::store(CheckpointBundle& b) const {
  config.store(b);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", alpha);
  b.config["alpha"] = buf;
  std::snprintf(buf, sizeof(buf), "%.17g", threshold);
  b.config["threshold"] = buf;
  b.add_params("", params());
}

VqAutoencoder VqAutoencoder::load(const CheckpointBundle& b) {
  VqAutoencoder m(EncoderDecoderConfig::load(b), 0);
  b.load_params("", m.params());
  m.alpha = std::stod(b.value("alpha"));
  m.threshold = std::stod(b.value("threshold"));
  return m;
}

VqAutoencoder VqAutoencoder::clone() const {
  CheckpointBundle b;
  store(b);
  return load(b);
}

Image VqAutoencoder::reconstruct(const Image& img, double score) const {
  const LatentGrid z = encoder.encode(img);
  return decoder.decode(dual_quantize(z, common, hq, score, threshold, alpha).fused);
}

// ------------------------------------------------------------------ stage 1

Stage1Forward stage1_forward(const VqAutoencoder& m, const Image& x, bool gated, double beta) {
  const nn::Tensor xt = to_tensor<float>(x);
  const nn::Tensor tok = ag::chw_to_tokens(m.encoder.forward(xt));
  Stage1Forward out;
  out.tokens = tok.values();
  out.common_codes = nearest_codes(tok.data(), m.common);
  const nn::Tensor zq1 = ag::gather_rows(m.common.tensor(), std::span<const int>(out.common_codes));
  CodebookLosses l = codebook_update_losses(tok, zq1, beta);
  out.codebook = l.codebook;
  out.commit = l.commitment;
  nn::Tensor fused = ag::detach(zq1);
  if (gated) {
    out.hq_codes = nearest_codes(tok.data(), m.hq);
    const nn::Tensor zq2 = ag::gather_rows(m.hq.tensor(), std::span<const int>(out.hq_codes));
    CodebookLosses l2 = codebook_update_losses(tok, zq2, beta);
    out.codebook = ag::add(out.codebook, l2.codebook);
    out.commit = ag::add(out.commit, l2.commitment);
    if (m.alpha != 0.0) {
      fused = ag::add(fused, ag::scale(ag::detach(zq2), static_cast<float>(m.alpha)));
    }
  }
  const int s = m.config.latent_size();
  const nn::Tensor x_rec =
      m.decoder.forward(ag::tokens_to_chw(ag::straight_through(tok, fused), s, s));
  out.recon = ag::l1(x_rec, xt);
  return out;
}

std::vector<Image> load_training_images(const DatasetManifest& manifest, int input_size,
                                        std::vector<double>* scores) {
  std::vector<Image> images;
  for (const auto& e : manifest.entries) {
    if (e.split != "train") continue;
    Image img = load_png(e.path);
    if (img.height != input_size || img.width != input_size) {
      fail(ErrorKind::kData, e.path + " is " + std::to_string(img.height) + "x" +
                                 std::to_string(img.width) + "; the model expects " +
                                 std::to_string(input_size) + "x" + std::to_string(input_size));
    }
    images.push_back(std::move(img));
    if (scores) scores->push_back(e.record.ensemble);
  }
  require(!images.empty(), ErrorKind::kData, "manifest has no train-split entries");
  return images;
}

void check_finite(const nn::ParamList& params, const std::string& context) {
  for (const auto& [name, t] : params) {
    for (float v : t.values()) {
      if (!std::isfinite(v)) fail(ErrorKind::kNumerical, context + ": parameter " + name + " became non-finite");
    }
  }
}

std::string stage1_log_header() { return "step\tepoch\trecon\tcodebook\tcommit\thq_updates"; }

std::string format_stage1_line(const Stage1StepLog& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d\t%d\t%.9g\t%.9g\t%.9g\t%d", s.step, s.epoch, s.recon,
                s.codebook, s.commit, s.hq_updates);
  return buf;
}

namespace {

// Entries drawn uniformly inside the per-dimension range of `tokens`.
void init_codebook_from_range(Codebook& cb, const std::vector<float>& tokens, int dim, Rng& rng) {
  std::vector<float> lo(dim, INFINITY), hi(dim, -INFINITY);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int j = static_cast<int>(i % dim);
    lo[j] = std::min(lo[j], tokens[i]);
    hi[j] = std::max(hi[j], tokens[i]);
  }
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> e(dim);
  for (int k = 0; k < cb.size(); ++k) {
    for (int j = 0; j < dim; ++j) e[j] = lo[j] + (hi[j] - lo[j]) * u(rng);
    cb.set_entry(k, e);
  }
}

// Reseeds entries with zero usage to random rows of `pool`.
int revive_dead(Codebook& cb, const std::vector<int>& usage, const std::vector<float>& pool,
                int dim, Rng& rng) {
  const std::size_t rows = pool.size() / dim;
  if (rows == 0) return 0;
  std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
  int revived = 0;
  for (int k = 0; k < cb.size(); ++k) {
    if (usage[k] > 0) continue;
    const std::size_t r = pick(rng);
    cb.set_entry(k, std::span<const float>(pool.data() + r * dim, dim));
    ++revived;
  }
  return revived;
}

}  // namespace

Stage1Result train_stage1(const DatasetManifest& manifest, const EncoderDecoderConfig& ae,
                          const Stage1Config& cfg, std::ostream* log) {
  require(cfg.epochs >= 1 && cfg.batch_size >= 1, ErrorKind::kUsage,
          "stage1 epochs and batch_size must be at least 1");
  require(cfg.learning_rate > 0.0f, ErrorKind::kUsage, "stage1 learning rate must be positive");
  require(std::isfinite(cfg.alpha), ErrorKind::kUsage, "alpha must be finite");
  std::vector<double> scores;
  const std::vector<Image> images = load_training_images(manifest, ae.input_size, &scores);
  const int n = static_cast<int>(images.size());
  std::vector<char> gated(n);
  int n_gated = 0;
  for (int i = 0; i < n; ++i) {
    gated[i] = cfg.gate_all || scores[i] > manifest.threshold;
    n_gated += gated[i];
  }

  Stage1Result result;
  result.model = VqAutoencoder(ae, cfg.seed);
  VqAutoencoder& m = result.model;
  m.alpha = cfg.alpha;
  m.threshold = manifest.threshold;
  result.hq_trained = n_gated > 0;
  if (!result.hq_trained) {
    std::cerr << "warning: no sample scores above the threshold " << manifest.threshold
              << "; the HQ+ codebook stays at its initialization\n";
  }
  const int d = ae.latent_channels;

  nn::Adam opt(m.params(), {cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8f, 0.0f});
  if (log) *log << stage1_log_header() << '\n';

  int step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = substream(cfg.seed, "data", epoch);
    std::shuffle(order.begin(), order.end(), shuffle);

    std::vector<int> usage_common(m.common.size(), 0), usage_hq(m.hq.size(), 0);
    std::vector<float> pool_common, pool_hq;
    bool epoch_had_hq = false;
    double recon_sum = 0.0;

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int end = std::min(n, start + cfg.batch_size);
      const int bsz = end - start;
      if (step == 0) {
        // Codebook init from the first batch's encoder outputs.
        std::vector<float> tokens;
        {
          ag::NoGradGuard guard;
          for (int b = start; b < end; ++b) {
            const LatentGrid z = m.encoder.encode(images[order[b]]);
            tokens.insert(tokens.end(), z.values.begin(), z.values.end());
          }
        }
        Rng init_common = substream(cfg.seed, "codebook-init", 0);
        Rng init_hq = substream(cfg.seed, "codebook-init", 1);
        init_codebook_from_range(m.common, tokens, d, init_common);
        init_codebook_from_range(m.hq, tokens, d, init_hq);
      }
      opt.zero_grad();
      Stage1StepLog entry;
      entry.step = ++step;
      entry.epoch = epoch;
      bool batch_has_hq = false;
      pool_common.clear();
      std::vector<float> batch_hq_pool;
      for (int b = start; b < end; ++b) {
        const int idx = order[b];
        Stage1Forward f = stage1_forward(m, images[idx], gated[idx], cfg.commitment_beta);
        nn::Tensor loss = ag::add(ag::add(f.recon, f.codebook), f.commit);
        loss = ag::scale(loss, 1.0f / static_cast<float>(bsz));
        loss.backward();
        entry.recon += f.recon.item();
        entry.codebook += f.codebook.item();
        entry.commit += f.commit.item();
        for (int c : f.common_codes) ++usage_common[c];
        pool_common.insert(pool_common.end(), f.tokens.begin(), f.tokens.end());
        if (gated[idx]) {
          batch_has_hq = true;
          for (int c : f.hq_codes) ++usage_hq[c];
          batch_hq_pool.insert(batch_hq_pool.end(), f.tokens.begin(), f.tokens.end());
        }
      }
      opt.step([&](const std::string& name) { return name == "codebook.hq_plus" && !batch_has_hq; });
      if (batch_has_hq) {
        ++result.hq_updates;
        epoch_had_hq = true;
        pool_hq = std::move(batch_hq_pool);
      }
      entry.recon /= bsz;
      entry.codebook /= bsz;
      entry.commit /= bsz;
      entry.hq_updates = result.hq_updates;
      if (!std::isfinite(entry.recon) || !std::isfinite(entry.codebook) ||
          !std::isfinite(entry.commit)) {
        fail(ErrorKind::kNumerical, "stage1: non-finite loss at step " + std::to_string(step));
      }
      check_finite(m.params(), "stage1 step " + std::to_string(step));
      recon_sum += entry.recon * bsz;
      result.steps.push_back(entry);
      if (log) *log << format_stage1_line(entry) << '\n';
    }
    result.epoch_recon.push_back(recon_sum / n);

    Rng revival = substream(cfg.seed, "revival", epoch);
    revive_dead(m.common, usage_common, pool_common, d, revival);
    if (epoch_had_hq) revive_dead(m.hq, usage_hq, pool_hq, d, revival);
  }
  if (log) log->flush();
  return result;
}

}  // namespace qprior

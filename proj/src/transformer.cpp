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

#include "qprior/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "qprior/metrics.hpp"

namespace qprior {
namespace {

int config_int(const CheckpointBundle& b, const std::string& key) {
  const std::string& s = b.value(key);
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kData, "checkpoint key " + key + " is not an integer: '" + s + "'");
}

void set_frozen(const nn::ParamList& params) {
  for (const auto& [name, t] : params) {
    nn::Tensor handle = t;
    handle.set_requires_grad(false);
  }
}

std::vector<double> row_softmax(const std::vector<float>& logits, int rows, int cols) {
  std::vector<double> p(logits.size());
  for (int i = 0; i < rows; ++i) {
    const float* r = logits.data() + static_cast<std::size_t>(i) * cols;
    double* o = p.data() + static_cast<std::size_t>(i) * cols;
    const double mx = *std::max_element(r, r + cols);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) z += (o[j] = std::exp(r[j] - mx));
    for (int j = 0; j < cols; ++j) o[j] /= z;
  }
  return p;
}

std::vector<int> row_argmax(std::span<const float> logits, int rows, int cols) {
  std::vector<int> idx(rows);
  for (int i = 0; i < rows; ++i) {
    const float* r = logits.data() + static_cast<std::size_t>(i) * cols;
    idx[i] = static_cast<int>(std::max_element(r, r + cols) - r);  // first maximum
  }
  return idx;
}

CodeGrid make_grid(std::vector<int> idx, int height, int width) {
  require(idx.size() == static_cast<std::size_t>(height) * width, ErrorKind::kData,
          "code count does not match the grid");
  CodeGrid g;
  g.height = height;
  g.width = width;
  g.indices = std::move(idx);
  return g;
}

}  // namespace

// ------------------------------------------------------------ embedding

ScoreEmbedding::ScoreEmbedding(int height, int width, int channels, Rng& rng)
    : height_(height), width_(width), channels_(channels),
      weight_(nn::uniform_param({height * width, channels}, 0.5f, rng)),
      bias_(nn::const_param({height * width, channels}, 0.0f)) {}

nn::Tensor ScoreEmbedding::forward(const nn::Tensor& score) const {
  return ag::add(ag::mul_scalar(weight_, score), bias_);
}

nn::Tensor ScoreEmbedding::forward(double score) const {
  return forward(nn::Tensor::scalar(static_cast<float>(score)));
}

LatentGrid ScoreEmbedding::embed(double score) const {
  require(std::isfinite(score) && score >= 0.0 && score <= 1.0, ErrorKind::kUsage,
          "quality score " + std::to_string(score) + " is outside [0,1]");
  ag::NoGradGuard guard;
  return from_tokens(forward(score), height_, width_);
}

nn::ParamList ScoreEmbedding::params() const { return {{"weight", weight_}, {"bias", bias_}}; }

LatentGrid condition_latent(const LatentGrid& z, const LatentGrid& s) {
  require(z.same_shape(s), ErrorKind::kData, "condition_latent: latent and embedding shapes differ");
  LatentGrid out = z;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += s.values[i];
  return out;
}

// ------------------------------------------------------------ transformer

void TransformerConfig::validate() const {
  require(depth >= 1 && heads >= 1 && width >= 1 && mlp_ratio >= 1, ErrorKind::kUsage,
          "transformer depth, heads, width and mlp_ratio must be positive");
  require(width % heads == 0, ErrorKind::kUsage,
          "transformer width " + std::to_string(width) + " is not divisible by heads " +
              std::to_string(heads));
}

std::vector<double> CodeLogits::common_probabilities() const {
  return row_softmax(common, positions, common_classes);
}
std::vector<double> CodeLogits::hq_probabilities() const {
  return row_softmax(hq, positions, hq_classes);
}
CodeGrid CodeLogits::common_argmax(int height, int width) const {
  return make_grid(row_argmax(common, positions, common_classes), height, width);
}
CodeGrid CodeLogits::hq_argmax(int height, int width) const {
  return make_grid(row_argmax(hq, positions, hq_classes), height, width);
}

QualityTransformer::QualityTransformer(int tokens, int channels, int common_classes,
                                       int hq_classes, const TransformerConfig& cfg, Rng& rng)
    : tokens_(tokens), channels_(channels), cfg_(cfg) {
  cfg.validate();
  const int w = cfg.width;
  in_ = nn::Linear(channels, w, rng);
  std::vector<float> pos(static_cast<std::size_t>(tokens) * w);
  for (int t = 0; t < tokens; ++t)
    for (int i = 0; i < w; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / w);
      pos[static_cast<std::size_t>(t) * w + i] = static_cast<float>(std::sin(t * freq));
      if (i + 1 < w) pos[static_cast<std::size_t>(t) * w + i + 1] = static_cast<float>(std::cos(t * freq));
    }
  positions_ = nn::Tensor::constant({tokens, w}, std::move(pos));
  for (int d = 0; d < cfg.depth; ++d) {
    Block b;
    b.ln1 = nn::LayerNorm(w);
    b.ln2 = nn::LayerNorm(w);
    b.qkv = nn::Linear(w, 3 * w, rng);
    b.proj = nn::Linear(w, w, rng, 0.5f);
    b.fc1 = nn::Linear(w, cfg.mlp_ratio * w, rng);
    b.fc2 = nn::Linear(cfg.mlp_ratio * w, w, rng, 0.5f);
    blocks_.push_back(std::move(b));
  }
  out_norm_ = nn::LayerNorm(w);
  head_common_ = nn::Linear(w, common_classes, rng, 0.5f);
  head_hq_ = nn::Linear(w, hq_classes, rng, 0.5f);
}

QualityTransformer::Output QualityTransformer::forward(const nn::Tensor& z_hat) const {
  if (!(z_hat.rank() == 2 && z_hat.dim(0) == tokens_ && z_hat.dim(1) == channels_)) {
    fail(ErrorKind::kData, "transformer expects tokens " + ag::shape_str({tokens_, channels_}) +
                               ", got " + ag::shape_str(z_hat.shape()));
  }
  const int w = cfg_.width, dh = w / cfg_.heads;
  const float att_scale = 1.0f / std::sqrt(static_cast<float>(dh));
  nn::Tensor x = ag::add(in_(z_hat), positions_);
  for (const Block& b : blocks_) {
    const nn::Tensor qkv = b.qkv(b.ln1(x));
    std::vector<nn::Tensor> heads;
    for (int h = 0; h < cfg_.heads; ++h) {
      const nn::Tensor q = ag::slice_cols(qkv, h * dh, dh);
      const nn::Tensor k = ag::slice_cols(qkv, w + h * dh, dh);
      const nn::Tensor v = ag::slice_cols(qkv, 2 * w + h * dh, dh);
      const nn::Tensor att = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), att_scale));
      heads.push_back(ag::matmul(att, v));
    }
    x = ag::add(x, b.proj(ag::concat_cols(heads)));
    x = ag::add(x, b.fc2(ag::gelu(b.fc1(b.ln2(x)))));
  }
  x = out_norm_(x);
  return {head_common_(x), head_hq_(x)};
}

CodeLogits QualityTransformer::predict(const LatentGrid& z_hat) const {
  ag::NoGradGuard guard;
  const Output out = forward(to_tokens(z_hat));
  CodeLogits l;
  l.positions = tokens_;
  l.common_classes = out.common.dim(1);
  l.hq_classes = out.hq.dim(1);
  l.common = out.common.values();
  l.hq = out.hq.values();
  return l;
}

nn::ParamList QualityTransformer::params() const {
  nn::ParamList p;
  nn::append(p, "in.", in_.params());
  for (std::size_t d = 0; d < blocks_.size(); ++d) {
    const std::string pre = "block" + std::to_string(d) + ".";
    nn::append(p, pre + "ln1.", blocks_[d].ln1.params());
    nn::append(p, pre + "qkv.", blocks_[d].qkv.params());
    nn::append(p, pre + "proj.", blocks_[d].proj.params());
    nn::append(p, pre + "ln2.", blocks_[d].ln2.params());
    nn::append(p, pre + "fc1.", blocks_[d].fc1.params());
    nn::append(p, pre + "fc2.", blocks_[d].fc2.params());
  }
  nn::append(p, "out_norm.", out_norm_.params());
  nn::append(p, "head_common.", head_common_.params());
  nn::append(p, "head_hq.", head_hq_.params());
  return p;
}

// ------------------------------------------------------------ losses

LatentGrid fuse_features(const LatentGrid& f1, const LatentGrid& f2, double alpha) {
  return fuse(f1, f2, alpha);
}

double loss_feat(const LatentGrid& z_l, const LatentGrid& target) {
  require(z_l.same_shape(target), ErrorKind::kData, "loss_feat: shapes differ");
  ag::NoGradGuard guard;
  return loss_feat(to_tokens(z_l), to_tokens(target)).item();
}

nn::Tensor loss_index(const nn::Tensor& common_logits, const nn::Tensor& hq_logits,
                      const CodeGrid& common_targets, const std::optional<CodeGrid>& hq_targets) {
  nn::Tensor total = ag::cross_entropy_sum(common_logits, std::span<const int>(common_targets.indices));
  if (hq_targets) {
    total = ag::add(total, ag::cross_entropy_sum(hq_logits, std::span<const int>(hq_targets->indices)));
  }
  return total;
}

double loss_index(const CodeLogits& logits, const CodeGrid& common_targets,
                  const std::optional<CodeGrid>& hq_targets) {
  // Evaluated in double: at 16x16 positions the float sum carries ~1e-4 error.
  ag::NoGradGuard guard;
  using D = ag::Tensor<double>;
  const D c = D::constant({logits.positions, logits.common_classes},
                          std::vector<double>(logits.common.begin(), logits.common.end()));
  double total = ag::cross_entropy_sum(c, std::span<const int>(common_targets.indices)).item();
  if (hq_targets) {
    const D h = D::constant({logits.positions, logits.hq_classes},
                            std::vector<double>(logits.hq.begin(), logits.hq.end()));
    total += ag::cross_entropy_sum(h, std::span<const int>(hq_targets->indices)).item();
  }
  return total;
}

LatentGrid stage2_target(const CodeGrid& c1, const std::optional<CodeGrid>& c2, double score,
                         double threshold, double alpha, const Codebook& common,
                         const Codebook& hq) {
  const LatentGrid z1 = lookup(c1, common);
  if (!(score > threshold)) return z1;
  require(c2.has_value(), ErrorKind::kData,
          "stage2_target: score is above the threshold but no HQ+ codes were supplied");
  return fuse(z1, lookup(*c2, hq), alpha);
}

void Stage2Config::validate() const {
  require(std::isfinite(lambda1) && std::isfinite(lambda2) && lambda1 >= 0.0 && lambda2 >= 0.0,
          ErrorKind::kUsage, "lambda1 and lambda2 must be finite and non-negative");
  require(epochs >= 0 && batch_size >= 1, ErrorKind::kUsage,
          "stage2 epochs must be >= 0 and batch_size >= 1");
  require(learning_rate > 0.0f, ErrorKind::kUsage, "stage2 learning rate must be positive");
  transformer.validate();
}

double total_loss(double feat, double index, double quality, const Stage2Config& cfg) {
  require(std::isfinite(feat) && std::isfinite(index) && std::isfinite(quality),
          ErrorKind::kNumerical, "total_loss: non-finite loss term");
  return feat + cfg.lambda1 * index + cfg.lambda2 * quality;
}

nn::Tensor code_features(const nn::Tensor& logits, const Codebook& cb, std::vector<int>* codes) {
  require(logits.rank() == 2 && logits.dim(1) == cb.size(), ErrorKind::kData,
          "code_features: logits do not match the codebook size");
  std::vector<int> idx = row_argmax(logits.data(), logits.dim(0), logits.dim(1));
  const nn::Tensor table = ag::detach(cb.tensor());
  const nn::Tensor hard = ag::gather_rows(table, std::span<const int>(idx));
  if (codes) *codes = std::move(idx);
  if (!logits.requires_grad()) return hard;
  const nn::Tensor soft = ag::matmul(ag::softmax_rows(logits), table);
  return ag::straight_through(soft, hard);
}

// ------------------------------------------------------------ model

RestorationModel::RestorationModel(const VqAutoencoder& stage1, const TransformerConfig& tcfg,
                                   uint64_t seed)
    : ae(stage1.clone()), target_encoder(stage1.clone().encoder), transformer_config(tcfg) {
  tcfg.validate();
  const EncoderDecoderConfig& c = ae.config;
  const int s = c.latent_size();
  Rng emb_rng = substream(seed, "init", 2);
  Rng tr_rng = substream(seed, "init", 3);
  embedding = ScoreEmbedding(s, s, c.latent_channels, emb_rng);
  transformer = QualityTransformer(s * s, c.latent_channels, c.codebook_size, c.hq_codebook_size,
                                   tcfg, tr_rng);
  set_frozen(ae.decoder.params());
  set_frozen({{"common", ae.common.tensor()}, {"hq", ae.hq.tensor()}});
  set_frozen(target_encoder.params());
}

RestorationModel RestorationModel::clone() const {
  CheckpointBundle b;
  store(b);
  return load(b);
}

nn::ParamList RestorationModel::trainable_params() const {
  nn::ParamList p;
  nn::append(p, "encoder.", ae.encoder.params());
  nn::append(p, "embedding.", embedding.params());
  nn::append(p, "transformer.", transformer.params());
  return p;
}

void RestorationModel::store(CheckpointBundle& b) const {
  ae.store(b);
  b.add_params("target_encoder.", target_encoder.params());
  b.add_params("embedding.", embedding.params());
  b.add_params("transformer.", transformer.params());
  b.config["transformer.depth"] = std::to_string(transformer_config.depth);
  b.config["transformer.heads"] = std::to_string(transformer_config.heads);
  b.config["transformer.width"] = std::to_string(transformer_config.width);
  b.config["transformer.mlp_ratio"] = std::to_string(transformer_config.mlp_ratio);
}

RestorationModel RestorationModel::load(const CheckpointBundle& b) {
  require(b.has_block("transformer.in.weight"), ErrorKind::kData,
          "checkpoint stage '" + b.stage + "' has no transformer; a stage2 checkpoint is required");
  VqAutoencoder ae = VqAutoencoder::load(b);
  TransformerConfig t;
  t.depth = config_int(b, "transformer.depth");
  t.heads = config_int(b, "transformer.heads");
  t.width = config_int(b, "transformer.width");
  t.mlp_ratio = config_int(b, "transformer.mlp_ratio");
  RestorationModel m(ae, t, 0);
  b.load_params("encoder.", m.ae.encoder.params());
  b.load_params("target_encoder.", m.target_encoder.params());
  b.load_params("embedding.", m.embedding.params());
  b.load_params("transformer.", m.transformer.params());
  return m;
}

nn::Tensor RestorationModel::conditioned_tokens(const Image& x_l, double score) const {
  const nn::Tensor tok = ag::chw_to_tokens(ae.encoder.forward(to_tensor<float>(x_l)));
  return ag::add(tok, embedding.forward(score));
}

RestoreTrace RestorationModel::trace(const Image& x_l, double score,
                                     const std::vector<float>* offset) const {
  require(std::isfinite(score) && score >= 0.0 && score <= 1.0, ErrorKind::kUsage,
          "condition score " + std::to_string(score) + " is outside [0,1]");
  validate(x_l);
  ag::NoGradGuard guard;
  const int s = ae.config.latent_size();
  nn::Tensor z_hat = conditioned_tokens(x_l, score);
  if (offset) z_hat = ag::add(z_hat, nn::Tensor::constant(z_hat.shape(), *offset));
  const QualityTransformer::Output out = transformer.forward(z_hat);
  RestoreTrace t;
  t.common_codes = make_grid(row_argmax(out.common.data(), s * s, ae.common.size()), s, s);
  t.common_features = lookup(t.common_codes, ae.common);
  t.fused = t.common_features;
  if (score > ae.threshold) {
    t.hq_codes = make_grid(row_argmax(out.hq.data(), s * s, ae.hq.size()), s, s);
    t.hq_features = lookup(*t.hq_codes, ae.hq);
    t.fused = fuse(t.common_features, t.hq_features, ae.alpha);
  }
  t.image = ae.decoder.decode(t.fused);
  return t;
}

Image RestorationModel::restore(const Image& x_l, double score) const {
  return trace(x_l, score).image;
}

bool on_code_manifold(const RestoreTrace& t, const RestorationModel& m) {
  if (quantize_grid(t.common_features, m.ae.common).latent != t.common_features) return false;
  if (!t.hq_codes) return t.fused == t.common_features;
  if (quantize_grid(t.hq_features, m.ae.hq).latent != t.hq_features) return false;
  return fuse(t.common_features, t.hq_features, m.ae.alpha) == t.fused;
}

// ------------------------------------------------------------ training

std::vector<Stage2Sample> prepare_stage2_samples(const RestorationModel& m,
                                                 const std::vector<Image>& images,
                                                 const std::vector<double>& scores) {
  require(images.size() == scores.size(), ErrorKind::kData, "one score per image is required");
  std::vector<Stage2Sample> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Stage2Sample s;
    s.clean = images[i];
    s.score = scores[i];
    const LatentGrid z = m.target_encoder.encode(images[i]);
    const DualQuantized q = dual_quantize(z, m.ae.common, m.ae.hq, s.score, m.ae.threshold, m.ae.alpha);
    s.common_codes = q.common_codes;
    s.hq_codes = q.hq_codes;
    out.push_back(std::move(s));
  }
  return out;
}

std::string stage2_log_header() {
  return "step\tepoch\tfeat\tindex\tquality\ttotal\tscore\tpsnr\tssim";
}

std::string format_stage2_line(const Stage2StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d\t%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g", s.step,
                s.epoch, s.feat, s.index, s.quality, s.total, s.score, s.psnr, s.ssim);
  return buf;
}

namespace {

nn::ParamList stage2_params(const RestorationModel& model, const Stage2Config& cfg) {
  nn::ParamList p = model.trainable_params();
  if (cfg.train_decoder) {
    for (const auto& [name, t] : model.ae.decoder.params()) {
      nn::Tensor handle = t;
      handle.set_requires_grad(true);
      p.emplace_back("decoder." + name, t);
    }
  }
  return p;
}

}  // namespace

Stage2Trainer::Stage2Trainer(RestorationModel& model, std::vector<Stage2Sample> samples,
                             const ScorerEnsemble& ens, const Stage2Config& cfg)
    : model_(model),
      samples_(std::move(samples)),
      ens_(ens),
      cfg_(cfg),
      opt_(stage2_params(model, cfg),
           {cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8f, cfg.grad_clip}) {
  cfg.validate();
  require(!samples_.empty(), ErrorKind::kData, "stage2 needs at least one training sample");
}

Stage2StepLog Stage2Trainer::evaluate_sample(int index, const Image& x_l, bool backward) {
  const Stage2Sample& smp = samples_.at(index);
  const RestorationModel& m = model_;
  const int s = m.ae.config.latent_size();
  const nn::Tensor tok = ag::chw_to_tokens(m.ae.encoder.forward(to_tensor<float>(x_l)));
  const nn::Tensor z_hat = ag::add(tok, m.embedding.forward(smp.score));
  const QualityTransformer::Output out = m.transformer.forward(z_hat);
  const nn::Tensor index_loss = loss_index(out.common, out.hq, smp.common_codes, smp.hq_codes);
  const LatentGrid target = stage2_target(smp.common_codes, smp.hq_codes, smp.score,
                                          m.ae.threshold, m.ae.alpha, m.ae.common, m.ae.hq);
  const nn::Tensor feat = loss_feat(tok, to_tokens(target));
  nn::Tensor total = ag::add(feat, ag::scale(index_loss, static_cast<float>(cfg_.lambda1)));
  Stage2StepLog r;
  if (cfg_.lambda2 != 0.0 || !cfg_.skip_zero_quality) {
    nn::Tensor fused = code_features(out.common, m.ae.common, nullptr);
    if (smp.hq_codes && m.ae.alpha != 0.0) {
      fused = ag::add(fused, ag::scale(code_features(out.hq, m.ae.hq, nullptr),
                                       static_cast<float>(m.ae.alpha)));
    }
    const nn::Tensor x_res = m.ae.decoder.forward(ag::tokens_to_chw(fused, s, s));
    const nn::Tensor q = loss_quality(x_res, ens_, backward);
    total = ag::add(total, ag::scale(q, static_cast<float>(cfg_.lambda2)));
    r.quality = q.item();
    const Image restored = from_tensor(x_res);
    r.score = score_image(restored, ens_).ensemble;
    r.psnr = psnr(restored, smp.clean);
    r.ssim = ssim(restored, smp.clean);
  }
  r.feat = feat.item();
  r.index = index_loss.item();
  r.total = total.item();
  if (!std::isfinite(r.total)) {
    fail(ErrorKind::kNumerical, "stage2: non-finite loss on sample " + std::to_string(index));
  }
  if (backward) {
    ag::scale(total, 1.0f / static_cast<float>(current_batch_)).backward();
  }
  return r;
}

Stage2StepLog Stage2Trainer::step(const std::vector<int>& batch, int epoch) {
  require(!batch.empty(), ErrorKind::kData, "empty stage2 batch");
  opt_.zero_grad();
  current_batch_ = static_cast<int>(batch.size());
  Stage2StepLog acc;
  acc.step = ++step_;
  acc.epoch = epoch;
  for (int idx : batch) {
    const Stage2Sample& smp = samples_.at(idx);
    Rng rng = substream(cfg_.seed, "degradation/" + stream_, draws_++);
    const Image x_l = degrade(smp.clean, sample_degradation(cfg_.degradation, rng));
    const Stage2StepLog r = evaluate_sample(idx, x_l, true);
    acc.feat += r.feat;
    acc.index += r.index;
    acc.quality += r.quality;
    acc.total += r.total;
    acc.score += r.score;
    acc.psnr += r.psnr;
    acc.ssim += r.ssim;
  }
  current_batch_ = 1;
  opt_.step();
  check_finite(stage2_params(model_, cfg_), "stage2 step " + std::to_string(step_));
  const double n = static_cast<double>(batch.size());
  acc.feat /= n;
  acc.index /= n;
  acc.quality /= n;
  acc.total /= n;
  acc.score /= n;
  acc.psnr /= n;
  acc.ssim /= n;
  return acc;
}

namespace {

struct Stage2Data {
  std::vector<Image> images;
  std::vector<double> scores;
};

Stage2Data load_stage2_data(const DatasetManifest& manifest, int input_size) {
  Stage2Data d;
  d.images = load_training_images(manifest, input_size, &d.scores);
  return d;
}

std::vector<int> shuffled(int n, uint64_t seed, const std::string& name, uint64_t index) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = substream(seed, name, index);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

Stage2Result train_stage2(const DatasetManifest& manifest, const VqAutoencoder& stage1,
                          const Stage2Config& cfg, std::ostream* log) {
  cfg.validate();
  Stage2Result result{RestorationModel(stage1, cfg.transformer, cfg.seed), {}, {}};
  const Stage2Data data = load_stage2_data(manifest, stage1.config.input_size);
  Stage2Trainer trainer(result.model, prepare_stage2_samples(result.model, data.images, data.scores),
                        manifest.ensemble(), cfg);
  trainer.set_stream("stage2");
  const int n = static_cast<int>(data.images.size());
  if (log) *log << stage2_log_header() << '\n';
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffled(n, cfg.seed, "data/stage2", epoch);
    double index_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const std::vector<int> batch(order.begin() + start,
                                   order.begin() + std::min(n, start + cfg.batch_size));
      const Stage2StepLog s = trainer.step(batch, epoch);
      index_sum += s.index * static_cast<double>(batch.size());
      result.steps.push_back(s);
      if (log) *log << format_stage2_line(s) << '\n';
    }
    result.epoch_index.push_back(index_sum / n);
  }
  if (log) log->flush();
  return result;
}

Stage2Result continue_stage2(const DatasetManifest& manifest, const RestorationModel& model,
                             const Stage2Config& cfg, int steps, std::ostream* log) {
  cfg.validate();
  require(steps >= 0, ErrorKind::kUsage, "step count must be non-negative");
  Stage2Result result{model.clone(), {}, {}};
  const Stage2Data data = load_stage2_data(manifest, model.ae.config.input_size);
  Stage2Trainer trainer(result.model, prepare_stage2_samples(result.model, data.images, data.scores),
                        manifest.ensemble(), cfg);
  trainer.set_stream("continue");
  const int n = static_cast<int>(data.images.size());
  if (log) *log << stage2_log_header() << '\n';
  int epoch = 0;
  std::vector<int> order;
  std::size_t pos = 0;
  for (int k = 0; k < steps; ++k) {
    std::vector<int> batch;
    while (static_cast<int>(batch.size()) < std::min(cfg.batch_size, n)) {
      if (pos == order.size()) {
        order = shuffled(n, cfg.seed, "data/continue", ++epoch);
        pos = 0;
      }
      batch.push_back(order[pos++]);
    }
    const Stage2StepLog s = trainer.step(batch, epoch);
    result.steps.push_back(s);
    if (log) *log << format_stage2_line(s) << '\n';
  }
  if (log) log->flush();
  return result;
}

}  // namespace qprior

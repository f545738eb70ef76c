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

// Score-conditioned code prediction, feature fusion, stage-2 losses and
// the restoration model built on a stage-1 autoencoder.
//
// Token order: an h x w latent is flattened row-major, position y * w + x.
#ifndef QPRIOR_TRANSFORMER_HPP_
#define QPRIOR_TRANSFORMER_HPP_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qprior/autoencoder.hpp"
#include "qprior/degrade.hpp"
#include "qprior/iqa.hpp"

namespace qprior {

// Learned affine map S -> s in R^{h*w*c}, viewed as [h*w, c].
class ScoreEmbedding {
 public:
  ScoreEmbedding() = default;
  ScoreEmbedding(int height, int width, int channels, Rng& rng);

  // `score` is a one-element tensor so the map is differentiable in S.
  nn::Tensor forward(const nn::Tensor& score) const;
  nn::Tensor forward(double score) const;
  LatentGrid embed(double score) const;  // rejects S outside [0, 1]
  nn::ParamList params() const;

 private:
  int height_ = 0, width_ = 0, channels_ = 0;
  nn::Tensor weight_, bias_;  // [h*w, c] each
};

// Z_l + s. Shapes must match.
LatentGrid condition_latent(const LatentGrid& z, const LatentGrid& s);

struct TransformerConfig {
  int depth = 4;
  int heads = 4;
  int width = 64;
  int mlp_ratio = 4;
  void validate() const;
};

// Raw per-position class scores for both codebooks.
struct CodeLogits {
  int positions = 0;
  int common_classes = 0;
  int hq_classes = 0;
  std::vector<float> common;  // [positions, common_classes]
  std::vector<float> hq;      // [positions, hq_classes]

  // Softmax over each position's scores.
  std::vector<double> common_probabilities() const;
  std::vector<double> hq_probabilities() const;
  CodeGrid common_argmax(int height, int width) const;
  CodeGrid hq_argmax(int height, int width) const;
};

// Pre-norm encoder-only transformer over h*w tokens with fixed sinusoidal
// positions and one linear head per codebook.
class QualityTransformer {
 public:
  QualityTransformer() = default;
  QualityTransformer(int tokens, int channels, int common_classes, int hq_classes,
                     const TransformerConfig& cfg, Rng& rng);

  struct Output {
    nn::Tensor common;  // [tokens, K_common]
    nn::Tensor hq;      // [tokens, K_hq]
  };
  Output forward(const nn::Tensor& z_hat) const;  // z_hat [tokens, c]
  CodeLogits predict(const LatentGrid& z_hat) const;
  nn::ParamList params() const;

 private:
  struct Block {
    nn::LayerNorm ln1, ln2;
    nn::Linear qkv, proj, fc1, fc2;
  };
  int tokens_ = 0, channels_ = 0;
  TransformerConfig cfg_;
  nn::Linear in_;
  nn::Tensor positions_;  // constant [tokens, width]
  std::vector<Block> blocks_;
  nn::LayerNorm out_norm_;
  nn::Linear head_common_, head_hq_;
};

// Z_f1 + alpha Z_f2; bitwise Z_f1 when alpha == 0.
LatentGrid fuse_features(const LatentGrid& f1, const LatentGrid& f2, double alpha);

// Mean squared difference with the target behind a stop-gradient.
template <class T>
ag::Tensor<T> loss_feat(const ag::Tensor<T>& z_l, const ag::Tensor<T>& target) {
  return ag::mse(z_l, ag::detach(target));
}
double loss_feat(const LatentGrid& z_l, const LatentGrid& target);

// Cross-entropy summed over positions for the common head, plus the HQ+
// head when `hq_targets` is present.
nn::Tensor loss_index(const nn::Tensor& common_logits, const nn::Tensor& hq_logits,
                      const CodeGrid& common_targets, const std::optional<CodeGrid>& hq_targets);
double loss_index(const CodeLogits& logits, const CodeGrid& common_targets,
                  const std::optional<CodeGrid>& hq_targets);

// Negative smooth ensemble score of a [3, H, W] restoration. With
// `require_graph`, an input without a gradient path is rejected.
template <class T>
ag::Tensor<T> loss_quality(const ag::Tensor<T>& x_res, const ScorerEnsemble& ens,
                           bool require_graph) {
  if (require_graph && !x_res.requires_grad()) {
    fail(ErrorKind::kUsage, "loss_quality: restoration has no gradient path to the model");
  }
  return ag::scale(ens.ensemble(x_res, true), T(-1));
}

// Lookup-and-fuse of ground-truth codes; common lookup alone when the gate
// is closed. A missing HQ+ grid with the gate open is rejected.
LatentGrid stage2_target(const CodeGrid& c1, const std::optional<CodeGrid>& c2, double score,
                         double threshold, double alpha, const Codebook& common,
                         const Codebook& hq);

struct Stage2Config {
  double lambda1 = 0.5;
  double lambda2 = 0.1;
  TransformerConfig transformer;
  int epochs = 30;
  int batch_size = 32;
  float learning_rate = 5e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float grad_clip = 0.0f;
  uint64_t seed = 0;
  DegradationRange degradation;
  // With lambda2 == 0 the decoder and scorers are not evaluated at all.
  bool skip_zero_quality = true;
  // Also adapt the decoder (codebooks stay frozen). Only the quality term
  // reaches it.
  bool train_decoder = false;
  void validate() const;
};

// feat + lambda1 * index + lambda2 * quality; rejects non-finite input.
double total_loss(double feat, double index, double quality, const Stage2Config& cfg);

// Soft straight-through code lookup: forward value is the argmax entry
// per position; the gradient reaches the logits through the
// softmax-weighted codebook average.
nn::Tensor code_features(const nn::Tensor& logits, const Codebook& cb, std::vector<int>* codes);

struct RestoreTrace {
  Image image;
  CodeGrid common_codes;
  std::optional<CodeGrid> hq_codes;  // present when the gate opens
  LatentGrid common_features, hq_features, fused;
};

// Stage-2 model: trainable encoder and transformer on top of a frozen
// stage-1 decoder and codebooks. The stage-1 encoder is kept to produce
// ground-truth codes for training.
struct RestorationModel {
  VqAutoencoder ae;  // encoder is the stage-2 (LQ) encoder
  Encoder target_encoder;
  ScoreEmbedding embedding;
  QualityTransformer transformer;
  TransformerConfig transformer_config;

  RestorationModel() = default;
  // Fresh stage-2 model from a stage-1 autoencoder.
  RestorationModel(const VqAutoencoder& stage1, const TransformerConfig& tcfg, uint64_t seed);
  RestorationModel(const RestorationModel&) = delete;
  RestorationModel& operator=(const RestorationModel&) = delete;
  RestorationModel(RestorationModel&&) = default;
  RestorationModel& operator=(RestorationModel&&) = default;

  RestorationModel clone() const;

  // Parameters updated in stage 2: "encoder.*", "embedding.*", "transformer.*".
  nn::ParamList trainable_params() const;
  void store(CheckpointBundle& b) const;
  static RestorationModel load(const CheckpointBundle& b);

  nn::Tensor conditioned_tokens(const Image& x_l, double score) const;

  Image restore(const Image& x_l, double score) const;
  // As restore, with an optional [h*w, c] offset added to the conditioned
  // latent, returning the intermediate codes and features.
  RestoreTrace trace(const Image& x_l, double score, const std::vector<float>* offset = nullptr) const;
};

// Re-quantization certificate: both feature grids are fixed points of their
// codebook and the fused grid is their fusion.
bool on_code_manifold(const RestoreTrace& t, const RestorationModel& m);

struct Stage2Sample {
  Image clean;
  double score = 0.0;
  CodeGrid common_codes;
  std::optional<CodeGrid> hq_codes;
};

// Ground-truth codes from the frozen stage-1 encoder on clean images.
std::vector<Stage2Sample> prepare_stage2_samples(const RestorationModel& m,
                                                 const std::vector<Image>& images,
                                                 const std::vector<double>& scores);

struct Stage2StepLog {
  int step = 0;
  int epoch = 0;
  double feat = 0.0;
  double index = 0.0;
  double quality = 0.0;  // mean loss_quality over the batch; 0 when skipped
  double total = 0.0;
  double score = 0.0;    // mean hard ensemble score of x_res; 0 when skipped
  double psnr = 0.0;     // mean PSNR of x_res to the clean image; 0 when skipped
  double ssim = 0.0;
};

std::string stage2_log_header();
std::string format_stage2_line(const Stage2StepLog& s);

// Per-batch optimizer over the stage-2 objective. Each call to step() draws
// fresh degradations keyed by (seed, draw index).
class Stage2Trainer {
 public:
  Stage2Trainer(RestorationModel& model, std::vector<Stage2Sample> samples,
                const ScorerEnsemble& ens, const Stage2Config& cfg);

  Stage2StepLog step(const std::vector<int>& batch, int epoch);
  // Forward pass of one sample on a given LQ input; returns the losses
  // without stepping. For tests.
  Stage2StepLog evaluate_sample(int index, const Image& x_l, bool backward);
  // Names the degradation stream, so different runs draw different inputs.
  void set_stream(std::string name) { stream_ = std::move(name); }
  std::size_t sample_count() const { return samples_.size(); }
  const std::vector<Stage2Sample>& samples() const { return samples_; }

 private:
  RestorationModel& model_;
  std::vector<Stage2Sample> samples_;
  ScorerEnsemble ens_;
  Stage2Config cfg_;
  nn::Adam opt_;
  std::string stream_ = "stage2";
  int step_ = 0;
  int current_batch_ = 1;
  uint64_t draws_ = 0;
};

struct Stage2Result {
  RestorationModel model;
  std::vector<Stage2StepLog> steps;
  std::vector<double> epoch_index;  // mean L_index per epoch
};

Stage2Result train_stage2(const DatasetManifest& manifest, const VqAutoencoder& stage1,
                          const Stage2Config& cfg, std::ostream* log = nullptr);

// Continues stage-2 optimization of `model` for `steps` batches.
Stage2Result continue_stage2(const DatasetManifest& manifest, const RestorationModel& model,
                             const Stage2Config& cfg, int steps, std::ostream* log = nullptr);

}  // namespace qprior

#endif  // QPRIOR_TRANSFORMER_HPP_

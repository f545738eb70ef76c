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

// Convolutional encoder/decoder and stage-1 dual-codebook training.
#ifndef QPRIOR_AUTOENCODER_HPP_
#define QPRIOR_AUTOENCODER_HPP_

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "qprior/checkpoint.hpp"
#include "qprior/image.hpp"
#include "qprior/manifest.hpp"
#include "qprior/nn.hpp"
#include "qprior/vq.hpp"

namespace qprior {

struct EncoderDecoderConfig {
  int input_size = 64;
  int downsample_factor = 4;  // power of two
  int latent_channels = 64;
  int base_width = 16;
  int residual_blocks = 1;  // per scale
  int codebook_size = 256;
  int hq_codebook_size = 256;

  int levels() const;       // log2(downsample_factor)
  int latent_size() const;  // input_size / downsample_factor
  void validate() const;
  void store(CheckpointBundle& b) const;
  static EncoderDecoderConfig load(const CheckpointBundle& b);
};

class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(int channels, Rng& rng);
  nn::Tensor operator()(const nn::Tensor& x) const;
  nn::ParamList params() const;

 private:
  nn::GroupNorm norm1_, norm2_;
  nn::Conv2d conv1_, conv2_;
};

// [3, S, S] -> [c, S/f, S/f]
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderDecoderConfig& cfg, Rng& rng);
  nn::Tensor forward(const nn::Tensor& x) const;
  // Evaluation-mode encoding, no graph.
  LatentGrid encode(const Image& img) const;
  nn::ParamList params() const;

 private:
  EncoderDecoderConfig cfg_;
  nn::Conv2d in_;
  std::vector<std::vector<ResBlock>> blocks_;  // per level, then the bottom
  std::vector<nn::Conv2d> down_;
  nn::GroupNorm out_norm_;
  nn::Conv2d out_;
};

// [c, h, w] -> [3, h f, w f], sigmoid output.
class Decoder {
 public:
  Decoder() = default;
  Decoder(const EncoderDecoderConfig& cfg, Rng& rng);
  nn::Tensor forward(const nn::Tensor& z) const;
  Image decode(const LatentGrid& z) const;
  nn::ParamList params() const;

 private:
  EncoderDecoderConfig cfg_;
  nn::Conv2d in_;
  std::vector<std::vector<ResBlock>> blocks_;  // bottom, then per level upward
  std::vector<nn::Conv2d> up_;
  nn::GroupNorm out_norm_;
  nn::Conv2d out_;
};

// Encoder, decoder and both codebooks, plus the gate settings they were
// trained with. Move-only: layers hold shared tensor handles, so an
// independent copy goes through clone().
struct VqAutoencoder {
  EncoderDecoderConfig config;
  Encoder encoder;
  Decoder decoder;
  Codebook common;
  Codebook hq;
  double alpha = 1.0;
  double threshold = 0.0;

  VqAutoencoder() = default;
  VqAutoencoder(const EncoderDecoderConfig& cfg, uint64_t seed);
  VqAutoencoder(const VqAutoencoder&) = delete;
  VqAutoencoder& operator=(const VqAutoencoder&) = delete;
  VqAutoencoder(VqAutoencoder&&) = default;
  VqAutoencoder& operator=(VqAutoencoder&&) = default;

  VqAutoencoder clone() const;

  // "encoder.*", "decoder.*", "codebook.common", "codebook.hq_plus".
  nn::ParamList params() const;
  void store(CheckpointBundle& b) const;
  static VqAutoencoder load(const CheckpointBundle& b);

  // Gated dual quantization of encode(img) followed by decode.
  Image reconstruct(const Image& img, double score) const;
};

struct Stage1Config {
  int epochs = 50;
  int batch_size = 32;
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  double commitment_beta = 0.25;
  double alpha = 1.0;
  bool gate_all = false;  // treat every sample as HQ+
  uint64_t seed = 0;
};

struct Stage1StepLog {
  int step = 0;
  int epoch = 0;
  double recon = 0.0;
  double codebook = 0.0;
  double commit = 0.0;
  int hq_updates = 0;  // cumulative
};

struct Stage1Result {
  VqAutoencoder model;
  std::vector<Stage1StepLog> steps;
  std::vector<double> epoch_recon;  // mean reconstruction loss per epoch
  int hq_updates = 0;
  bool hq_trained = false;
};

// Per-sample stage-1 forward pass. Losses are graph tensors.
struct Stage1Forward {
  nn::Tensor recon, codebook, commit;
  std::vector<int> common_codes;
  std::vector<int> hq_codes;  // empty when the gate is closed
  std::vector<float> tokens;  // encoder output, [h*w, c] row-major
};

Stage1Forward stage1_forward(const VqAutoencoder& m, const Image& x, bool gated, double beta);

// Loads the manifest's train-split images and checks their size.
std::vector<Image> load_training_images(const DatasetManifest& manifest, int input_size,
                                        std::vector<double>* scores = nullptr);

// `log` receives one tab-separated line per optimizer step.
Stage1Result train_stage1(const DatasetManifest& manifest, const EncoderDecoderConfig& ae,
                          const Stage1Config& cfg, std::ostream* log = nullptr);

std::string stage1_log_header();
std::string format_stage1_line(const Stage1StepLog& s);

// Throws kNumerical naming the first parameter with a non-finite value.
void check_finite(const nn::ParamList& params, const std::string& context);

}  // namespace qprior

#endif  // QPRIOR_AUTOENCODER_HPP_

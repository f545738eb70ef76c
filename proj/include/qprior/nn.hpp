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

// Parameterized layers and the Adam optimizer, float precision.
#ifndef QPRIOR_NN_HPP_
#define QPRIOR_NN_HPP_

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qprior/ops.hpp"
#include "qprior/rng.hpp"

namespace qprior::nn {

using Tensor = ag::Tensor<float>;

// Named handles onto trainable tensors. Handles share storage with the
// owning module, so writes through either are visible to both.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

inline void append(ParamList& dst, const std::string& prefix, const ParamList& src) {
  for (const auto& [name, t] : src) dst.emplace_back(prefix + name, t);
}

inline Tensor uniform_param(ag::Shape shape, float bound, Rng& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> v(ag::numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

inline Tensor const_param(ag::Shape shape, float value) {
  std::vector<float> v(ag::numel(shape), value);
  return Tensor::parameter(std::move(shape), std::move(v));
}

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng, float gain = 1.0f)
      : weight_(uniform_param({in, out}, gain * std::sqrt(3.0f / in), rng)),
        bias_(const_param({out}, 0.0f)) {}

  Tensor operator()(const Tensor& x) const {
    return ag::add_row_bias(ag::matmul(x, weight_), bias_);
  }
  ParamList params() const { return {{"weight", weight_}, {"bias", bias_}}; }
  const Tensor& weight() const { return weight_; }

 private:
  Tensor weight_, bias_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, Rng& rng, float gain = 1.0f)
      : weight_(uniform_param({out, in, kernel, kernel},
                              gain * std::sqrt(3.0f / (in * kernel * kernel)), rng)),
        bias_(const_param({out}, 0.0f)),
        stride_(stride),
        pad_(kernel / 2) {}

  Tensor operator()(const Tensor& x) const {
    return ag::conv2d(x, weight_, bias_, stride_, pad_);
  }
  ParamList params() const { return {{"weight", weight_}, {"bias", bias_}}; }

 private:
  Tensor weight_, bias_;
  int stride_ = 1;
  int pad_ = 0;
};

class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(int channels, int groups)
      : gain_(const_param({channels}, 1.0f)), bias_(const_param({channels}, 0.0f)),
        groups_(groups) {}

  Tensor operator()(const Tensor& x) const {
    return ag::group_norm(x, groups_, gain_, bias_);
  }
  ParamList params() const { return {{"gain", gain_}, {"bias", bias_}}; }

 private:
  Tensor gain_, bias_;
  int groups_ = 1;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int width)
      : gain_(const_param({width}, 1.0f)), bias_(const_param({width}, 0.0f)) {}

  Tensor operator()(const Tensor& x) const { return ag::layer_norm(x, gain_, bias_); }
  ParamList params() const { return {{"gain", gain_}, {"bias", bias_}}; }

 private:
  Tensor gain_, bias_;
};

struct AdamOptions {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float grad_clip = 0.0f;  // global L2 clip over the stepped params; 0 = off
};

// Adam with per-parameter step counters, so a parameter that is skipped on
// some steps (the gated HQ+ codebook) keeps its own bias correction.
class Adam {
 public:
  Adam(ParamList params, AdamOptions opts) : opts_(opts) {
    for (auto& [name, t] : params) {
      slots_.push_back({name, t, std::vector<float>(t.size(), 0.0f),
                        std::vector<float>(t.size(), 0.0f), 0});
    }
  }

  void zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
  }

  // Updates every parameter for which skip(name) is false.
  void step(const std::function<bool(const std::string&)>& skip = {}) {
    float scale = 1.0f;
    if (opts_.grad_clip > 0.0f) {
      double sq = 0.0;
      for (auto& s : slots_) {
        if ((skip && skip(s.name)) || !s.param.has_grad()) continue;
        for (float g : s.param.grad()) sq += static_cast<double>(g) * g;
      }
      const double norm = std::sqrt(sq);
      if (norm > opts_.grad_clip) scale = static_cast<float>(opts_.grad_clip / norm);
    }
    for (auto& s : slots_) {
      if ((skip && skip(s.name)) || !s.param.has_grad()) continue;
      ++s.t;
      const float bc1 = 1.0f - std::pow(opts_.beta1, static_cast<float>(s.t));
      const float bc2 = 1.0f - std::pow(opts_.beta2, static_cast<float>(s.t));
      auto w = s.param.mutable_data();
      auto g = s.param.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const float gi = g[i] * scale;
        s.m[i] = opts_.beta1 * s.m[i] + (1.0f - opts_.beta1) * gi;
        s.v[i] = opts_.beta2 * s.v[i] + (1.0f - opts_.beta2) * gi * gi;
        w[i] -= opts_.lr * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + opts_.eps);
      }
    }
  }

  void set_lr(float lr) { opts_.lr = lr; }
  const AdamOptions& options() const { return opts_; }

 private:
  struct Slot {
    std::string name;
    Tensor param;
    std::vector<float> m, v;
    int64_t t;
  };
  AdamOptions opts_;
  std::vector<Slot> slots_;
};

}  // namespace qprior::nn

#endif  // QPRIOR_NN_HPP_

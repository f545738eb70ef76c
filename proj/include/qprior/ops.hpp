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

// Differentiable operators over ag::Tensor. Layout conventions:
//   images / feature maps  [C, H, W]
//   token matrices         [N, C] (row-major; a latent grid h x w x c is the
//                          token matrix with N = h * w)
#ifndef QPRIOR_OPS_HPP_
#define QPRIOR_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "qprior/autograd.hpp"
#include "qprior/gemm.hpp"

namespace qprior::ag {

namespace detail {

inline void check_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    fail(ErrorKind::kData, std::string(op) + ": shape mismatch " +
                               shape_str(a) + " vs " + shape_str(b));
  }
}

// Elementwise unary op from value map f and derivative df(x, y).
template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  std::vector<T> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_op<T>(x.shape(), std::move(out), {x}, [df](Node<T>& self) {
    T* gx = grad_of(self, 0);
    if (!gx) return;
    const T* xv = value_of(self, 0);
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      gx[i] += self.grad[i] * df(xv[i], self.value[i]);
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a.shape(), b.shape(), "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const T* av = value_of(self, 0);
    const T* bv = value_of(self, 1);
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (T* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary<T>(
      x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary<T>(
      x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

// x * s where s is a one-element tensor; differentiable in both.
template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, const Tensor<T>& s) {
  require(s.size() == 1, ErrorKind::kData, "mul_scalar: s must have one element");
  const T sv = s.item();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * sv;
  return make_op<T>(x.shape(), std::move(out), {x, s}, [](Node<T>& self) {
    const T* xv = value_of(self, 0);
    const T sv = value_of(self, 1)[0];
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * sv;
    }
    if (T* g = grad_of(self, 1)) {
      T acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xv[i];
      g[0] += acc;
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v > 0 ? v : T(0); },
      [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> silu(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v, T) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      });
}

// tanh-approximated GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T a = T(0.044715);
  return detail::unary<T>(
      x,
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v))); },
      [](T v, T) {
        const T u = c * (v + a * v * v * v);
        const T t = std::tanh(u);
        const T du = c * (T(1) + T(3) * a * v * v);
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du;
      });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// sqrt(x^2 + eps^2): smooth absolute value.
template <class T>
Tensor<T> smooth_abs(const Tensor<T>& x, T eps) {
  const T e2 = eps * eps;
  return detail::unary<T>(
      x, [e2](T v) { return std::sqrt(v * v + e2); },
      [](T v, T y) { return v / y; });
}

// log(1 + exp(k x)) / k, evaluated stably.
template <class T>
Tensor<T> softplus(const Tensor<T>& x, T k) {
  return detail::unary<T>(
      x,
      [k](T v) {
        const T z = k * v;
        return (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) / k;
      },
      [k](T v, T) { return T(1) / (T(1) + std::exp(-k * v)); });
}

// Hard clamp; gradient zero outside [lo, hi].
template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return detail::unary<T>(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// ----------------------------------------------------------------- reductions

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return make_op<T>({1}, {acc}, {x}, [](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// mean((a - b)^2)
template <class T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a.shape(), b.shape(), "mse");
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a[i] - b[i];
    acc += d * d;
  }
  const T inv_n = T(1) / static_cast<T>(a.size());
  return make_op<T>({1}, {acc * inv_n}, {a, b}, [inv_n](Node<T>& self) {
    const T* av = value_of(self, 0);
    const T* bv = value_of(self, 1);
    const std::size_t n = self.parents[0]->value.size();
    const T g0 = self.grad[0] * T(2) * inv_n;
    T* ga = grad_of(self, 0);
    T* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = g0 * (av[i] - bv[i]);
      if (ga) ga[i] += d;
      if (gb) gb[i] -= d;
    }
  });
}

// mean(|a - b|); subgradient 0 at ties.
template <class T>
Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a.shape(), b.shape(), "l1");
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  const T inv_n = T(1) / static_cast<T>(a.size());
  return make_op<T>({1}, {acc * inv_n}, {a, b}, [inv_n](Node<T>& self) {
    const T* av = value_of(self, 0);
    const T* bv = value_of(self, 1);
    const std::size_t n = self.parents[0]->value.size();
    const T g0 = self.grad[0] * inv_n;
    T* ga = grad_of(self, 0);
    T* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const T diff = av[i] - bv[i];
      const T s = diff > 0 ? g0 : (diff < 0 ? -g0 : T(0));
      if (ga) ga[i] += s;
      if (gb) gb[i] -= s;
    }
  });
}

// ------------------------------------------------------------ shape plumbing

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (!(numel(shape) == x.size())) {
    fail(ErrorKind::kData, "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return make_op<T>(std::move(shape), x.values(), {x}, [](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

// Value copy with no gradient path (stop-gradient).
template <class T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>::constant(x.shape(), x.values());
}

// Forward value of zq, gradient passed to z unchanged.
template <class T>
Tensor<T> straight_through(const Tensor<T>& z, const Tensor<T>& zq) {
  detail::check_same(z.shape(), zq.shape(), "straight_through");
  return make_op<T>(z.shape(), zq.values(), {z}, [](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  require(x.rank() == 2, ErrorKind::kData, "transpose expects a matrix");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.size());
  const auto in = x.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_op<T>({c, r}, std::move(out), {x}, [r, c](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

// [C, H, W] -> [H*W, C]
template <class T>
Tensor<T> chw_to_tokens(const Tensor<T>& x) {
  require(x.rank() == 3, ErrorKind::kData, "chw_to_tokens expects [C,H,W]");
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

// [H*W, C] -> [C, H, W]
template <class T>
Tensor<T> tokens_to_chw(const Tensor<T>& x, int h, int w) {
  require(x.rank() == 2 && x.dim(0) == h * w, ErrorKind::kData,
          "tokens_to_chw: token count mismatch");
  return reshape(transpose(x), {x.dim(1), h, w});
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int len) {
  require(x.rank() == 2 && start >= 0 && start + len <= x.dim(1),
          ErrorKind::kData, "slice_cols out of range");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<T> out(static_cast<std::size_t>(r) * len);
  const auto in = x.data();
  for (int i = 0; i < r; ++i)
    std::copy_n(in.begin() + i * c + start, len, out.begin() + i * len);
  return make_op<T>({r, len}, std::move(out), {x}, [r, c, start, len](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < len; ++j) g[i * c + start + j] += self.grad[i * len + j];
    }
  });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), ErrorKind::kData, "concat_cols of nothing");
  const int r = parts[0].dim(0);
  int c = 0;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.dim(0) == r, ErrorKind::kData, "concat_cols row mismatch");
    offsets.push_back(c);
    c += p.dim(1);
  }
  std::vector<T> out(static_cast<std::size_t>(r) * c);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const int w = parts[k].dim(1);
    const auto in = parts[k].data();
    for (int i = 0; i < r; ++i)
      std::copy_n(in.begin() + i * w, w, out.begin() + i * c + offsets[k]);
  }
  return make_op<T>({r, c}, std::move(out), parts, [r, c, offsets](Node<T>& self) {
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      T* g = grad_of(self, k);
      if (!g) continue;
      const int w = self.parents[k]->shape[1];
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) g[i * w + j] += self.grad[i * c + offsets[k] + j];
    }
  });
}

// Rows of `table` [K, D] selected by `rows`; gradient scatter-adds.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> rows) {
  require(table.rank() == 2, ErrorKind::kData, "gather_rows expects a matrix");
  const int k = table.dim(0), d = table.dim(1);
  std::vector<int> idx(rows.begin(), rows.end());
  std::vector<T> out(idx.size() * d);
  const auto tv = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < k, ErrorKind::kData, "gather_rows index out of range");
    std::copy_n(tv.begin() + static_cast<std::size_t>(idx[i]) * d, d, out.begin() + i * d);
  }
  const int n = static_cast<int>(idx.size());
  return make_op<T>({n, d}, std::move(out), {table}, [idx, d](Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < d; ++j)
          g[static_cast<std::size_t>(idx[i]) * d + j] += self.grad[i * d + j];
    }
  });
}

// ------------------------------------------------------------ linear algebra

// [M, K] x [K, N]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0))) {
    fail(ErrorKind::kData, "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  gemm<T>(false, false, m, n, k, T(1), a.data().data(), b.data().data(), T(0), out.data());
  return make_op<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      gemm<T>(false, true, m, k, n, T(1), self.grad.data(), value_of(self, 1), T(1), ga);
    if (T* gb = grad_of(self, 1))
      gemm<T>(true, false, k, n, m, T(1), value_of(self, 0), self.grad.data(), T(1), gb);
  });
}

// [M, K] x [N, K]^T
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1))) {
    fail(ErrorKind::kData, "matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  gemm<T>(false, true, m, n, k, T(1), a.data().data(), b.data().data(), T(0), out.data());
  return make_op<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    if (T* ga = grad_of(self, 0))
      gemm<T>(false, false, m, k, n, T(1), self.grad.data(), value_of(self, 1), T(1), ga);
    if (T* gb = grad_of(self, 1))
      gemm<T>(true, false, n, k, m, T(1), self.grad.data(), value_of(self, 0), T(1), gb);
  });
}

// x [N, C] + bias [C] broadcast over rows.
template <class T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require(x.rank() == 2 && bias.size() == static_cast<std::size_t>(x.dim(1)),
          ErrorKind::kData, "add_row_bias shape mismatch");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.values());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] += bias[j];
  return make_op<T>(x.shape(), std::move(out), {x, bias}, [r, c](Node<T>& self) {
    if (T* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (T* g = grad_of(self, 1))
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
  });
}

// Row-wise softmax of [N, K].
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require(x.rank() == 2, ErrorKind::kData, "softmax_rows expects a matrix");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.size());
  const auto in = x.data();
  for (int i = 0; i < r; ++i) {
    const T* row = in.data() + i * c;
    T* o = out.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (int j = 0; j < c; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (int j = 0; j < c; ++j) o[j] /= z;
  }
  return make_op<T>(x.shape(), std::move(out), {x}, [r, c](Node<T>& self) {
    T* g = grad_of(self, 0);
    if (!g) return;
    for (int i = 0; i < r; ++i) {
      const T* y = self.value.data() + i * c;
      const T* gy = self.grad.data() + i * c;
      T dot = 0;
      for (int j = 0; j < c; ++j) dot += y[j] * gy[j];
      for (int j = 0; j < c; ++j) g[i * c + j] += y[j] * (gy[j] - dot);
    }
  });
}

// sum_i -log softmax(logits_i)[target_i] over rows of [N, K].
template <class T>
Tensor<T> cross_entropy_sum(const Tensor<T>& logits, std::span<const int> targets) {
  require(logits.rank() == 2 && targets.size() == static_cast<std::size_t>(logits.dim(0)),
          ErrorKind::kData, "cross_entropy_sum: target count mismatch");
  const int r = logits.dim(0), c = logits.dim(1);
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<T> probs(logits.size());
  const auto in = logits.data();
  T total = 0;
  for (int i = 0; i < r; ++i) {
    if (!(tgt[i] >= 0 && tgt[i] < c)) {
      fail(ErrorKind::kData, "cross_entropy_sum: target " + std::to_string(tgt[i]) +
                                 " outside [0," + std::to_string(c) + ")");
    }
    const T* row = in.data() + i * c;
    T* p = probs.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (int j = 0; j < c; ++j) z += (p[j] = std::exp(row[j] - mx));
    for (int j = 0; j < c; ++j) p[j] /= z;
    total += -(row[tgt[i]] - mx - std::log(z));
  }
  return make_op<T>({1}, {total}, {logits},
                    [r, c, tgt, probs = std::move(probs)](Node<T>& self) {
                      T* g = grad_of(self, 0);
                      if (!g) return;
                      const T g0 = self.grad[0];
                      for (int i = 0; i < r; ++i) {
                        for (int j = 0; j < c; ++j) g[i * c + j] += g0 * probs[i * c + j];
                        g[i * c + tgt[i]] -= g0;
                      }
                    });
}

// Layer normalization over the last axis of [N, C] with affine gain/bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  require(x.rank() == 2 && gain.size() == static_cast<std::size_t>(x.dim(1)) &&
              bias.size() == gain.size(),
          ErrorKind::kData, "layer_norm shape mismatch");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<T> xhat(x.size()), rstd(r), out(x.size());
  const auto in = x.data();
  for (int i = 0; i < r; ++i) {
    const T* row = in.data() + i * c;
    T mu = 0;
    for (int j = 0; j < c; ++j) mu += row[j];
    mu /= c;
    T var = 0;
    for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= c;
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * rstd[i];
      out[i * c + j] = xhat[i * c + j] * gain[j] + bias[j];
    }
  }
  return make_op<T>(x.shape(), std::move(out), {x, gain, bias},
                    [r, c, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                      const T* gv = value_of(self, 1);
                      T* gx = grad_of(self, 0);
                      T* gg = grad_of(self, 1);
                      T* gb = grad_of(self, 2);
                      for (int i = 0; i < r; ++i) {
                        const T* dy = self.grad.data() + i * c;
                        const T* xh = xhat.data() + i * c;
                        if (gg || gb) {
                          for (int j = 0; j < c; ++j) {
                            if (gg) gg[j] += dy[j] * xh[j];
                            if (gb) gb[j] += dy[j];
                          }
                        }
                        if (!gx) continue;
                        T s1 = 0, s2 = 0;
                        for (int j = 0; j < c; ++j) {
                          const T d = dy[j] * gv[j];
                          s1 += d;
                          s2 += d * xh[j];
                        }
                        s1 /= c;
                        s2 /= c;
                        for (int j = 0; j < c; ++j) {
                          gx[i * c + j] += rstd[i] * (dy[j] * gv[j] - s1 - xh[j] * s2);
                        }
                      }
                    });
}

// ------------------------------------------------------------- convolutional

struct Conv2dGeometry {
  int in_channels, height, width, out_channels, kernel, stride, pad;
  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

namespace detail {

// Output columns [lo, hi) whose input column ox * stride - pad + k is inside
// [0, size).
inline void valid_range(int size, int out, int stride, int pad, int k, int& lo, int& hi) {
  const int off = k - pad;  // ix = ox * stride + off
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = (size - 1 - off) < 0 ? 0 : (size - 1 - off) / stride + 1;
  hi = std::min(hi, out);
  lo = std::min(lo, hi);
}

template <class T>
void im2col(const T* x, const Conv2dGeometry& g, T* cols) {
  const int ho = g.out_height(), wo = g.out_width();
  for (int c = 0; c < g.in_channels; ++c)
    for (int ky = 0; ky < g.kernel; ++ky)
      for (int kx = 0; kx < g.kernel; ++kx) {
        T* dst = cols + static_cast<std::size_t>((c * g.kernel + ky) * g.kernel + kx) * ho * wo;
        int lo, hi;
        valid_range(g.width, wo, g.stride, g.pad, kx, lo, hi);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* row = dst + oy * wo;
          if (iy < 0 || iy >= g.height) {
            std::fill(row, row + wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * g.height + iy) * g.width + kx - g.pad;
          std::fill(row, row + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox] = src[ox * g.stride];
          }
          std::fill(row + hi, row + wo, T(0));
        }
      }
}

template <class T>
void col2im(const T* cols, const Conv2dGeometry& g, T* x) {
  const int ho = g.out_height(), wo = g.out_width();
  for (int c = 0; c < g.in_channels; ++c)
    for (int ky = 0; ky < g.kernel; ++ky)
      for (int kx = 0; kx < g.kernel; ++kx) {
        const T* src = cols + static_cast<std::size_t>((c * g.kernel + ky) * g.kernel + kx) * ho * wo;
        int lo, hi;
        valid_range(g.width, wo, g.stride, g.pad, kx, lo, hi);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = x + (static_cast<std::size_t>(c) * g.height + iy) * g.width + kx - g.pad;
          const T* row = src + oy * wo;
          for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride] += row[ox];
        }
      }
}

}  // namespace detail

// x [Cin, H, W], weight [Cout, Cin, k, k], bias [Cout] (may be undefined).
// Zero padding.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int pad) {
  if (!(x.rank() == 3 && weight.rank() == 4 && weight.dim(1) == x.dim(0) &&
        weight.dim(2) == weight.dim(3))) {
    fail(ErrorKind::kData,
         "conv2d: input " + shape_str(x.shape()) + " weight " + shape_str(weight.shape()));
  }
  const Conv2dGeometry g{x.dim(0), x.dim(1), x.dim(2), weight.dim(0), weight.dim(2),
                         stride, pad};
  const int ho = g.out_height(), wo = g.out_width();
  require(ho > 0 && wo > 0, ErrorKind::kData, "conv2d: empty output");
  const int kk = g.in_channels * g.kernel * g.kernel;
  const int npix = ho * wo;
  const bool pointwise = g.kernel == 1 && stride == 1 && pad == 0;
  std::vector<T> cols;
  if (!pointwise) {
    cols.resize(static_cast<std::size_t>(kk) * npix);
    detail::im2col(x.data().data(), g, cols.data());
  }
  const T* colp = pointwise ? x.data().data() : cols.data();
  std::vector<T> out(static_cast<std::size_t>(g.out_channels) * npix);
  gemm<T>(false, false, g.out_channels, npix, kk, T(1), weight.data().data(), colp, T(0),
          out.data());
  const bool has_bias = bias.defined();
  if (has_bias) {
    require(bias.size() == static_cast<std::size_t>(g.out_channels), ErrorKind::kData,
            "conv2d: bias size mismatch");
    const T* bv = bias.data().data();
    for (int o = 0; o < g.out_channels; ++o) {
      T* row = out.data() + static_cast<std::size_t>(o) * npix;
      for (int p = 0; p < npix; ++p) row[p] += bv[o];
    }
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op<T>(
      {g.out_channels, ho, wo}, std::move(out), inputs,
      [g, kk, npix, pointwise, has_bias, cols = std::move(cols)](Node<T>& self) {
        const T* dy = self.grad.data();
        if (T* gw = grad_of(self, 1)) {
          const T* colp = pointwise ? value_of(self, 0) : cols.data();
          gemm<T>(false, true, g.out_channels, kk, npix, T(1), dy, colp, T(1), gw);
        }
        if (has_bias) {
          if (T* gb = grad_of(self, 2)) {
            for (int o = 0; o < g.out_channels; ++o) {
              T acc = 0;
              for (int p = 0; p < npix; ++p) acc += dy[o * npix + p];
              gb[o] += acc;
            }
          }
        }
        if (T* gx = grad_of(self, 0)) {
          if (pointwise) {
            gemm<T>(true, false, kk, npix, g.out_channels, T(1), value_of(self, 1), dy, T(1),
                    gx);
          } else {
            std::vector<T> dcols(static_cast<std::size_t>(kk) * npix);
            gemm<T>(true, false, kk, npix, g.out_channels, T(1), value_of(self, 1), dy, T(0),
                    dcols.data());
            detail::col2im(dcols.data(), g, gx);
          }
        }
      });
}

// Group normalization of [C, H, W] with per-channel affine.
template <class T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps = T(1e-5)) {
  require(x.rank() == 3 && x.dim(0) % groups == 0, ErrorKind::kData,
          "group_norm: channels not divisible by groups");
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2), cpg = c / groups;
  const int n = cpg * hw;
  std::vector<T> xhat(x.size()), rstd(groups), out(x.size());
  const auto in = x.data();
  for (int gi = 0; gi < groups; ++gi) {
    const T* src = in.data() + static_cast<std::size_t>(gi) * n;
    T mu = 0;
    for (int i = 0; i < n; ++i) mu += src[i];
    mu /= n;
    T var = 0;
    for (int i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= n;
    rstd[gi] = T(1) / std::sqrt(var + eps);
    for (int i = 0; i < n; ++i) {
      const std::size_t k = static_cast<std::size_t>(gi) * n + i;
      const int ch = gi * cpg + i / hw;
      xhat[k] = (src[i] - mu) * rstd[gi];
      out[k] = xhat[k] * gain[ch] + bias[ch];
    }
  }
  return make_op<T>(
      x.shape(), std::move(out), {x, gain, bias},
      [groups, cpg, hw, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        const T* gv = value_of(self, 1);
        T* gx = grad_of(self, 0);
        T* gg = grad_of(self, 1);
        T* gb = grad_of(self, 2);
        for (int gi = 0; gi < groups; ++gi) {
          const std::size_t base = static_cast<std::size_t>(gi) * n;
          T s1 = 0, s2 = 0;
          for (int i = 0; i < n; ++i) {
            const int ch = gi * cpg + i / hw;
            const T dy = self.grad[base + i];
            if (gg) gg[ch] += dy * xhat[base + i];
            if (gb) gb[ch] += dy;
            const T d = dy * gv[ch];
            s1 += d;
            s2 += d * xhat[base + i];
          }
          if (!gx) continue;
          s1 /= n;
          s2 /= n;
          for (int i = 0; i < n; ++i) {
            const int ch = gi * cpg + i / hw;
            const T d = self.grad[base + i] * gv[ch];
            gx[base + i] += rstd[gi] * (d - s1 - xhat[base + i] * s2);
          }
        }
      });
}

// Nearest-neighbour 2x upsampling of [C, H, W].
template <class T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  require(x.rank() == 3, ErrorKind::kData, "upsample2x expects [C,H,W]");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<T> out(x.size() * 4);
  const auto in = x.data();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        out[(ch * 2 * h + y) * 2 * w + xx] = in[(ch * h + y / 2) * w + xx / 2];
  return make_op<T>({c, 2 * h, 2 * w}, std::move(out), {x}, [c, h, w](Node<T>& self) {
    T* g = grad_of(self, 0);
    if (!g) return;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          g[(ch * h + y / 2) * w + xx / 2] += self.grad[(ch * 2 * h + y) * 2 * w + xx];
  });
}

// sum_c weights[c] * x[c] for x [C, H, W]; result [1, H, W].
template <class T>
Tensor<T> channel_weighted_sum(const Tensor<T>& x, std::vector<T> weights) {
  require(x.rank() == 3 && weights.size() == static_cast<std::size_t>(x.dim(0)),
          ErrorKind::kData, "channel_weighted_sum: weight count mismatch");
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  std::vector<T> out(hw, T(0));
  const auto in = x.data();
  for (int ch = 0; ch < c; ++ch)
    for (int p = 0; p < hw; ++p) out[p] += weights[ch] * in[ch * hw + p];
  return make_op<T>({1, x.dim(1), x.dim(2)}, std::move(out), {x},
                    [c, hw, weights = std::move(weights)](Node<T>& self) {
                      if (T* g = grad_of(self, 0))
                        for (int ch = 0; ch < c; ++ch)
                          for (int p = 0; p < hw; ++p) g[ch * hw + p] += weights[ch] * self.grad[p];
                    });
}

}  // namespace qprior::ag

#endif  // QPRIOR_OPS_HPP_

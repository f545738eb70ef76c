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

#include "qprior/gemm.hpp"

#include <Eigen/Core>

namespace qprior::ag {

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
          const T* a, const T* b, T beta, T* c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> cm(c, m, n);
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  // Stored shapes: A is (m x k) or (k x m) when transposed; same for B.
  if (!trans_a && !trans_b) {
    cm.noalias() += alpha * ConstMap(a, m, k) * ConstMap(b, k, n);
  } else if (trans_a && !trans_b) {
    cm.noalias() += alpha * ConstMap(a, k, m).transpose() * ConstMap(b, k, n);
  } else if (!trans_a && trans_b) {
    cm.noalias() += alpha * ConstMap(a, m, k) * ConstMap(b, n, k).transpose();
  } else {
    cm.noalias() +=
        alpha * ConstMap(a, k, m).transpose() * ConstMap(b, n, k).transpose();
  }
}

template void gemm<float>(bool, bool, int, int, int, float, const float*,
                          const float*, float, float*);
template void gemm<double>(bool, bool, int, int, int, double, const double*,
                           const double*, double, double*);

}  // namespace qprior::ag

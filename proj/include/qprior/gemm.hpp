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

#ifndef QPRIOR_GEMM_HPP_
#define QPRIOR_GEMM_HPP_

namespace qprior::ag {

// Row-major C = beta * C + alpha * op(A) * op(B), where op(A) is M x K and
// op(B) is K x N. Instantiated for float and double in gemm.cpp.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
          const T* a, const T* b, T beta, T* c);

}  // namespace qprior::ag

#endif  // QPRIOR_GEMM_HPP_

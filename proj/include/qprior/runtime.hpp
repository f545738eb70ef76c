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

// Process-level tuning shared by the executables.
#ifndef QPRIOR_RUNTIME_HPP_
#define QPRIOR_RUNTIME_HPP_

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace qprior {

// Per-sample graphs allocate and free many mid-sized buffers. Keeping them
// on the heap instead of fresh mmaps avoids page-fault churn.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

}  // namespace qprior

#endif  // QPRIOR_RUNTIME_HPP_

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

// Full-reference fidelity metrics.
#ifndef QPRIOR_METRICS_HPP_
#define QPRIOR_METRICS_HPP_

#include "qprior/image.hpp"

namespace qprior {

// Reported for identical images, where PSNR is unbounded.
inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) over all pixels and channels, peak 1.0; capped at
// kPsnrCap. Shapes must match.
double psnr(const Image& a, const Image& b);

// Mean SSIM over 7x7 uniform windows (valid positions only, sample
// covariance), C1 = 0.01^2, C2 = 0.03^2, averaged over channels.
double ssim(const Image& a, const Image& b);

}  // namespace qprior

#endif  // QPRIOR_METRICS_HPP_

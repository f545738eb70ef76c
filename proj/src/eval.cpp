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

#include "qprior/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "qprior/metrics.hpp"

namespace qprior {

std::vector<NamedImage> load_png_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), ErrorKind::kData, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (de.is_regular_file() && de.path().extension() == ".png") files.push_back(de.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedImage> out;
  for (const auto& f : files) out.push_back({f.filename().string(), load_png(f)});
  return out;
}

EvalReport evaluate_pairs(const std::vector<NamedImage>& restored,
                          const std::vector<NamedImage>& reference, const ScorerEnsemble& ens) {
  std::map<std::string, const Image*> ref;
  for (const auto& r : reference) ref[r.name] = &r.image;
  EvalReport rep;
  rep.scorer_names = ens.names();
  rep.mean_normalized.assign(ens.size(), 0.0);
  std::map<std::string, bool> used;
  for (const auto& r : restored) {
    const auto it = ref.find(r.name);
    if (it == ref.end()) {
      rep.unmatched.push_back(r.name);
      continue;
    }
    used[r.name] = true;
    EvalRow row;
    row.name = r.name;
    row.psnr = psnr(r.image, *it->second);
    row.ssim = ssim(r.image, *it->second);
    row.quality = score_image(r.image, ens);
    rep.rows.push_back(std::move(row));
  }
  for (const auto& r : reference) {
    if (!used.count(r.name)) rep.unmatched.push_back(r.name);
  }
  std::sort(rep.unmatched.begin(), rep.unmatched.end());
  require(!rep.rows.empty(), ErrorKind::kData, "no file names match between the two directories");
  for (const auto& row : rep.rows) {
    rep.mean_psnr += row.psnr;
    rep.mean_ssim += row.ssim;
    rep.mean_ensemble += row.quality.ensemble;
    for (std::size_t i = 0; i < ens.size(); ++i)
      rep.mean_normalized[i] += row.quality.normalized_scores[i];
  }
  const double n = static_cast<double>(rep.rows.size());
  rep.mean_psnr /= n;
  rep.mean_ssim /= n;
  rep.mean_ensemble /= n;
  for (double& v : rep.mean_normalized) v /= n;
  return rep;
}

EvalReport evaluate_dirs(const std::filesystem::path& restored,
                         const std::filesystem::path& reference, const ScorerEnsemble& ens) {
  return evaluate_pairs(load_png_dir(restored), load_png_dir(reference), ens);
}

std::string format_eval(const EvalReport& r) {
  std::ostringstream os;
  char buf[64];
  os << "name\tpsnr\tssim";
  for (const auto& n : r.scorer_names) os << "\t" << n;
  os << "\tensemble\n";
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& row : r.rows) {
    os << row.name << '\t' << num(row.psnr) << '\t' << num(row.ssim);
    for (double s : row.quality.normalized_scores) os << '\t' << num(s);
    os << '\t' << num(row.quality.ensemble) << '\n';
  }
  os << "#mean\t" << num(r.mean_psnr) << '\t' << num(r.mean_ssim);
  for (double s : r.mean_normalized) os << '\t' << num(s);
  os << '\t' << num(r.mean_ensemble) << '\n';
  for (const auto& u : r.unmatched) os << "#unmatched\t" << u << '\n';
  return os.str();
}

Histogram histogram01(const std::vector<double>& values, int bins) {
  require(bins >= 1, ErrorKind::kUsage, "histogram needs at least one bin");
  Histogram h;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(static_cast<double>(i) / bins);
  h.counts.assign(bins, 0);
  for (double v : values) {
    const int b = std::clamp(static_cast<int>(v * bins), 0, bins - 1);
    ++h.counts[b];
  }
  return h;
}

}  // namespace qprior

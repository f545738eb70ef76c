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

#include "qprior/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace qprior {
namespace {

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_real(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::kData, "manifest line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

ScorerEnsemble DatasetManifest::ensemble() const {
  std::vector<ProxyScorer> scorers;
  for (const auto& n : scorer_names) scorers.push_back(make_scorer(n));
  return ScorerEnsemble(std::move(scorers), calibrations);
}

std::vector<double> DatasetManifest::ensemble_scores() const {
  std::vector<double> out;
  for (const auto& e : entries) out.push_back(e.record.ensemble);
  return out;
}

double quantile_midpoint(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::kData, "quantile of an empty score set");
  require(q >= 0.0 && q <= 1.0, ErrorKind::kUsage, "quantile must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return 0.5 * (values[lo] + values[hi]);
}

DatasetManifest build_manifest(const std::filesystem::path& image_dir,
                               const ScorerEnsemble& scorers, const ManifestOptions& options) {
  namespace fs = std::filesystem;
  require(options.quantile > 0.0 && options.quantile < 1.0, ErrorKind::kUsage,
          "quantile must lie in (0,1)");
  require(fs::is_directory(image_dir), ErrorKind::kData,
          "image directory not found: " + image_dir.string());
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(image_dir)) {
    if (de.is_regular_file() && de.path().extension() == ".png") files.push_back(de.path());
  }
  std::sort(files.begin(), files.end());

  DatasetManifest m;
  m.scorer_names = scorers.names();
  m.quantile = options.quantile;
  std::vector<std::string> paths;
  std::vector<std::vector<double>> raw;
  for (const auto& f : files) {
    require(f.string().find('\t') == std::string::npos, ErrorKind::kData,
            "paths containing tabs are not supported: " + f.string());
    try {
      const Image img = load_png(f);
      raw.push_back(scorers.raw_scores(img));
      paths.push_back(f.string());
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
      m.skipped.push_back({f.string(), e.what()});
    }
  }
  require(!paths.empty(), ErrorKind::kData,
          "no decodable images in " + image_dir.string());

  m.calibrations = options.fit_calibration ? fit_calibrations(scorers.scorers(), raw)
                                           : scorers.calibrations();
  const ScorerEnsemble fitted(scorers.scorers(), m.calibrations);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    m.entries.push_back({paths[i], fitted.record_from_raw(raw[i]), options.split});
  }
  m.threshold = quantile_midpoint(m.ensemble_scores(), options.quantile);
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << "#qprior-manifest\t1\n";
  os << "path\tsplit";
  for (const auto& n : m.scorer_names) os << "\traw_" << n;
  for (const auto& n : m.scorer_names) os << "\tnorm_" << n;
  os << "\tensemble\n";
  for (const auto& e : m.entries) {
    os << e.path << '\t' << e.split;
    for (double v : e.record.raw_scores) os << '\t' << fmt_real(v);
    for (double v : e.record.normalized_scores) os << '\t' << fmt_real(v);
    os << '\t' << fmt_real(e.record.ensemble) << '\n';
  }
  for (std::size_t i = 0; i < m.calibrations.size(); ++i) {
    const auto& c = m.calibrations[i];
    os << "#calibration\t" << m.scorer_names[i] << '\t' << fmt_real(c.raw_min) << '\t'
       << fmt_real(c.raw_max) << '\t' << orientation_name(c.orientation) << '\n';
  }
  for (const auto& s : m.skipped) {
    std::string reason = s.reason;
    std::replace(reason.begin(), reason.end(), '\t', ' ');
    std::replace(reason.begin(), reason.end(), '\n', ' ');
    os << "#skipped\t" << s.path << '\t' << reason << '\n';
  }
  os << "#threshold\t" << fmt_real(m.threshold) << '\t' << fmt_real(m.quantile) << '\n';
  return os.str();
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kData, "cannot write manifest " + path.string());
  out << format_manifest(m);
  require(static_cast<bool>(out), ErrorKind::kData, "error writing manifest " + path.string());
}

DatasetManifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  DatasetManifest m;
  bool have_magic = false, have_header = false, have_threshold = false;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f[0] == "#qprior-manifest") {
      require(f.size() == 2 && f[1] == "1", ErrorKind::kData,
              "unsupported manifest version '" + (f.size() > 1 ? f[1] : "") + "' (expected 1)");
      have_magic = true;
    } else if (f[0] == "path") {
      require(f.size() >= 5 && (f.size() - 3) % 2 == 0, ErrorKind::kData,
              "malformed manifest header");
      n = (f.size() - 3) / 2;
      for (std::size_t i = 0; i < n; ++i) {
        require(f[2 + i].rfind("raw_", 0) == 0, ErrorKind::kData, "malformed manifest header");
        m.scorer_names.push_back(f[2 + i].substr(4));
      }
      have_header = true;
    } else if (f[0] == "#calibration") {
      require(f.size() == 5, ErrorKind::kData,
              "manifest line " + std::to_string(lineno) + ": malformed calibration");
      m.calibrations.push_back(
          {parse_real(f[2], lineno), parse_real(f[3], lineno), parse_orientation(f[4])});
    } else if (f[0] == "#skipped") {
      m.skipped.push_back({f.size() > 1 ? f[1] : "", f.size() > 2 ? f[2] : ""});
    } else if (f[0] == "#threshold") {
      require(f.size() == 3, ErrorKind::kData, "malformed threshold footer");
      m.threshold = parse_real(f[1], lineno);
      m.quantile = parse_real(f[2], lineno);
      have_threshold = true;
    } else if (f[0].starts_with("#")) {
      continue;
    } else {
      require(have_header, ErrorKind::kData, "manifest record before header");
      require(f.size() == 3 + 2 * n, ErrorKind::kData,
              "manifest line " + std::to_string(lineno) + ": expected " +
                  std::to_string(3 + 2 * n) + " fields");
      ManifestEntry e;
      e.path = f[0];
      e.split = f[1];
      for (std::size_t i = 0; i < n; ++i) e.record.raw_scores.push_back(parse_real(f[2 + i], lineno));
      for (std::size_t i = 0; i < n; ++i)
        e.record.normalized_scores.push_back(parse_real(f[2 + n + i], lineno));
      e.record.ensemble = parse_real(f[2 + 2 * n], lineno);
      require(e.record.ensemble >= 0.0 && e.record.ensemble <= 1.0, ErrorKind::kData,
              "manifest line " + std::to_string(lineno) + ": ensemble score outside [0,1]");
      m.entries.push_back(std::move(e));
    }
  }
  require(have_magic, ErrorKind::kData, "not a qprior manifest (missing magic line)");
  require(have_header && have_threshold, ErrorKind::kData, "manifest missing header or threshold");
  require(m.calibrations.size() == m.scorer_names.size(), ErrorKind::kData,
          "manifest needs one calibration per scorer");
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kData, "cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

}  // namespace qprior

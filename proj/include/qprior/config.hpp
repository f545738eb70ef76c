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

// Run configuration: a flat `key = value` file over documented defaults.
#ifndef QPRIOR_CONFIG_HPP_
#define QPRIOR_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qprior/quality_opt.hpp"

namespace qprior {

// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "QPRIOR_CONFIG";

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string doc;
};

// Every recognised key with its default, in documentation order.
const std::vector<ConfigKey>& config_keys();

class RunConfig {
 public:
  RunConfig();  // all defaults

  // Parses `key = value` lines; '#' starts a comment. Unknown keys and
  // malformed lines are rejected (kUsage) with the list of valid keys.
  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  // "key=value" override.
  void apply_override(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  uint64_t seed() const;
  std::vector<std::string> get_list(const std::string& key) const;

  EncoderDecoderConfig autoencoder() const;
  Stage1Config stage1() const;
  Stage2Config stage2() const;
  // Stage-2 settings with the finetune batch size, rate and lambda2.
  Stage2Config finetune() const;
  int finetune_steps() const;
  DegradationRange degradation() const;
  OveroptOptions overopt() const;
  ManifestOptions manifest_options() const;

  // Canonical text of every key, sorted.
  std::string dump() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace qprior

#endif  // QPRIOR_CONFIG_HPP_

// Copyright 2026 The MHASRF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mhasrf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mhasrf {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw UsageError("config: '" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw UsageError("config: '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("config: '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (num_trees < 1) throw UsageError("config: num_trees must be >= 1");
  if (depth < 1 || depth > 16) throw UsageError("config: depth must be in [1, 16]");
  if (heads < 1) throw UsageError("config: heads must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("config: learning_rate must be > 0");
  if (batch_size < 1) throw UsageError("config: batch_size must be >= 1");
  if (!(tau > 0.0)) throw UsageError("config: tau must be > 0");
  if (!(epsilon > 0.0)) throw UsageError("config: epsilon must be > 0");
  if (hidden_units < 1) throw UsageError("config: hidden_units must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw UsageError("config: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw UsageError("config: adam_eps must be > 0");
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config: line " + std::to_string(number) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  auto& t = config.train;
  auto& s = config.synthetic;
  using Setter = std::function<void()>;
  const std::map<std::string, Setter> setters = {
      {"num_trees", [&] { t.num_trees = to_unsigned(key, value); }},
      {"depth", [&] { t.depth = to_unsigned(key, value); }},
      {"heads", [&] { t.heads = to_unsigned(key, value); }},
      {"learning_rate", [&] { t.learning_rate = to_double(key, value); }},
      {"stage1_epochs", [&] { t.stage1_epochs = to_unsigned(key, value); }},
      {"stage2_epochs", [&] { t.stage2_epochs = to_unsigned(key, value); }},
      {"batch_size", [&] { t.batch_size = to_unsigned(key, value); }},
      {"seed", [&] { t.seed = to_unsigned(key, value); }},
      {"tau", [&] { t.tau = to_double(key, value); }},
      {"epsilon", [&] { t.epsilon = to_double(key, value); }},
      {"adam_beta1", [&] { t.adam_beta1 = to_double(key, value); }},
      {"adam_beta2", [&] { t.adam_beta2 = to_double(key, value); }},
      {"adam_eps", [&] { t.adam_eps = to_double(key, value); }},
      {"hidden_units", [&] { t.hidden_units = to_unsigned(key, value); }},
      {"use_reliability", [&] { t.use_reliability = to_bool(key, value); }},
      {"train_fraction", [&] { config.train_fraction = to_double(key, value); }},
      {"rows", [&] { config.rows = to_unsigned(key, value); }},
      {"base_rate", [&] { s.base_rate = to_double(key, value); }},
      {"reason_weight", [&] { s.reason_weight = to_double(key, value); }},
      {"type_weight", [&] { s.type_weight = to_double(key, value); }},
      {"history_weight", [&] { s.history_weight = to_double(key, value); }},
      {"cancel_rate", [&] { s.cancel_rate = to_double(key, value); }},
      {"patients", [&] { s.patients = to_unsigned(key, value); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw UsageError("config: unknown key '" + key + "'");
  it->second();
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  for (const auto& [key, value] : parse_key_values(text.str())) apply_setting(base, key, value);
  return base;
}

}  // namespace mhasrf

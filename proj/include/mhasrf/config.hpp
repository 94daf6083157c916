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

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mhasrf/data_pipeline.hpp"

namespace mhasrf {

// Hyperparameters of the two-stage model. Defaults are the reference setup:
// 100 trees of depth 3, three heads, learning rate 0.01.
struct TrainConfig {
  std::size_t num_trees = 100;
  std::size_t depth = 3;
  std::size_t heads = 3;
  double learning_rate = 0.01;
  std::size_t stage1_epochs = 100;
  std::size_t stage2_epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double tau = 1.0;
  double epsilon = 1e-6;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t hidden_units = 16;
  // false drops the reliability term from the attention scores.
  bool use_reliability = true;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Everything a `key = value` config file can set.
struct RunConfig {
  TrainConfig train;
  SyntheticConfig synthetic;
  double train_fraction = 0.8;
  std::size_t rows = 10000;
};

// Flat `key = value` text. '#' starts a comment. Unknown keys are a usage error.
std::map<std::string, std::string> parse_key_values(const std::string& text);
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
RunConfig load_run_config(const std::string& path, RunConfig base = {});

}  // namespace mhasrf

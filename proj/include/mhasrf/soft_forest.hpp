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
#include <span>
#include <vector>

#include "mhasrf/config.hpp"
#include "mhasrf/data_pipeline.hpp"
#include "mhasrf/soft_tree.hpp"

namespace mhasrf {

// Context of one tree: per-leaf mean input (A), mean one-hot target (B) and
// instance count, from hard-routing the training set.
struct TreeLeafStats {
  Matrix mean_x;  // leaves x d
  Matrix mean_y;  // leaves x C
  std::vector<std::size_t> count;

  friend bool operator==(const TreeLeafStats&, const TreeLeafStats&) = default;
};

struct LeafContext {
  std::span<const double> mean_x;  // A_k(x)
  std::span<const double> mean_y;  // B_k(x)
  bool fallback = false;           // the leaf was empty; global statistics returned
};

struct SoftForest {
  std::vector<SoftTree> trees;
  std::vector<TreeLeafStats> stats;  // empty until compute_leaf_stats
  std::vector<double> errors;        // C_k in [0, 1]
  std::vector<double> global_mean_x;
  std::vector<double> global_class_freq;
  std::uint64_t bootstrap_seed = 0;

  std::size_t size() const { return trees.size(); }
  bool has_stats() const { return !stats.empty(); }
  std::size_t num_features() const { return trees.empty() ? 0 : trees[0].num_features(); }
  std::size_t num_classes() const { return trees.empty() ? 0 : trees[0].num_classes(); }

  // Hard-routes x in tree k and returns that leaf's context.
  LeafContext lookup_context(std::span<const double> x, std::size_t k) const;

  friend bool operator==(const SoftForest&, const SoftForest&) = default;
};

// Sampling with replacement, n draws, stream seeded by seed + tree_index.
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed,
                                           std::size_t tree_index);

// Fits one soft tree by Adam on per-sample cross-entropy over the given rows.
SoftTree fit_soft_tree(const Matrix& x, std::span<const int> y, std::size_t num_classes,
                       std::span<const std::size_t> rows, const TrainConfig& config,
                       std::mt19937_64& rng);

// Stage 1: every tree on its own bootstrap sample, then frozen. Stats are not
// computed here.
SoftForest fit_stage1(const FeatureFrame& train, const TrainConfig& config);

// Fills A, B, counts, C_k and the global fallback from the full training set.
SoftForest compute_leaf_stats(SoftForest forest, const FeatureFrame& train);

}  // namespace mhasrf

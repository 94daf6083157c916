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

#include <iosfwd>
#include <string>
#include <vector>

#include "mhasrf/attention.hpp"
#include "mhasrf/soft_forest.hpp"

namespace mhasrf {

struct Model;

struct TreeImportance {
  Matrix per_tree;            // T x d: mean |w| over each tree's inner nodes
  std::vector<double> scores;  // column means over trees
};

TreeImportance tree_importance(const SoftForest& forest);

// Dataset mean of |head-mean alpha_final_k(x)| per tree. x is standardized.
std::vector<double> mean_tree_attention(const SoftForest& forest, const AttentionParams& params,
                                        const Matrix& x);

// (1/T) sum_k alpha_bar_k * I_tree,k.
std::vector<double> attention_importance(const TreeImportance& tree,
                                         std::span<const double> alpha_bar);
std::vector<double> attention_importance(const SoftForest& forest, const AttentionParams& params,
                                         const Matrix& x);

// Scales to sum 1. Throws on an all-zero or negative vector.
std::vector<double> normalized(std::span<const double> v);

// Normalize each input, then average element-wise.
std::vector<double> combined_importance(std::span<const double> tree_scores,
                                        std::span<const double> attention_scores);

struct ImportanceRow {
  std::string feature;
  double tree = 0.0;
  double attention = 0.0;
  double combined = 0.0;  // already a share
  double tree_share = 0.0;
  double attention_share = 0.0;
};

struct ImportanceReport {
  std::vector<ImportanceRow> rows;  // model feature order

  // Indices into rows by descending combined share; ties keep feature order.
  std::vector<std::size_t> ranking() const;
  void write_csv(std::ostream& out) const;
  void write_json(std::ostream& out) const;
};

// x holds encoded (unstandardized) features of the evaluation rows.
ImportanceReport importance_report(const Model& model, const Matrix& x);

}  // namespace mhasrf

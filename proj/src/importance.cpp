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

#include "mhasrf/importance.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "mhasrf/csv.hpp"
#include "mhasrf/trainer.hpp"

namespace mhasrf {
namespace {

std::string number(double v) { return nlohmann::json(v).dump(); }

}  // namespace

TreeImportance tree_importance(const SoftForest& forest) {
  if (forest.size() == 0) throw DataError("tree_importance: empty forest");
  const std::size_t T = forest.size();
  const std::size_t d = forest.num_features();
  TreeImportance out{Matrix(T, d), std::vector<double>(d, 0.0)};
  for (std::size_t k = 0; k < T; ++k) {
    const SoftTree& tree = forest.trees[k];
    const double inv_nodes = 1.0 / static_cast<double>(tree.num_inner());
    for (std::size_t n = 0; n < tree.num_inner(); ++n) {
      auto w = tree.node_weights(n);
      for (std::size_t j = 0; j < d; ++j) out.per_tree(k, j) += std::abs(w[j]) * inv_nodes;
    }
  }
  for (std::size_t k = 0; k < T; ++k) {
    for (std::size_t j = 0; j < d; ++j) out.scores[j] += out.per_tree(k, j);
  }
  for (auto& s : out.scores) s /= static_cast<double>(T);
  return out;
}

std::vector<double> mean_tree_attention(const SoftForest& forest, const AttentionParams& params,
                                        const Matrix& x) {
  if (x.rows() == 0) throw DataError("attention_importance: empty data");
  const ContextCache cache = build_context(forest, x);
  const std::size_t T = forest.size();
  const std::size_t H = params.heads;
  std::vector<double> alpha_bar(T, 0.0);
  AttentionKernel kernel(T, params);
  for (std::size_t i = 0; i < cache.rows; ++i) {
    kernel.forward(params, forest.errors, cache.distances(i), cache.targets(i));
    auto af = kernel.alpha_final();
    for (std::size_t k = 0; k < T; ++k) {
      double head_mean = 0.0;
      for (std::size_t h = 0; h < H; ++h) head_mean += af[k * H + h];
      alpha_bar[k] += std::abs(head_mean / static_cast<double>(H));
    }
  }
  for (auto& a : alpha_bar) a /= static_cast<double>(cache.rows);
  return alpha_bar;
}

std::vector<double> attention_importance(const TreeImportance& tree,
                                         std::span<const double> alpha_bar) {
  const std::size_t T = tree.per_tree.rows();
  const std::size_t d = tree.per_tree.cols();
  if (alpha_bar.size() != T) throw DataError("attention_importance: tree count mismatch");
  std::vector<double> out(d, 0.0);
  for (std::size_t k = 0; k < T; ++k) {
    for (std::size_t j = 0; j < d; ++j) out[j] += alpha_bar[k] * tree.per_tree(k, j);
  }
  for (auto& v : out) v /= static_cast<double>(T);
  return out;
}

std::vector<double> attention_importance(const SoftForest& forest, const AttentionParams& params,
                                         const Matrix& x) {
  return attention_importance(tree_importance(forest), mean_tree_attention(forest, params, x));
}

std::vector<double> normalized(std::span<const double> v) {
  double total = 0.0;
  for (double x : v) {
    if (x < 0.0 || !std::isfinite(x)) throw DataError("importance: scores must be finite and >= 0");
    total += x;
  }
  if (total <= 0.0) throw DataError("importance: all scores are zero");
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= total;
  return out;
}

std::vector<double> combined_importance(std::span<const double> tree_scores,
                                        std::span<const double> attention_scores) {
  if (tree_scores.size() != attention_scores.size()) {
    throw DataError("combined_importance: length mismatch");
  }
  double tree_total = 0.0, attention_total = 0.0;
  for (double v : tree_scores) tree_total += v;
  for (double v : attention_scores) attention_total += v;
  if (tree_total <= 0.0 && attention_total <= 0.0) {
    throw DataError("combined_importance: both vectors are all-zero");
  }
  // A vector with no mass defers to the other one.
  const auto a = normalized(tree_total > 0.0 ? tree_scores : attention_scores);
  const auto b = normalized(attention_total > 0.0 ? attention_scores : tree_scores);
  std::vector<double> out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = 0.5 * (a[j] + b[j]);
  return out;
}

std::vector<std::size_t> ImportanceReport::ranking() const {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rows[a].combined > rows[b].combined;
  });
  return order;
}

void ImportanceReport::write_csv(std::ostream& out) const {
  csv::write_row(out, {"feature", "I_tree", "I_attention", "I_combined", "share"});
  for (std::size_t idx : ranking()) {
    const auto& r = rows[idx];
    csv::write_row(out, {r.feature, number(r.tree), number(r.attention), number(r.combined),
                         number(r.combined)});
  }
}

void ImportanceReport::write_json(std::ostream& out) const {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t idx : ranking()) {
    const auto& r = rows[idx];
    features.push_back({{"feature", r.feature},
                        {"I_tree", r.tree},
                        {"I_attention", r.attention},
                        {"I_combined", r.combined},
                        {"tree_share", r.tree_share},
                        {"attention_share", r.attention_share},
                        {"share", r.combined}});
  }
  out << nlohmann::json{{"features", features}}.dump(2) << '\n';
}

ImportanceReport importance_report(const Model& model, const Matrix& x) {
  const Matrix xs = model.standardizer.apply(x);
  const TreeImportance tree = tree_importance(model.forest);
  const auto attention =
      attention_importance(tree, mean_tree_attention(model.forest, model.attention, xs));
  const auto combined = combined_importance(tree.scores, attention);
  const auto tree_share = normalized(tree.scores);
  const bool attention_zero =
      std::all_of(attention.begin(), attention.end(), [](double v) { return v == 0.0; });
  const auto attention_share =
      attention_zero ? std::vector<double>(attention.size(), 0.0) : normalized(attention);
  ImportanceReport report;
  for (std::size_t j = 0; j < tree.scores.size(); ++j) {
    report.rows.push_back({model.feature_names[j], tree.scores[j], attention[j], combined[j],
                           tree_share[j], attention_share[j]});
  }
  return report;
}

}  // namespace mhasrf

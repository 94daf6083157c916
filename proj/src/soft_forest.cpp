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

#include "mhasrf/soft_forest.hpp"

#include <numeric>
#include <string>

#include "mhasrf/adam.hpp"

namespace mhasrf {
namespace {

constexpr std::uint64_t kBootstrapStream = 1;
constexpr std::uint64_t kTreeStream = 2;

}  // namespace

LeafContext SoftForest::lookup_context(std::span<const double> x, std::size_t k) const {
  if (!has_stats()) throw DataError("lookup_context: leaf statistics not computed");
  const std::size_t leaf = trees[k].hard_leaf(x);
  const TreeLeafStats& s = stats[k];
  if (s.count[leaf] == 0) return {global_mean_x, global_class_freq, true};
  return {s.mean_x.row(leaf), s.mean_y.row(leaf), false};
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed,
                                           std::size_t tree_index) {
  auto rng = make_rng(seed + tree_index, kBootstrapStream);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = pick(rng);
  return out;
}

SoftTree fit_soft_tree(const Matrix& x, std::span<const int> y, std::size_t num_classes,
                       std::span<const std::size_t> rows, const TrainConfig& config,
                       std::mt19937_64& rng) {
  SoftTree tree = SoftTree::random_init(config.depth, x.cols(), num_classes, rng);
  SoftTreeWorkspace ws(tree);
  Adam adam(tree.parameters().size(), {config.learning_rate, config.adam_beta1,
                                       config.adam_beta2, config.adam_eps});
  std::vector<double> grad(tree.parameters().size());
  std::vector<std::size_t> order(rows.begin(), rows.end());

  for (std::size_t epoch = 0; epoch < config.stage1_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        batch_loss += ws.accumulate_gradient(tree, x.row(i), y[i], scale, grad);
      }
      if (!std::isfinite(batch_loss) || !all_finite(grad)) {
        throw NumericalError("stage 1: non-finite loss or gradient at epoch " +
                             std::to_string(epoch + 1) + " (learning rate too large?)");
      }
      adam.step(tree.parameters(), grad);
      ws.refresh_leaves(tree);
    }
  }
  if (!all_finite(tree.parameters())) throw NumericalError("stage 1: non-finite tree parameters");
  return tree;
}

SoftForest fit_stage1(const FeatureFrame& train, const TrainConfig& config) {
  config.validate();
  if (train.size() == 0) throw DataError("fit_stage1: empty training frame");
  SoftForest forest;
  forest.bootstrap_seed = config.seed;
  forest.trees.resize(config.num_trees);
  parallel_for(config.num_trees, [&](std::size_t k) {
    const auto rows = bootstrap_indices(train.size(), config.seed, k);
    auto rng = make_rng(config.seed + k, kTreeStream);
    forest.trees[k] = fit_soft_tree(train.x, train.y, train.num_classes, rows, config, rng);
  });
  return forest;
}

SoftForest compute_leaf_stats(SoftForest forest, const FeatureFrame& train) {
  const std::size_t n = train.size();
  if (n == 0) throw DataError("compute_leaf_stats: empty training frame");
  const std::size_t d = train.num_features();
  const std::size_t C = train.num_classes;

  forest.global_mean_x.assign(d, 0.0);
  forest.global_class_freq.assign(C, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = train.x.row(i);
    for (std::size_t j = 0; j < d; ++j) forest.global_mean_x[j] += row[j];
    forest.global_class_freq[static_cast<std::size_t>(train.y[i])] += 1.0;
  }
  for (auto& v : forest.global_mean_x) v /= static_cast<double>(n);
  for (auto& v : forest.global_class_freq) v /= static_cast<double>(n);

  forest.stats.assign(forest.size(), {});
  forest.errors.assign(forest.size(), 0.0);
  parallel_for(forest.size(), [&](std::size_t k) {
    const SoftTree& tree = forest.trees[k];
    TreeLeafStats s{Matrix(tree.num_leaves(), d), Matrix(tree.num_leaves(), C),
                    std::vector<std::size_t>(tree.num_leaves(), 0)};
    std::vector<std::size_t> leaf_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t leaf = tree.hard_leaf(train.x.row(i));
      leaf_of[i] = leaf;
      auto sum = s.mean_x.row(leaf);
      auto row = train.x.row(i);
      for (std::size_t j = 0; j < d; ++j) sum[j] += row[j];
      s.mean_y(leaf, static_cast<std::size_t>(train.y[i])) += 1.0;
      ++s.count[leaf];
    }
    for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
      if (s.count[l] == 0) continue;
      const double inv = 1.0 / static_cast<double>(s.count[l]);
      for (auto& v : s.mean_x.row(l)) v *= inv;
      for (auto& v : s.mean_y.row(l)) v *= inv;
    }
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (argmax(s.mean_y.row(leaf_of[i])) != static_cast<std::size_t>(train.y[i])) ++wrong;
    }
    forest.errors[k] = static_cast<double>(wrong) / static_cast<double>(n);
    forest.stats[k] = std::move(s);
  });
  return forest;
}

}  // namespace mhasrf

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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mhasrf/soft_tree.hpp"

namespace mhasrf {
namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// Tree whose node i routes right with probability p[i] for any input.
SoftTree constant_tree(std::size_t depth, const std::vector<double>& p, std::size_t d = 2,
                       std::size_t classes = 2) {
  SoftTree tree(depth, d, classes);
  for (std::size_t i = 0; i < tree.num_inner(); ++i) tree.node_bias(i) = logit(p.at(i));
  return tree;
}

void set_leaf_distribution(SoftTree& tree, std::size_t leaf, const std::vector<double>& dist) {
  auto logits = tree.leaf_logits(leaf);
  for (std::size_t c = 0; c < dist.size(); ++c) logits[c] = std::log(dist[c]);
}

// Independent recursive path product.
void oracle_paths(const SoftTree& tree, std::span<const double> x, std::size_t node,
                  double mass, std::vector<double>& out) {
  if (node >= tree.num_inner()) {
    out[node - tree.num_inner()] = mass;
    return;
  }
  double z = tree.node_bias(node);
  const auto w = tree.node_weights(node);
  for (std::size_t j = 0; j < x.size(); ++j) z += w[j] * x[j];
  const double p = 1.0 / (1.0 + std::exp(-z));
  oracle_paths(tree, x, 2 * node + 1, mass * (1.0 - p), out);
  oracle_paths(tree, x, 2 * node + 2, mass * p, out);
}

TEST(RoutingProbability, Values) {
  const std::vector<double> x = {1.0, 2.0};
  EXPECT_DOUBLE_EQ(routing_probability(x, std::vector<double>{0.0, 0.0}, 0.0), 0.5);
  EXPECT_NEAR(routing_probability(x, std::vector<double>{0.5, -0.25}, 0.1),
              1.0 / (1.0 + std::exp(-0.1)), 1e-15);
  EXPECT_NEAR(routing_probability(x, std::vector<double>{0.5, -0.25}, 0.1), 0.524979, 1e-6);
  EXPECT_GT(routing_probability(x, std::vector<double>{0.0, 0.0}, 20.0), 1.0 - 1e-6);
}

TEST(RoutingProbability, RejectsNonFiniteInput) {
  const std::vector<double> x = {NAN, 1.0};
  EXPECT_THROW(routing_probability(x, std::vector<double>{1.0, 1.0}, 0.0), NumericalError);
}

TEST(SoftTree, NodeCounts) {
  for (std::size_t depth = 1; depth <= 5; ++depth) {
    SoftTree tree(depth, 3, 2);
    EXPECT_EQ(tree.num_inner(), (1u << depth) - 1);
    EXPECT_EQ(tree.num_leaves(), 1u << depth);
    EXPECT_EQ(tree.parameters().size(), tree.num_inner() * 4 + tree.num_leaves() * 2);
  }
}

TEST(SoftTree, RandomInitRanges) {
  auto rng = make_rng(5);
  const SoftTree tree = SoftTree::random_init(3, 16, 2, rng);
  for (std::size_t i = 0; i < tree.num_inner(); ++i) {
    for (double w : tree.node_weights(i)) EXPECT_LE(std::abs(w), 0.25);
    EXPECT_EQ(tree.node_bias(i), 0.0);
  }
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
    for (double t : tree.leaf_logits(l)) EXPECT_LE(std::abs(t), 0.01);
  }
  EXPECT_TRUE(all_finite(tree.parameters()));
}

TEST(PathProbabilities, SingleSplit) {
  const SoftTree tree = constant_tree(1, {0.7});
  const auto p = tree.path_probabilities(std::vector<double>{0.0, 0.0});
  ASSERT_EQ(p.size(), 2u);
  EXPECT_NEAR(p[0], 0.3, 1e-12);
  EXPECT_NEAR(p[1], 0.7, 1e-12);
}

TEST(PathProbabilities, UniformAtHalf) {
  const SoftTree tree = constant_tree(3, std::vector<double>(7, 0.5));
  for (double v : tree.path_probabilities(std::vector<double>{1.0, -1.0})) {
    EXPECT_NEAR(v, 0.125, 1e-15);
  }
}

TEST(PathProbabilities, DepthTwoHandProducts) {
  const SoftTree tree = constant_tree(2, {0.6, 0.2, 0.9});
  const auto p = tree.path_probabilities(std::vector<double>{0.0, 0.0});
  // 0.4*0.8, 0.4*0.2, 0.6*0.1, 0.6*0.9
  const std::vector<double> expected = {0.32, 0.08, 0.06, 0.54};
  for (std::size_t l = 0; l < 4; ++l) EXPECT_NEAR(p[l], expected[l], 1e-12) << l;
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
}

TEST(PathProbabilities, RandomTreesSumToOneAndMatchOracle) {
  auto rng = make_rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t depth = 1 + trial % 5;
    const std::size_t d = 1 + trial % 7;
    SoftTree tree = SoftTree::random_init(depth, d, 2, rng);
    for (auto& v : tree.parameters()) v = uniform(rng, -3.0, 3.0);
    std::vector<double> x(d);
    for (auto& v : x) v = uniform(rng, -2.0, 2.0);
    const auto p = tree.path_probabilities(x);
    std::vector<double> oracle(tree.num_leaves());
    oracle_paths(tree, x, 0, 1.0, oracle);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    for (std::size_t l = 0; l < p.size(); ++l) {
      EXPECT_GE(p[l], 0.0);
      EXPECT_NEAR(p[l], oracle[l], 1e-12);
    }
  }
}

TEST(SoftPredict, EqualLogitsGiveUniform) {
  auto rng = make_rng(3);
  SoftTree tree = SoftTree::random_init(3, 4, 3, rng);
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
    for (auto& t : tree.leaf_logits(l)) t = 0.4;
  }
  for (int i = 0; i < 5; ++i) {
    std::vector<double> x = {uniform(rng, -5, 5), 1.0, 2.0, -3.0};
    for (double q : tree.soft_predict(x)) EXPECT_NEAR(q, 1.0 / 3.0, 1e-12);
  }
}

TEST(SoftPredict, SaturatedSplitGivesRightLeaf) {
  SoftTree tree(1, 2, 2);
  tree.node_bias(0) = 30.0;
  tree.leaf_logits(0)[0] = 2.0;
  tree.leaf_logits(1)[1] = 1.5;
  const auto q = tree.soft_predict(std::vector<double>{0.3, -0.2});
  const auto right = tree.leaf_distribution(1);
  EXPECT_NEAR(q[0], right[0], 1e-9);
  EXPECT_NEAR(q[1], right[1], 1e-9);
}

TEST(SoftPredict, MixesLeafDistributions) {
  SoftTree tree = constant_tree(1, {0.7});
  set_leaf_distribution(tree, 0, {0.9, 0.1});
  set_leaf_distribution(tree, 1, {0.2, 0.8});
  const auto q = tree.soft_predict(std::vector<double>{0.0, 0.0});
  EXPECT_NEAR(q[0], 0.3 * 0.9 + 0.7 * 0.2, 1e-12);
  EXPECT_NEAR(q[1], 0.3 * 0.1 + 0.7 * 0.8, 1e-12);
}

TEST(SoftPredict, RandomParametersGiveDistribution) {
  auto rng = make_rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    SoftTree tree = SoftTree::random_init(1 + trial % 4, 3, 2 + trial % 3, rng);
    for (auto& v : tree.parameters()) v = uniform(rng, -4.0, 4.0);
    const std::vector<double> x = {uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)};
    const auto q = tree.soft_predict(x);
    for (double v : q) EXPECT_GE(v, 0.0);
    EXPECT_NEAR(std::accumulate(q.begin(), q.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(HardLeaf, Examples) {
  EXPECT_EQ(constant_tree(1, {0.7}).hard_leaf(std::vector<double>{0, 0}), 1u);
  EXPECT_EQ(constant_tree(1, {0.3}).hard_leaf(std::vector<double>{0, 0}), 0u);
  // Zero bias and weights: p is exactly 0.5 everywhere.
  EXPECT_EQ(SoftTree(3, 2, 2).hard_leaf(std::vector<double>{1, 1}), 7u);
  EXPECT_EQ(constant_tree(2, {0.4, 0.9, 0.1}).hard_leaf(std::vector<double>{0, 0}), 1u);
}

TEST(HardLeaf, ScaledRoutingMatchesHardPath) {
  auto rng = make_rng(23);
  int agree = 0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    SoftTree tree = SoftTree::random_init(3, 4, 2, rng);
    for (auto& v : tree.parameters()) v = uniform(rng, -1.0, 1.0);
    for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
      for (auto& v : tree.leaf_logits(l)) v = uniform(rng, -2.0, 2.0);
    }
    std::vector<double> x(4);
    for (auto& v : x) v = uniform(rng, -2.0, 2.0);
    const std::size_t leaf_before = tree.hard_leaf(x);
    tree.scale_routing(50.0);
    EXPECT_EQ(tree.hard_leaf(x), leaf_before);
    const auto q = tree.soft_predict(x);
    const auto leaf = tree.leaf_distribution(tree.hard_leaf(x));
    if (argmax(q) == argmax(leaf)) ++agree;
  }
  EXPECT_GE(agree, static_cast<int>(0.99 * trials));
}

// -log soft_predict(x)[label] through the public API only.
double oracle_loss(const SoftTree& tree, std::span<const double> x, int label) {
  return -std::log(tree.soft_predict(x)[static_cast<std::size_t>(label)]);
}

TEST(SoftTreeGradient, MatchesCentralDifferences) {
  auto rng = make_rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t depth = 1 + trial % 3;
    const std::size_t classes = 2 + trial % 2;
    SoftTree tree = SoftTree::random_init(depth, 3, classes, rng);
    for (auto& v : tree.parameters()) v = uniform(rng, -1.0, 1.0);
    const std::vector<double> x = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const int label = trial % static_cast<int>(classes);

    SoftTreeWorkspace ws(tree);
    ws.refresh_leaves(tree);
    std::vector<double> grad(tree.parameters().size(), 0.0);
    const double l = ws.accumulate_gradient(tree, x, label, 1.0, grad);
    EXPECT_NEAR(l, oracle_loss(tree, x, label), 1e-12);

    const double h = 1e-5;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      SoftTree plus = tree, minus = tree;
      plus.parameters()[i] += h;
      minus.parameters()[i] -= h;
      const double fd = (oracle_loss(plus, x, label) - oracle_loss(minus, x, label)) / (2 * h);
      const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(SoftTreeGradient, ScaleIsLinear) {
  auto rng = make_rng(2);
  SoftTree tree = SoftTree::random_init(2, 2, 2, rng);
  SoftTreeWorkspace ws(tree);
  ws.refresh_leaves(tree);
  const std::vector<double> x = {0.5, -1.0};
  std::vector<double> g1(tree.parameters().size()), g3(tree.parameters().size());
  ws.accumulate_gradient(tree, x, 1, 1.0, g1);
  ws.accumulate_gradient(tree, x, 1, 3.0, g3);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g3[i], 3.0 * g1[i], 1e-12);
}

TEST(ClampedNegLog, Floor) {
  EXPECT_NEAR(clamped_neg_log(0.0), -std::log(1e-12), 1e-9);
  EXPECT_EQ(clamped_neg_log(1.0), 0.0);
  EXPECT_NEAR(clamped_neg_log(0.9), 0.105361, 1e-6);
}

}  // namespace
}  // namespace mhasrf

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

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mhasrf/common.hpp"

namespace mhasrf {

// sigma(x . w + b): probability of routing to the RIGHT child.
double routing_probability(std::span<const double> x, std::span<const double> weights,
                           double bias);

// Complete binary soft decision tree of fixed depth D.
//
// Nodes use heap numbering: inner node i has children 2i+1 (left) and 2i+2
// (right); leaves are numbered 0 .. 2^D-1 from left to right. All trainable
// values live in one flat vector laid out as
//   [ weights (inner x d) | biases (inner) | leaf logits (leaves x C) ]
// so optimizers and gradient checks can treat the tree as a parameter block.
class SoftTree {
 public:
  SoftTree() = default;
  SoftTree(std::size_t depth, std::size_t num_features, std::size_t num_classes);

  // w ~ U(-1/sqrt(d), 1/sqrt(d)), b = 0, leaf logits ~ U(-0.01, 0.01).
  static SoftTree random_init(std::size_t depth, std::size_t num_features,
                              std::size_t num_classes, std::mt19937_64& rng);

  std::size_t depth() const { return depth_; }
  std::size_t num_features() const { return num_features_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_inner() const { return (std::size_t{1} << depth_) - 1; }
  std::size_t num_leaves() const { return std::size_t{1} << depth_; }

  std::span<const double> node_weights(std::size_t node) const;
  std::span<double> node_weights(std::size_t node);
  double node_bias(std::size_t node) const { return params_[bias_offset() + node]; }
  double& node_bias(std::size_t node) { return params_[bias_offset() + node]; }
  std::span<const double> leaf_logits(std::size_t leaf) const;
  std::span<double> leaf_logits(std::size_t leaf);

  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }

  double routing_probability(std::span<const double> x, std::size_t node) const;
  // Probability mass reaching each leaf; sums to 1.
  void path_probabilities(std::span<const double> x, std::span<double> out) const;
  std::vector<double> path_probabilities(std::span<const double> x) const;
  std::vector<double> leaf_distribution(std::size_t leaf) const;
  // sum_l P_l(x) softmax(theta_l).
  std::vector<double> soft_predict(std::span<const double> x) const;
  // Follows p >= 0.5 to the right at every node.
  std::size_t hard_leaf(std::span<const double> x) const;

  // Multiplies every weight and bias by factor (leaf logits untouched).
  void scale_routing(double factor);

  friend bool operator==(const SoftTree&, const SoftTree&) = default;

 private:
  std::size_t bias_offset() const { return num_inner() * num_features_; }
  std::size_t leaf_offset() const { return bias_offset() + num_inner(); }

  std::size_t depth_ = 0;
  std::size_t num_features_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<double> params_;
};

// Reusable forward/backward workspace for one tree.
class SoftTreeWorkspace {
 public:
  explicit SoftTreeWorkspace(const SoftTree& tree);

  // Caches softmax of every leaf; call after each parameter update.
  void refresh_leaves(const SoftTree& tree);

  // Adds scale * d(-log q_label)/d(params) into grad and returns
  // -log max(q_label, 1e-12). q_label == 0 yields a non-finite gradient.
  double accumulate_gradient(const SoftTree& tree, std::span<const double> x, int label,
                             double scale, std::span<double> grad);

  double loss(const SoftTree& tree, std::span<const double> x, int label);

 private:
  void forward(const SoftTree& tree, std::span<const double> x);

  std::vector<double> leaf_probs_;  // leaves x C
  std::vector<double> routing_;     // inner
  std::vector<double> path_;        // leaves
  std::vector<double> predict_;     // C
  std::vector<double> mass_right_;  // per inner node
  std::vector<double> mass_left_;
};

double clamped_neg_log(double p);

}  // namespace mhasrf

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

#include "mhasrf/soft_tree.hpp"

#include <numeric>

namespace mhasrf {
namespace {

constexpr double kProbFloor = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

double clamped_neg_log(double p) { return -std::log(std::clamp(p, kProbFloor, 1.0)); }

double routing_probability(std::span<const double> x, std::span<const double> weights,
                           double bias) {
  if (x.size() != weights.size()) throw DataError("routing_probability: dimension mismatch");
  const double z = dot(x, weights) + bias;
  if (!std::isfinite(z)) throw NumericalError("routing_probability: non-finite input");
  return sigmoid(z);
}

SoftTree::SoftTree(std::size_t depth, std::size_t num_features, std::size_t num_classes)
    : depth_(depth), num_features_(num_features), num_classes_(num_classes) {
  if (depth < 1) throw UsageError("SoftTree: depth must be >= 1");
  if (num_classes < 1) throw UsageError("SoftTree: need at least one class");
  params_.assign(num_inner() * num_features + num_inner() + num_leaves() * num_classes, 0.0);
}

SoftTree SoftTree::random_init(std::size_t depth, std::size_t num_features,
                               std::size_t num_classes, std::mt19937_64& rng) {
  SoftTree tree(depth, num_features, num_classes);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, num_features)));
  for (std::size_t i = 0; i < tree.bias_offset(); ++i) tree.params_[i] = uniform(rng, -bound, bound);
  for (std::size_t i = tree.leaf_offset(); i < tree.params_.size(); ++i) {
    tree.params_[i] = uniform(rng, -0.01, 0.01);
  }
  return tree;
}

std::span<const double> SoftTree::node_weights(std::size_t node) const {
  return std::span<const double>(params_).subspan(node * num_features_, num_features_);
}

std::span<double> SoftTree::node_weights(std::size_t node) {
  return std::span<double>(params_).subspan(node * num_features_, num_features_);
}

std::span<const double> SoftTree::leaf_logits(std::size_t leaf) const {
  return std::span<const double>(params_).subspan(leaf_offset() + leaf * num_classes_,
                                                  num_classes_);
}

std::span<double> SoftTree::leaf_logits(std::size_t leaf) {
  return std::span<double>(params_).subspan(leaf_offset() + leaf * num_classes_, num_classes_);
}

double SoftTree::routing_probability(std::span<const double> x, std::size_t node) const {
  return mhasrf::routing_probability(x, node_weights(node), node_bias(node));
}

void SoftTree::path_probabilities(std::span<const double> x, std::span<double> out) const {
  const std::size_t inner = num_inner();
  std::vector<double> mass(2 * num_leaves() - 1, 0.0);
  mass[0] = 1.0;
  for (std::size_t i = 0; i < inner; ++i) {
    const double p = sigmoid(dot(x, node_weights(i)) + node_bias(i));
    mass[2 * i + 1] = mass[i] * (1.0 - p);
    mass[2 * i + 2] = mass[i] * p;
  }
  std::copy(mass.begin() + static_cast<std::ptrdiff_t>(inner), mass.end(), out.begin());
}

std::vector<double> SoftTree::path_probabilities(std::span<const double> x) const {
  std::vector<double> out(num_leaves());
  path_probabilities(x, out);
  return out;
}

std::vector<double> SoftTree::leaf_distribution(std::size_t leaf) const {
  auto logits = leaf_logits(leaf);
  std::vector<double> out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

std::vector<double> SoftTree::soft_predict(std::span<const double> x) const {
  const auto path = path_probabilities(x);
  std::vector<double> out(num_classes_, 0.0);
  for (std::size_t l = 0; l < num_leaves(); ++l) {
    const auto dist = leaf_distribution(l);
    for (std::size_t c = 0; c < num_classes_; ++c) out[c] += path[l] * dist[c];
  }
  return out;
}

std::size_t SoftTree::hard_leaf(std::span<const double> x) const {
  std::size_t node = 0;
  const std::size_t inner = num_inner();
  while (node < inner) {
    // sigma(z) >= 0.5 exactly when z >= 0.
    const double z = dot(x, node_weights(node)) + node_bias(node);
    node = z >= 0.0 ? 2 * node + 2 : 2 * node + 1;
  }
  return node - inner;
}

void SoftTree::scale_routing(double factor) {
  for (std::size_t i = 0; i < leaf_offset(); ++i) params_[i] *= factor;
}

SoftTreeWorkspace::SoftTreeWorkspace(const SoftTree& tree)
    : leaf_probs_(tree.num_leaves() * tree.num_classes()),
      routing_(tree.num_inner()),
      path_(2 * tree.num_leaves() - 1),
      predict_(tree.num_classes()),
      mass_right_(tree.num_inner()),
      mass_left_(tree.num_inner()) {
  refresh_leaves(tree);
}

void SoftTreeWorkspace::refresh_leaves(const SoftTree& tree) {
  const std::size_t C = tree.num_classes();
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
    auto logits = tree.leaf_logits(l);
    std::span<double> probs(leaf_probs_.data() + l * C, C);
    std::copy(logits.begin(), logits.end(), probs.begin());
    softmax_inplace(probs);
  }
}

void SoftTreeWorkspace::forward(const SoftTree& tree, std::span<const double> x) {
  const std::size_t inner = tree.num_inner();
  const std::size_t leaves = tree.num_leaves();
  const std::size_t C = tree.num_classes();
  const std::size_t d = tree.num_features();
  const double* w = tree.parameters().data();
  const double* b = w + inner * d;
  double* path = path_.data();
  path[0] = 1.0;
  for (std::size_t i = 0; i < inner; ++i) {
    const double* wi = w + i * d;
    double z = b[i] + dot(std::span<const double>(wi, d), x);
    const double p = sigmoid(z);
    routing_[i] = p;
    path[2 * i + 1] = path[i] * (1.0 - p);
    path[2 * i + 2] = path[i] * p;
  }
  std::fill(predict_.begin(), predict_.end(), 0.0);
  const double* probs = leaf_probs_.data();
  for (std::size_t l = 0; l < leaves; ++l) {
    const double m = path[inner + l];
    for (std::size_t c = 0; c < C; ++c) predict_[c] += m * probs[l * C + c];
  }
}

double SoftTreeWorkspace::loss(const SoftTree& tree, std::span<const double> x, int label) {
  forward(tree, x);
  return clamped_neg_log(predict_[static_cast<std::size_t>(label)]);
}

double SoftTreeWorkspace::accumulate_gradient(const SoftTree& tree, std::span<const double> x,
                                              int label, double scale,
                                              std::span<double> grad) {
  forward(tree, x);
  const std::size_t inner = tree.num_inner();
  const std::size_t leaves = tree.num_leaves();
  const std::size_t C = tree.num_classes();
  const std::size_t d = tree.num_features();
  const auto y = static_cast<std::size_t>(label);
  const double q = predict_[y];

  // r_l = P_l s_{l,y} / q is the posterior share of leaf l; the loss gradient
  // w.r.t. P_l equals -s_{l,y} / q.
  const std::size_t leaf_base = d * inner + inner;
  std::vector<double>& share = path_;  // reuse: subtree sums of r, bottom-up
  for (std::size_t l = 0; l < leaves; ++l) {
    const double s_y = leaf_probs_[l * C + y];
    const double r = path_[inner + l] * s_y / q;
    for (std::size_t c = 0; c < C; ++c) {
      const double indicator = c == y ? 1.0 : 0.0;
      grad[leaf_base + l * C + c] -= scale * r * (indicator - leaf_probs_[l * C + c]);
    }
    share[inner + l] = r;
  }
  for (std::size_t i = inner; i-- > 0;) {
    const double left = share[2 * i + 1];
    const double right = share[2 * i + 2];
    share[i] = left + right;
    const double p = routing_[i];
    // dL/dz_i = -(1-p) R + p L with R, L the right/left subtree shares.
    const double dz = scale * (p * left - (1.0 - p) * right);
    double* gw = grad.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) gw[j] += dz * x[j];
    grad[d * inner + i] += dz;
  }
  return clamped_neg_log(q);
}

}  // namespace mhasrf

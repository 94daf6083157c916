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
#include "mhasrf/soft_forest.hpp"

namespace mhasrf {

// Trainable attention and MLP parameters, stored flat as
//   [ lambda (H) | W_H (H x H) | W1 (hidden x H*C) | b1 (hidden) | W2 (C x hidden) | b2 (C) ]
struct AttentionParams {
  std::size_t heads = 0;
  std::size_t num_classes = 0;
  std::size_t hidden = 0;
  std::vector<double> values;
  double tau = 1.0;
  double epsilon = 1e-6;
  bool use_reliability = true;

  AttentionParams() = default;
  AttentionParams(std::size_t heads, std::size_t num_classes, std::size_t hidden);

  // lambda = 1, W_H = I + U(-0.01, 0.01), MLP weights U(+-1/sqrt(fan_in)), biases 0.
  static AttentionParams init(std::size_t heads, std::size_t num_classes, std::size_t hidden,
                              std::mt19937_64& rng);

  std::size_t input_size() const { return heads * num_classes; }
  std::size_t mixing_offset() const { return heads; }
  std::size_t w1_offset() const { return mixing_offset() + heads * heads; }
  std::size_t b1_offset() const { return w1_offset() + hidden * input_size(); }
  std::size_t w2_offset() const { return b1_offset() + hidden; }
  std::size_t b2_offset() const { return w2_offset() + num_classes * hidden; }
  std::size_t size() const { return b2_offset() + num_classes; }

  std::span<double> lambda() { return block(0, heads); }
  std::span<const double> lambda() const { return block(0, heads); }
  // Row-major H x H.
  std::span<double> mixing() { return block(mixing_offset(), heads * heads); }
  std::span<const double> mixing() const { return block(mixing_offset(), heads * heads); }
  std::span<double> w1() { return block(w1_offset(), hidden * input_size()); }
  std::span<const double> w1() const { return block(w1_offset(), hidden * input_size()); }
  std::span<double> b1() { return block(b1_offset(), hidden); }
  std::span<const double> b1() const { return block(b1_offset(), hidden); }
  std::span<double> w2() { return block(w2_offset(), num_classes * hidden); }
  std::span<const double> w2() const { return block(w2_offset(), num_classes * hidden); }
  std::span<double> b2() { return block(b2_offset(), num_classes); }
  std::span<const double> b2() const { return block(b2_offset(), num_classes); }

  void validate() const;
  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;

 private:
  std::span<double> block(std::size_t offset, std::size_t n) {
    return std::span<double>(values).subspan(offset, n);
  }
  std::span<const double> block(std::size_t offset, std::size_t n) const {
    return std::span<const double>(values).subspan(offset, n);
  }
};

// lambda / (C_k + epsilon).
double reliability(double lambda, double tree_error, double epsilon = 1e-6);

// Frozen per-instance leaf context: squared distance to A_k(x) and B_k(x) for
// every tree. Stage 2 never touches the trees again, so this is computed once.
struct ContextCache {
  std::size_t rows = 0;
  std::size_t trees = 0;
  std::size_t classes = 0;
  std::vector<double> sq_dist;  // rows x trees
  std::vector<double> mean_y;   // rows x trees x classes
  std::size_t fallbacks = 0;    // lookups that hit an empty leaf

  std::span<const double> distances(std::size_t i) const {
    return {sq_dist.data() + i * trees, trees};
  }
  std::span<const double> targets(std::size_t i) const {
    return {mean_y.data() + i * trees * classes, trees * classes};
  }
};

ContextCache build_context(const SoftForest& forest, const Matrix& x);

struct AttentionTrace {
  Matrix delta;        // T x H
  Matrix alpha;        // T x H, pre-projection; each column sums to 1
  Matrix alpha_final;  // T x H
  Matrix aggregated;   // H x C
  std::vector<double> probs;
};

// Forward and backward pass of one instance through the attention/MLP head.
class AttentionKernel {
 public:
  AttentionKernel(std::size_t trees, const AttentionParams& params);

  // distances: T, targets: T x C.
  void forward(const AttentionParams& params, std::span<const double> tree_errors,
               std::span<const double> distances, std::span<const double> targets);
  // Adds scale * d(-log probs[label]) / d(params) into grad; returns the clamped loss.
  double backward(const AttentionParams& params, std::span<const double> tree_errors,
                  std::span<const double> targets, int label, double scale,
                  std::span<double> grad);

  std::span<const double> probs() const { return probs_; }
  std::span<const double> alpha() const { return alpha_; }              // T x H
  std::span<const double> alpha_final() const { return alpha_final_; }  // T x H
  std::span<const double> aggregated() const { return m_; }             // H x C
  AttentionTrace trace(const AttentionParams& params, std::span<const double> tree_errors) const;

 private:
  std::size_t trees_;
  std::size_t heads_;
  std::size_t classes_;
  std::size_t hidden_;
  std::vector<double> alpha_;
  std::vector<double> alpha_final_;
  std::vector<double> m_;
  std::vector<double> pre_;
  std::vector<double> act_;
  std::vector<double> probs_;
  std::vector<double> d_m_;
  std::vector<double> d_act_;
  std::vector<double> d_final_;
  std::vector<double> d_alpha_;
};

// Attention of head h (0-based) over the T trees.
std::vector<double> head_attention(std::span<const double> x, const SoftForest& forest,
                                   const AttentionParams& params, std::size_t h);
// T x H matrix of W_H-projected attention.
Matrix final_attention(std::span<const double> x, const SoftForest& forest,
                       const AttentionParams& params);
std::vector<double> aggregate_predict(std::span<const double> x, const SoftForest& forest,
                                      const AttentionParams& params);
AttentionTrace trace_attention(std::span<const double> x, const SoftForest& forest,
                               const AttentionParams& params);

// Row-wise aggregate_predict over a cached context.
Matrix predict_cached(const ContextCache& cache, const SoftForest& forest,
                      const AttentionParams& params);

}  // namespace mhasrf

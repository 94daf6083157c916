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

#include <string>
#include <vector>

#include "mhasrf/data_pipeline.hpp"

namespace mhasrf {

enum class BaselineKind { kDecisionTree, kRandomForest, kLogisticRegression, kNaiveBayes };

std::string baseline_name(BaselineKind kind);

struct BaselineHyper {
  int max_depth = 8;  // -1 = unlimited
  std::size_t min_leaf = 5;
  std::size_t num_trees = 100;
  std::size_t max_features = 0;  // 0 = ceil(sqrt(d)); >= d uses every feature
  bool bootstrap = true;
  std::size_t lr_iterations = 500;
  double lr_rate = 0.1;
  double nb_smoothing = 1.0;

  std::string describe(BaselineKind kind) const;
};

// Binary CART node. Leaves have feature == -1.
struct CartNode {
  int feature = -1;
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  int label = 0;
};

struct CartTree {
  std::vector<CartNode> nodes;
  int predict(std::span<const double> x) const;
};

struct LogisticModel {
  std::vector<double> mean;
  std::vector<double> scale;
  Matrix weights;  // C x d
  std::vector<double> bias;
};

struct NaiveBayesModel {
  std::vector<double> log_prior;
  std::vector<FeatureKind> kinds;
  Matrix mean;      // C x d, continuous columns
  Matrix variance;  // C x d
  // Categorical log-likelihood tables: table[j][c * levels[j] + code].
  std::vector<std::vector<double>> log_likelihood;
  std::vector<std::size_t> levels;
  std::vector<double> unseen_log_likelihood;  // per column, per class (C entries)
};

struct BaselineModel {
  BaselineKind kind = BaselineKind::kDecisionTree;
  std::size_t num_features = 0;
  std::size_t num_classes = 2;
  bool constant = false;  // single-class training data
  int constant_label = 0;
  std::vector<CartTree> trees;  // one for decision_tree, many for random_forest
  LogisticModel logistic;
  NaiveBayesModel bayes;
};

// Greedy Gini CART over the listed rows. max_features < d samples a feature
// subset at every split with rng.
CartTree fit_cart(const Matrix& x, std::span<const int> y, std::size_t num_classes,
                  std::span<const std::size_t> rows, const BaselineHyper& hyper,
                  std::size_t max_features, std::mt19937_64* rng);

BaselineModel fit_baseline(BaselineKind kind, const FeatureFrame& train,
                           const BaselineHyper& hyper = {}, std::uint64_t seed = 0);
std::vector<int> predict_baseline(const BaselineModel& model, const Matrix& x);

}  // namespace mhasrf

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

#include "mhasrf/baselines.hpp"
#include "mhasrf/trainer.hpp"

namespace mhasrf {

// Positive class = 1 (no-show).
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  double support = 0.0;

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct MetricsRow {
  std::string model;
  ConfusionMatrix confusion;
  // Positive-class metrics.
  double accuracy = 0.0;
  double specificity = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassMetrics> per_class;  // index = class
  ClassMetrics weighted;                // support-weighted over classes
  // Metrics whose denominator was zero, e.g. "precision[1]".
  std::vector<std::string> zero_division;
  std::string details;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels);
MetricsRow metrics(std::span<const int> preds, std::span<const int> labels,
                   const std::string& name = "");

void write_report_text(std::ostream& out, const std::string& title,
                       const std::vector<MetricsRow>& rows);
void write_report_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

inline const std::vector<BaselineKind> kBaselineOrder = {
    BaselineKind::kDecisionTree, BaselineKind::kRandomForest, BaselineKind::kLogisticRegression,
    BaselineKind::kNaiveBayes};

// MHASRF row from an already trained model, then every baseline.
std::vector<MetricsRow> compare_with_model(const Model& model, const FeatureFrame& train,
                                           const FeatureFrame& test,
                                           const BaselineHyper& hyper = {});
// Trains MHASRF and the four baselines on train, evaluates on test.
std::vector<MetricsRow> compare_models(const FeatureFrame& train, const FeatureFrame& test,
                                       const TrainConfig& config,
                                       const BaselineHyper& hyper = {});

struct AblationResult {
  std::vector<MetricsRow> rows;  // MHASRF, SHASRF, MHASRF without delta
  std::vector<Model> models;
  std::vector<std::vector<int>> predictions;
};

// The three variants share one stage-1 forest fitted with config.
AblationResult ablation_run(const FeatureFrame& train, const FeatureFrame& test,
                            const TrainConfig& config);

// n x T head-averaged final attention.
Matrix export_attention(const Model& model, const FeatureFrame& batch);
void write_attention_csv(std::ostream& out, const Matrix& attention);

}  // namespace mhasrf

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
#include <memory>
#include <string>
#include <vector>

#include "mhasrf/attention.hpp"
#include "mhasrf/config.hpp"
#include "mhasrf/data_pipeline.hpp"
#include "mhasrf/soft_forest.hpp"

namespace mhasrf {

// Mean of -log max(p_true, 1e-12) over rows.
double loss(const Matrix& predictions, std::span<const int> labels);

// Per-column z-score fitted on the training matrix. Constant columns keep scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean mini-batch loss over the epoch
  double test_loss = 0.0;   // full pass after the epoch; NaN without a test frame
  double seconds = 0.0;

  // Losses only; wall-clock time is not reproducible.
  bool same_losses(const EpochRecord& other) const;
};

struct TrainHistory {
  // Losses of the freshly initialized stage-2 head, before any update.
  double initial_train_loss = 0.0;
  double initial_test_loss = 0.0;
  std::vector<EpochRecord> epochs;

  bool same_losses(const TrainHistory& other) const;
  // The initial losses appear as epoch 0.
  void write_csv(std::ostream& out) const;
};

// Trained two-stage model plus everything needed to score raw tables.
struct Model {
  TrainConfig config;
  SplitSpec split;
  std::vector<std::string> feature_names;
  std::vector<FeatureKind> kinds;
  std::shared_ptr<const FrameEncoder> encoder;  // null for hand-built frames
  Standardizer standardizer;
  SoftForest forest;
  AttentionParams attention;
  TrainHistory history;

  std::size_t num_features() const { return feature_names.size(); }
  // Expects encoded (unstandardized) features.
  Matrix predict_proba(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;
  // Encodes a raw table with the stored encoder, then scores it.
  FeatureFrame encode_table(const AppointmentTable& table, EncodeDiagnostics* diag = nullptr) const;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

// Stage 1 only: standardizer, frozen forest, leaf statistics and C_k.
Model fit_forest_stage(const FeatureFrame& train, const TrainConfig& config);

// Stage 2 on a model from fit_forest_stage. Uses model.config for heads,
// reliability and optimizer settings. test may be empty.
TrainHistory fit_attention_stage(Model& model, const FeatureFrame& train,
                                 const FeatureFrame& test);

TrainResult train(const FeatureFrame& train, const FeatureFrame& test, const TrainConfig& config);

enum class GradCheckMode { kStage1, kStage2 };

struct GradCheckReport {
  GradCheckMode mode = GradCheckMode::kStage2;
  double step = 0.0;
  std::size_t parameters = 0;
  double max_rel_error = 0.0;
  std::string worst_parameter;
  double tolerance = 1e-4;

  bool passed() const { return max_rel_error <= tolerance; }
  std::string to_text() const;
};

// Central differences against the analytic gradient of the mean batch loss.
// Stage-1 mode checks every tree's own cross-entropy w.r.t. its parameters.
GradCheckReport grad_check(const Model& model, const FeatureFrame& batch, double step,
                           GradCheckMode mode);

// T=3, D=2, H=2, d=4 model and its 32-row batch, with noisy labels so no
// tree is perfect.
struct GradCheckFixture {
  Model model;
  FeatureFrame batch;
};
GradCheckFixture make_grad_check_fixture(std::uint64_t seed = 0);

}  // namespace mhasrf

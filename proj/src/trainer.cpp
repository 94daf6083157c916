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

#include "mhasrf/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mhasrf/adam.hpp"

namespace mhasrf {
namespace {

constexpr std::uint64_t kStage2Stream = 0x7374616765;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool same_value(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

FeatureFrame with_matrix(const FeatureFrame& frame, Matrix x) {
  FeatureFrame out;
  out.x = std::move(x);
  out.y = frame.y;
  out.feature_names = frame.feature_names;
  out.kinds = frame.kinds;
  out.encoder = frame.encoder;
  out.num_classes = frame.num_classes;
  return out;
}

double batch_loss(const AttentionParams& params, const SoftForest& forest,
                  const ContextCache& cache, std::span<const int> labels) {
  AttentionKernel kernel(cache.trees, params);
  double total = 0.0;
  for (std::size_t i = 0; i < cache.rows; ++i) {
    kernel.forward(params, forest.errors, cache.distances(i), cache.targets(i));
    total += clamped_neg_log(kernel.probs()[static_cast<std::size_t>(labels[i])]);
  }
  return total / static_cast<double>(cache.rows);
}

std::string attention_name(const AttentionParams& p, std::size_t i) {
  const auto idx = [](std::size_t a) { return "[" + std::to_string(a) + "]"; };
  if (i < p.mixing_offset()) return "lambda" + idx(i);
  if (i < p.w1_offset()) {
    const std::size_t r = i - p.mixing_offset();
    return "W_H" + idx(r / p.heads) + idx(r % p.heads);
  }
  if (i < p.b1_offset()) {
    const std::size_t r = i - p.w1_offset();
    return "W1" + idx(r / p.input_size()) + idx(r % p.input_size());
  }
  if (i < p.w2_offset()) return "b1" + idx(i - p.b1_offset());
  if (i < p.b2_offset()) {
    const std::size_t r = i - p.w2_offset();
    return "W2" + idx(r / p.hidden) + idx(r % p.hidden);
  }
  return "b2" + idx(i - p.b2_offset());
}

std::string tree_name(const SoftTree& t, std::size_t k, std::size_t i) {
  const auto idx = [](std::size_t a) { return "[" + std::to_string(a) + "]"; };
  const std::size_t d = t.num_features();
  const std::size_t inner = t.num_inner();
  std::string base = "tree" + idx(k) + ".";
  if (i < inner * d) return base + "w" + idx(i / d) + idx(i % d);
  if (i < inner * d + inner) return base + "b" + idx(i - inner * d);
  const std::size_t r = i - inner * d - inner;
  return base + "theta" + idx(r / t.num_classes()) + idx(r % t.num_classes());
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

}  // namespace

double loss(const Matrix& predictions, std::span<const int> labels) {
  if (predictions.rows() != labels.size()) throw DataError("loss: dimension mismatch");
  if (predictions.rows() == 0) throw DataError("loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= predictions.cols()) {
      throw DataError("loss: label out of range");
    }
    total += clamped_neg_log(predictions(i, static_cast<std::size_t>(labels[i])));
  }
  return total / static_cast<double>(labels.size());
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const std::size_t n = x.rows(), d = x.cols();
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  if (n == 0) return s;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x(i, j);
  }
  for (auto& m : s.mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x(i, j) - s.mean[j];
      var[j] += diff * diff;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw DataError("standardize: feature count mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) / scale[j];
  }
  return out;
}

bool EpochRecord::same_losses(const EpochRecord& other) const {
  return epoch == other.epoch && same_value(train_loss, other.train_loss) &&
         same_value(test_loss, other.test_loss);
}

bool TrainHistory::same_losses(const TrainHistory& other) const {
  if (!same_value(initial_train_loss, other.initial_train_loss) ||
      !same_value(initial_test_loss, other.initial_test_loss)) {
    return false;
  }
  if (epochs.size() != other.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    if (!epochs[i].same_losses(other.epochs[i])) return false;
  }
  return true;
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,test_loss,seconds\n";
  out << "0," << format_double(initial_train_loss) << ','
      << (std::isnan(initial_test_loss) ? std::string() : format_double(initial_test_loss))
      << ",0\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ','
        << (std::isnan(e.test_loss) ? std::string() : format_double(e.test_loss)) << ','
        << format_double(e.seconds) << '\n';
  }
}

Matrix Model::predict_proba(const Matrix& x) const {
  if (x.cols() != num_features()) throw DataError("predict: feature count mismatch");
  const ContextCache cache = build_context(forest, standardizer.apply(x));
  Matrix out = predict_cached(cache, forest, attention);
  if (!all_finite(out.data())) throw NumericalError("predict: non-finite probabilities");
  return out;
}

std::vector<int> Model::predict(const Matrix& x) const {
  const Matrix probs = predict_proba(x);
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) out[i] = static_cast<int>(argmax(probs.row(i)));
  return out;
}

FeatureFrame Model::encode_table(const AppointmentTable& table, EncodeDiagnostics* diag) const {
  if (!encoder) throw DataError("model has no stored encoder");
  return encoder->transform(table, diag);
}

Model fit_forest_stage(const FeatureFrame& train, const TrainConfig& config) {
  config.validate();
  if (train.size() == 0) throw DataError("train: empty training frame");
  if (train.y.size() != train.size()) throw DataError("train: label count mismatch");
  Model model;
  model.config = config;
  model.feature_names = train.feature_names;
  model.kinds = train.kinds;
  model.encoder = train.encoder;
  model.standardizer = Standardizer::fit(train.x);
  const FeatureFrame scaled = with_matrix(train, model.standardizer.apply(train.x));
  model.forest = compute_leaf_stats(fit_stage1(scaled, config), scaled);
  return model;
}

TrainHistory fit_attention_stage(Model& model, const FeatureFrame& train,
                                 const FeatureFrame& test) {
  const TrainConfig& config = model.config;
  config.validate();
  if (train.size() == 0) throw DataError("train: empty training frame");
  const SoftForest& forest = model.forest;
  const ContextCache train_ctx = build_context(forest, model.standardizer.apply(train.x));
  ContextCache test_ctx;
  if (test.size() > 0) test_ctx = build_context(forest, model.standardizer.apply(test.x));

  auto rng = make_rng(config.seed, kStage2Stream);
  AttentionParams params =
      AttentionParams::init(config.heads, train.num_classes, config.hidden_units, rng);
  params.tau = config.tau;
  params.epsilon = config.epsilon;
  params.use_reliability = config.use_reliability;
  params.validate();

  Adam adam(params.size(), {config.learning_rate, config.adam_beta1, config.adam_beta2,
                            config.adam_eps});
  AttentionKernel kernel(forest.size(), params);
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  history.initial_train_loss = loss(predict_cached(train_ctx, forest, params), train.y);
  history.initial_test_loss = test.size() > 0
                                  ? loss(predict_cached(test_ctx, forest, params), test.y)
                                  : std::numeric_limits<double>::quiet_NaN();
  for (std::size_t epoch = 1; epoch <= config.stage2_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        kernel.forward(params, forest.errors, train_ctx.distances(i), train_ctx.targets(i));
        epoch_loss +=
            kernel.backward(params, forest.errors, train_ctx.targets(i), train.y[i], scale, grad);
      }
      if (!std::isfinite(epoch_loss) || !all_finite(grad)) {
        throw NumericalError("stage 2: non-finite loss or gradient at epoch " +
                             std::to_string(epoch) + " (learning rate too large?)");
      }
      adam.step(params.values, grad);
      if (!all_finite(params.values)) {
        throw NumericalError("stage 2: non-finite parameters at epoch " + std::to_string(epoch));
      }
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(train.size());
    record.test_loss = test.size() > 0 ? loss(predict_cached(test_ctx, forest, params), test.y)
                                       : std::numeric_limits<double>::quiet_NaN();
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(record);
  }
  model.attention = std::move(params);
  model.history = history;
  return history;
}

TrainResult train(const FeatureFrame& train_frame, const FeatureFrame& test,
                  const TrainConfig& config) {
  TrainResult result;
  result.model = fit_forest_stage(train_frame, config);
  result.history = fit_attention_stage(result.model, train_frame, test);
  return result;
}

std::string GradCheckReport::to_text() const {
  std::ostringstream out;
  out << "mode: " << (mode == GradCheckMode::kStage1 ? "stage1" : "stage2") << '\n'
      << "step: " << format_double(step) << '\n'
      << "parameters: " << parameters << '\n'
      << "max_rel_error: " << format_double(max_rel_error) << '\n'
      << "worst_parameter: " << worst_parameter << '\n'
      << "tolerance: " << format_double(tolerance) << '\n'
      << "result: " << (passed() ? "PASS" : "FAIL") << '\n';
  return out.str();
}

GradCheckReport grad_check(const Model& model, const FeatureFrame& batch, double step,
                           GradCheckMode mode) {
  if (batch.size() == 0) throw DataError("grad_check: empty batch");
  if (!(step > 0.0)) throw UsageError("grad_check: step must be > 0");
  GradCheckReport report;
  report.mode = mode;
  report.step = step;
  const Matrix xs = model.standardizer.apply(batch.x);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  auto record = [&](double analytic, double numeric, const std::string& name) {
    const double err = relative_error(analytic, numeric);
    ++report.parameters;
    if (report.worst_parameter.empty() || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_parameter = name;
    }
  };

  if (mode == GradCheckMode::kStage2) {
    const ContextCache cache = build_context(model.forest, xs);
    AttentionParams params = model.attention;
    std::vector<double> grad(params.size(), 0.0);
    AttentionKernel kernel(cache.trees, params);
    for (std::size_t i = 0; i < cache.rows; ++i) {
      kernel.forward(params, model.forest.errors, cache.distances(i), cache.targets(i));
      kernel.backward(params, model.forest.errors, cache.targets(i), batch.y[i], inv_n, grad);
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
      const double saved = params.values[p];
      params.values[p] = saved + step;
      const double up = batch_loss(params, model.forest, cache, batch.y);
      params.values[p] = saved - step;
      const double down = batch_loss(params, model.forest, cache, batch.y);
      params.values[p] = saved;
      record(grad[p], (up - down) / (2.0 * step), attention_name(params, p));
    }
    return report;
  }

  for (std::size_t k = 0; k < model.forest.size(); ++k) {
    SoftTree tree = model.forest.trees[k];
    SoftTreeWorkspace ws(tree);
    std::vector<double> grad(tree.parameters().size(), 0.0);
    for (std::size_t i = 0; i < xs.rows(); ++i) {
      ws.accumulate_gradient(tree, xs.row(i), batch.y[i], inv_n, grad);
    }
    auto tree_loss = [&] {
      ws.refresh_leaves(tree);
      double total = 0.0;
      for (std::size_t i = 0; i < xs.rows(); ++i) total += ws.loss(tree, xs.row(i), batch.y[i]);
      return total * inv_n;
    };
    auto params = tree.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      const double saved = params[p];
      params[p] = saved + step;
      const double up = tree_loss();
      params[p] = saved - step;
      const double down = tree_loss();
      params[p] = saved;
      record(grad[p], (up - down) / (2.0 * step), tree_name(tree, k, p));
    }
  }
  return report;
}

GradCheckFixture make_grad_check_fixture(std::uint64_t seed) {
  constexpr std::size_t kRows = 32;
  constexpr std::size_t kFeatures = 4;
  auto rng = make_rng(seed, 0x6772616463);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution flip(0.3);

  FeatureFrame frame;
  frame.x = Matrix(kRows, kFeatures);
  frame.y.resize(kRows);
  for (std::size_t j = 0; j < kFeatures; ++j) {
    frame.feature_names.push_back("f" + std::to_string(j + 1));
    frame.kinds.push_back(FeatureKind::kContinuous);
  }
  for (std::size_t i = 0; i < kRows; ++i) {
    for (std::size_t j = 0; j < kFeatures; ++j) frame.x(i, j) = normal(rng);
    const bool positive = frame.x(i, 0) + 0.5 * frame.x(i, 1) > 0.0;
    frame.y[i] = (positive != flip(rng)) ? 1 : 0;
  }

  TrainConfig config;
  config.num_trees = 3;
  config.depth = 2;
  config.heads = 2;
  config.stage1_epochs = 5;
  config.stage2_epochs = 5;
  config.batch_size = 8;
  config.seed = seed;

  GradCheckFixture fixture;
  fixture.model = fit_forest_stage(frame, config);
  fit_attention_stage(fixture.model, frame, FeatureFrame{});
  fixture.batch = std::move(frame);
  return fixture;
}

}  // namespace mhasrf

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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mhasrf/data_pipeline.hpp"
#include "mhasrf/trainer.hpp"

namespace mhasrf {
namespace {

Matrix probs(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.at(0).size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  return m;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.num_trees = 20;
  c.stage1_epochs = 15;
  c.stage2_epochs = 15;
  c.seed = seed;
  return c;
}

TrainTestData synthetic_data(std::size_t rows, std::uint64_t seed, const SyntheticConfig& s = {}) {
  return make_train_test(derive_features(generate_synthetic(rows, seed, s)), {0.8, seed});
}

double accuracy(const Model& model, const FeatureFrame& f) {
  const auto pred = model.predict(f.x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == f.y[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

TEST(Loss, Examples) {
  const std::vector<int> labels = {0, 1};
  EXPECT_LE(loss(probs({{1, 0}, {0, 1}}), labels), 1e-11);
  EXPECT_NEAR(loss(probs({{0.5, 0.5}, {0.5, 0.5}}), labels), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss(probs({{0.9, 0.1}}), std::vector<int>{0}), -std::log(0.9), 1e-15);
  EXPECT_NEAR(loss(probs({{0.9, 0.1}}), std::vector<int>{0}), 0.105361, 1e-6);
  EXPECT_NEAR(loss(probs({{0.0, 1.0}}), std::vector<int>{0}), -std::log(1e-12), 1e-9);
}

TEST(Loss, DimensionMismatchIsError) {
  EXPECT_THROW(loss(probs({{0.5, 0.5}}), std::vector<int>{0, 1}), DataError);
  EXPECT_THROW(loss(probs({{0.5, 0.5}}), std::vector<int>{2}), DataError);
}

TEST(Loss, InvariantUnderRowPermutation) {
  auto rng = make_rng(4);
  Matrix p(50, 2);
  std::vector<int> y(50);
  for (std::size_t i = 0; i < 50; ++i) {
    p(i, 0) = uniform(rng, 0.01, 0.99);
    p(i, 1) = 1 - p(i, 0);
    y[i] = static_cast<int>(i % 3 == 0);
  }
  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> yp(50);
  for (std::size_t i = 0; i < 50; ++i) yp[i] = y[perm[i]];
  EXPECT_NEAR(loss(p, y), loss(p.select_rows(perm), yp), 1e-14);
}

TEST(Standardizer, ZScoreAndConstantColumns) {
  const Matrix x = probs({{1, 5}, {3, 5}, {5, 5}});
  const auto s = Standardizer::fit(x);
  EXPECT_EQ(s.mean, (std::vector<double>{3, 5}));
  EXPECT_NEAR(s.scale[0], std::sqrt(8.0 / 3.0), 1e-15);
  EXPECT_EQ(s.scale[1], 1.0);
  const Matrix z = s.apply(x);
  EXPECT_NEAR(z(0, 0) + z(1, 0) + z(2, 0), 0.0, 1e-15);
  EXPECT_EQ(z(1, 1), 0.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  for (auto mutate : std::vector<void (*)(TrainConfig&)>{
           [](TrainConfig& t) { t.num_trees = 0; }, [](TrainConfig& t) { t.depth = 0; },
           [](TrainConfig& t) { t.heads = 0; }, [](TrainConfig& t) { t.learning_rate = 0; },
           [](TrainConfig& t) { t.batch_size = 0; }, [](TrainConfig& t) { t.tau = -1; }}) {
    TrainConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), UsageError);
  }
}

TEST(Train, LossDropsOnSignalData) {
  const auto data = synthetic_data(3000, 1);
  const auto result = train(data.train, data.test, small_config(1));
  const auto& h = result.history;
  ASSERT_EQ(h.epochs.size(), 15u);
  EXPECT_LE(h.epochs.back().train_loss, 0.5 * h.initial_train_loss);
  EXPECT_LE(h.epochs.back().train_loss, h.epochs.front().train_loss);
  for (const auto& e : h.epochs) {
    EXPECT_TRUE(std::isfinite(e.train_loss));
    EXPECT_TRUE(std::isfinite(e.test_loss));
    EXPECT_GE(e.seconds, 0.0);
  }
  EXPECT_GE(accuracy(result.model, data.test), 0.85);
  EXPECT_EQ(result.model.history.epochs.size(), 15u);
}

TEST(Train, SameSeedSameHistoryAndModel) {
  const auto data = synthetic_data(800, 2);
  auto config = small_config(3);
  config.stage1_epochs = 4;
  config.stage2_epochs = 4;
  const auto a = train(data.train, data.test, config);
  const auto b = train(data.train, data.test, config);
  EXPECT_TRUE(a.history.same_losses(b.history));
  EXPECT_EQ(a.model.forest, b.model.forest);
  EXPECT_EQ(a.model.attention, b.model.attention);
  config.seed = 4;
  const auto c = train(data.train, data.test, config);
  EXPECT_FALSE(a.history.same_losses(c.history));
}

TEST(Train, HugeLearningRateRaisesNumericalError) {
  const auto data = synthetic_data(800, 2);
  auto config = small_config(1);
  config.learning_rate = 1e3;
  EXPECT_THROW(train(data.train, data.test, config), NumericalError);
}

TEST(Train, EmptyFrameIsError) {
  const auto data = synthetic_data(100, 2);
  EXPECT_THROW(train(data.train.subset(std::vector<std::size_t>{}), data.test, small_config(1)),
               DataError);
}

TEST(Train, NoSignalStaysNearMajorityRate) {
  SyntheticConfig s;
  s.reason_weight = s.type_weight = s.history_weight = 0.0;
  double gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = synthetic_data(10000, seed, s);
    auto config = small_config(seed);
    config.stage1_epochs = 10;
    config.stage2_epochs = 10;
    const auto result = train(data.train, data.test, config);
    const double positive = std::count(data.test.y.begin(), data.test.y.end(), 1) /
                            static_cast<double>(data.test.size());
    gap += accuracy(result.model, data.test) - std::max(positive, 1 - positive);
  }
  EXPECT_LE(std::abs(gap / 3.0), 0.03);
}

TEST(TrainHistory, CsvHasInitialRowAndOneRowPerEpoch) {
  TrainHistory h;
  h.initial_train_loss = 0.75;
  h.initial_test_loss = 0.5;
  h.epochs = {{1, 0.25, 0.125, 1.5}, {2, 0.2, std::nan(""), 2.0}};
  std::ostringstream out;
  h.write_csv(out);
  EXPECT_EQ(out.str(), "epoch,train_loss,test_loss,seconds\n0,0.75,0.5,0\n1,0.25,0.125,1.5\n2,0.20000000000000001,,2\n");
}

TEST(TrainHistory, SecondsAreIgnoredByLossComparison) {
  TrainHistory a;
  a.epochs = {{1, 0.25, NAN, 1.0}};
  TrainHistory b = a;
  b.epochs[0].seconds = 9.0;
  EXPECT_TRUE(a.same_losses(b));
  b.epochs[0].train_loss = 0.26;
  EXPECT_FALSE(a.same_losses(b));
}

TEST(GradCheck, TinyModelPassesBothStages) {
  const auto fx = make_grad_check_fixture();
  EXPECT_EQ(fx.model.forest.size(), 3u);
  EXPECT_EQ(fx.model.forest.trees[0].depth(), 2u);
  EXPECT_EQ(fx.model.attention.heads, 2u);
  EXPECT_EQ(fx.batch.size(), 32u);
  EXPECT_EQ(fx.batch.num_features(), 4u);
  for (double c : fx.model.forest.errors) EXPECT_GT(c, 0.0);

  const auto s2 = grad_check(fx.model, fx.batch, 1e-5, GradCheckMode::kStage2);
  EXPECT_TRUE(s2.passed()) << s2.to_text();
  EXPECT_EQ(s2.parameters, fx.model.attention.size());
  const auto s1 = grad_check(fx.model, fx.batch, 1e-5, GradCheckMode::kStage1);
  EXPECT_TRUE(s1.passed()) << s1.to_text();
  std::size_t tree_params = 0;
  for (const auto& t : fx.model.forest.trees) tree_params += t.parameters().size();
  EXPECT_EQ(s1.parameters, tree_params);
}

TEST(GradCheck, CoarseStepReportsLargerError) {
  const auto fx = make_grad_check_fixture();
  const auto fine = grad_check(fx.model, fx.batch, 1e-5, GradCheckMode::kStage2);
  const auto coarse = grad_check(fx.model, fx.batch, 1e-2, GradCheckMode::kStage2);
  EXPECT_GT(coarse.max_rel_error, fine.max_rel_error);
}

TEST(GradCheck, ZeroMlpSymmetricBatchIsReproducible) {
  auto fx = make_grad_check_fixture();
  auto& p = fx.model.attention;
  std::fill(p.values.begin() + static_cast<std::ptrdiff_t>(p.w1_offset()), p.values.end(), 0.0);
  // Every row appears once per class.
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < 16; ++i) rows.insert(rows.end(), {i, i});
  FeatureFrame batch = fx.batch.subset(rows);
  for (std::size_t i = 0; i < batch.size(); ++i) batch.y[i] = static_cast<int>(i % 2);

  const auto a = grad_check(fx.model, batch, 1e-5, GradCheckMode::kStage2);
  const auto b = grad_check(fx.model, batch, 1e-5, GradCheckMode::kStage2);
  EXPECT_TRUE(std::isfinite(a.max_rel_error));
  EXPECT_EQ(a.max_rel_error, b.max_rel_error);
  EXPECT_EQ(a.worst_parameter, b.worst_parameter);

  const ContextCache cache = build_context(fx.model.forest, fx.model.standardizer.apply(batch.x));
  auto lambda_grad = [&] {
    AttentionKernel kernel(cache.trees, p);
    std::vector<double> grad(p.size(), 0.0);
    for (std::size_t i = 0; i < cache.rows; ++i) {
      kernel.forward(p, fx.model.forest.errors, cache.distances(i), cache.targets(i));
      kernel.backward(p, fx.model.forest.errors, cache.targets(i), batch.y[i], 1.0 / 32, grad);
    }
    return std::vector<double>(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(p.heads));
  };
  const auto g1 = lambda_grad();
  EXPECT_TRUE(all_finite(g1));
  EXPECT_EQ(g1, lambda_grad());
}

TEST(GradCheck, RejectsBadArguments) {
  const auto fx = make_grad_check_fixture();
  EXPECT_THROW(grad_check(fx.model, fx.batch, 0.0, GradCheckMode::kStage2), UsageError);
  EXPECT_THROW(grad_check(fx.model, fx.batch.subset(std::vector<std::size_t>{}), 1e-5,
                          GradCheckMode::kStage2),
               DataError);
}

}  // namespace
}  // namespace mhasrf

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

#include "mhasrf/attention.hpp"

namespace mhasrf {
namespace {

struct HandTree {
  std::vector<double> a;  // A_k for the right leaf
  std::vector<double> b;  // B_k
  double error = 0.0;
};

// Every tree has zero routing parameters, so each input lands in leaf 1 and
// gets the hand-set context.
SoftForest hand_forest(const std::vector<HandTree>& spec) {
  SoftForest forest;
  const std::size_t d = spec.at(0).a.size();
  const std::size_t c = spec.at(0).b.size();
  for (const auto& t : spec) {
    forest.trees.emplace_back(1, d, c);
    TreeLeafStats s{Matrix(2, d), Matrix(2, c), {0, 1}};
    std::copy(t.a.begin(), t.a.end(), s.mean_x.row(1).begin());
    std::copy(t.b.begin(), t.b.end(), s.mean_y.row(1).begin());
    forest.stats.push_back(s);
    forest.errors.push_back(t.error);
  }
  forest.global_mean_x.assign(d, 0.0);
  forest.global_class_freq.assign(c, 1.0 / static_cast<double>(c));
  return forest;
}

// Random trained-looking forest with real leaf stats.
SoftForest random_forest(std::size_t trees, std::size_t d, std::mt19937_64& rng) {
  FeatureFrame f;
  const std::size_t n = 40;
  f.x = Matrix(n, d);
  for (auto& v : f.x.data()) v = uniform(rng, -1.5, 1.5);
  for (std::size_t i = 0; i < n; ++i) f.y.push_back(f.x(i, 0) + 0.3 * uniform(rng, -1, 1) > 0);
  SoftForest forest;
  for (std::size_t k = 0; k < trees; ++k) {
    SoftTree tree = SoftTree::random_init(2, d, 2, rng);
    for (auto& v : tree.parameters()) v = uniform(rng, -1.0, 1.0);
    forest.trees.push_back(tree);
  }
  return compute_leaf_stats(std::move(forest), f);
}

AttentionParams random_params(std::size_t heads, std::mt19937_64& rng, double spread = 1.0) {
  AttentionParams p = AttentionParams::init(heads, 2, 6, rng);
  for (auto& v : p.values) v += uniform(rng, -spread, spread);
  return p;
}

std::vector<double> oracle_softmax(std::vector<double> s) {
  double m = *std::max_element(s.begin(), s.end());
  double z = 0;
  for (auto& v : s) z += (v = std::exp(v - m));
  for (auto& v : s) v /= z;
  return s;
}

// Head attention straight from the definition using lookup_context.
std::vector<double> oracle_head(std::span<const double> x, const SoftForest& forest,
                                const AttentionParams& p, std::size_t h) {
  std::vector<double> s;
  for (std::size_t k = 0; k < forest.size(); ++k) {
    const auto ctx = forest.lookup_context(x, k);
    double dist = 0;
    for (std::size_t j = 0; j < x.size(); ++j) dist += (x[j] - ctx.mean_x[j]) * (x[j] - ctx.mean_x[j]);
    const double delta = p.use_reliability ? p.lambda()[h] / (forest.errors[k] + p.epsilon) : 0.0;
    s.push_back(delta - dist / (2 * p.tau));
  }
  return oracle_softmax(s);
}

// Full prediction from the definition.
std::vector<double> oracle_predict(std::span<const double> x, const SoftForest& forest,
                                   const AttentionParams& p) {
  const std::size_t H = p.heads, C = p.num_classes, T = forest.size();
  std::vector<std::vector<double>> alpha(H);
  for (std::size_t h = 0; h < H; ++h) alpha[h] = oracle_head(x, forest, p, h);
  std::vector<double> m(H * C, 0.0);
  for (std::size_t k = 0; k < T; ++k) {
    const auto b = forest.lookup_context(x, k).mean_y;
    for (std::size_t r = 0; r < H; ++r) {
      double fin = 0;
      for (std::size_t h = 0; h < H; ++h) fin += p.mixing()[r * H + h] * alpha[h][k];
      for (std::size_t c = 0; c < C; ++c) m[r * C + c] += fin * b[c];
    }
  }
  std::vector<double> hidden(p.hidden);
  for (std::size_t u = 0; u < p.hidden; ++u) {
    double z = p.b1()[u];
    for (std::size_t i = 0; i < H * C; ++i) z += p.w1()[u * H * C + i] * m[i];
    hidden[u] = std::max(0.0, z);
  }
  std::vector<double> out(C);
  for (std::size_t c = 0; c < C; ++c) {
    out[c] = p.b2()[c];
    for (std::size_t u = 0; u < p.hidden; ++u) out[c] += p.w2()[c * p.hidden + u] * hidden[u];
  }
  return oracle_softmax(out);
}

TEST(Reliability, Examples) {
  EXPECT_NEAR(reliability(1.0, 0.2, 1e-6), 1.0 / 0.200001, 1e-12);
  EXPECT_NEAR(reliability(1.0, 0.2, 1e-6), 4.999975, 1e-6);
  EXPECT_EQ(reliability(1.0, 0.0, 1e-6), 1e6);
  EXPECT_EQ(reliability(0.0, 0.3), 0.0);
  EXPECT_EQ(reliability(0.0, 0.0), 0.0);
}

TEST(Reliability, MonotoneInError) {
  auto rng = make_rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double lam = uniform(rng, 1e-3, 5.0);
    const double a = uniform(rng, 0.0, 1.0), b = uniform(rng, 0.0, 1.0);
    if (a == b) continue;
    EXPECT_EQ(a < b, reliability(lam, a) > reliability(lam, b));
  }
}

TEST(HeadAttention, SymmetricTrees) {
  const auto forest = hand_forest({{{1.0, 0.0}, {1, 0}, 0.2}, {{0.0, 1.0}, {0, 1}, 0.2}});
  AttentionParams p(1, 2, 4);
  p.lambda()[0] = 1.0;
  const auto a = head_attention(std::vector<double>{0.0, 0.0}, forest, p, 0);
  EXPECT_NEAR(a[0], 0.5, 1e-15);
  EXPECT_NEAR(a[1], 0.5, 1e-15);
}

TEST(HeadAttention, ScoresOneAndZero) {
  const double eps = 1e-6;
  // delta = 1 for both trees; distances 0 and 2 give scores 1 and 0.
  const auto forest = hand_forest({{{0.0, 0.0}, {1, 0}, 1.0 - eps}, {{1.0, 1.0}, {0, 1}, 1.0 - eps}});
  AttentionParams p(1, 2, 4);
  p.lambda()[0] = 1.0;
  const auto a = head_attention(std::vector<double>{0.0, 0.0}, forest, p, 0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(a[0], e / (e + 1), 1e-9);
  EXPECT_NEAR(a[1], 1 / (e + 1), 1e-9);
  EXPECT_NEAR(a[0], 0.7311, 5e-5);
}

TEST(HeadAttention, ShiftInvariance) {
  // Equal errors: changing lambda shifts every score by the same constant.
  const auto forest = hand_forest({{{0.3, 0.0}, {1, 0}, 0.25},
                                   {{1.0, 0.5}, {0, 1}, 0.25},
                                   {{-1.0, 2.0}, {0.5, 0.5}, 0.25}});
  AttentionParams p(1, 2, 4);
  const std::vector<double> x = {0.2, 0.4};
  p.lambda()[0] = 0.5;
  const auto a = head_attention(x, forest, p, 0);
  p.lambda()[0] = 2.75;
  const auto b = head_attention(x, forest, p, 0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(HeadAttention, MatchesDefinitionAndSumsToOne) {
  auto rng = make_rng(7);
  SoftForest forest;
  for (int trial = 0; trial < 1000; ++trial) {
    if (trial % 100 == 0) forest = random_forest(2 + trial / 100, 3, rng);
    auto p = random_params(1 + trial % 3, rng);
    p.tau = uniform(rng, 0.2, 3.0);
    p.use_reliability = trial % 4 != 0;
    std::vector<double> x(3);
    for (auto& v : x) v = uniform(rng, -2, 2);
    for (std::size_t h = 0; h < p.heads; ++h) {
      const auto a = head_attention(x, forest, p, h);
      const auto o = oracle_head(x, forest, p, h);
      EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-9);
      for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_GE(a[k], 0.0);
        EXPECT_NEAR(a[k], o[k], 1e-9);
      }
    }
  }
}

TEST(HeadAttention, ZeroDistanceReducesToReliabilitySoftmax) {
  const std::vector<double> x = {0.5, -0.5};
  const auto forest = hand_forest({{x, {1, 0}, 0.1}, {x, {0, 1}, 0.3}, {x, {0.4, 0.6}, 0.6}});
  AttentionParams p(1, 2, 4);
  p.lambda()[0] = 0.2;
  const auto a = head_attention(x, forest, p, 0);
  const auto o = oracle_softmax({0.2 / (0.1 + 1e-6), 0.2 / (0.3 + 1e-6), 0.2 / (0.6 + 1e-6)});
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], o[k], 1e-12);
}

TEST(FinalAttention, IdentityAndZeroProjection) {
  auto rng = make_rng(3);
  const auto forest = random_forest(5, 3, rng);
  auto p = random_params(3, rng);
  const std::vector<double> x = {0.1, -0.7, 1.2};
  auto mix = p.mixing();
  std::fill(mix.begin(), mix.end(), 0.0);
  for (std::size_t h = 0; h < 3; ++h) mix[h * 3 + h] = 1.0;
  const Matrix fin = final_attention(x, forest, p);
  for (std::size_t h = 0; h < 3; ++h) {
    const auto a = head_attention(x, forest, p, h);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(fin(k, h), a[k]);
  }
  std::fill(mix.begin(), mix.end(), 0.0);
  const Matrix zero = final_attention(x, forest, p);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  // Prediction is then the softmax of the MLP bias path.
  const auto q = aggregate_predict(x, forest, p);
  const auto o = oracle_predict(x, forest, p);
  EXPECT_NEAR(q[0], o[0], 1e-12);
}

TEST(FinalAttention, HandProjection) {
  const double eps = 1e-6;
  // Reliabilities 2 and 1, zero distances: head h attention on tree 0 is sigmoid(lambda_h).
  const std::vector<double> x = {0.0, 0.0};
  const auto forest = hand_forest({{x, {1, 0}, 0.5 - eps}, {x, {0, 1}, 1.0 - eps}});
  AttentionParams p(2, 2, 4);
  p.lambda()[0] = std::log(0.3 / 0.7);
  p.lambda()[1] = std::log(0.7 / 0.3);
  const std::vector<double> mix = {1, 1, 0, 1};
  std::copy(mix.begin(), mix.end(), p.mixing().begin());
  const Matrix fin = final_attention(x, forest, p);
  EXPECT_NEAR(fin(0, 0), 1.0, 1e-9);
  EXPECT_NEAR(fin(0, 1), 0.7, 1e-9);
}

TEST(AggregatePredict, MatchesDefinitionAndSumsToOne) {
  auto rng = make_rng(19);
  SoftForest forest;
  for (int trial = 0; trial < 1000; ++trial) {
    if (trial % 100 == 0) forest = random_forest(1 + trial / 100, 4, rng);
    const auto p = random_params(1 + trial % 4, rng);
    std::vector<double> x(4);
    for (auto& v : x) v = uniform(rng, -2, 2);
    const auto q = aggregate_predict(x, forest, p);
    const auto o = oracle_predict(x, forest, p);
    EXPECT_NEAR(q[0] + q[1], 1.0, 1e-9);
    EXPECT_NEAR(q[0], o[0], 1e-9);
  }
}

TEST(AggregatePredict, ZeroMlpGivesUniform) {
  auto rng = make_rng(5);
  const auto forest = random_forest(4, 3, rng);
  AttentionParams p = random_params(3, rng);
  std::fill(p.values.begin() + static_cast<std::ptrdiff_t>(p.w1_offset()), p.values.end(), 0.0);
  const auto q = aggregate_predict(std::vector<double>{1, 2, 3}, forest, p);
  EXPECT_EQ(q[0], 0.5);
  EXPECT_EQ(q[1], 0.5);
}

TEST(AggregatePredict, SingleTreeInputIsLeafTarget) {
  const auto forest = hand_forest({{{0.4, 0.1}, {0.3, 0.7}, 0.15}});
  auto rng = make_rng(2);
  AttentionParams p = AttentionParams::init(1, 2, 16, rng);
  p.mixing()[0] = 1.0;
  const auto trace = trace_attention(std::vector<double>{2.0, -1.0}, forest, p);
  EXPECT_EQ(trace.alpha(0, 0), 1.0);
  EXPECT_EQ(trace.aggregated(0, 0), 0.3);
  EXPECT_EQ(trace.aggregated(0, 1), 0.7);
}

TEST(AggregatePredict, ContinuousInInput) {
  auto rng = make_rng(8);
  auto forest = hand_forest({{{0.4, 0.1}, {0.3, 0.7}, 0.15}, {{-1, 0.5}, {0.9, 0.1}, 0.3}});
  const auto p = random_params(2, rng);
  std::vector<double> x = {0.2, 0.3};
  const auto q0 = aggregate_predict(x, forest, p);
  for (double h : {1e-3, 1e-5, 1e-7}) {
    x[0] = 0.2 + h;
    const auto q1 = aggregate_predict(x, forest, p);
    EXPECT_LT(std::abs(q1[0] - q0[0]), 100 * h);
  }
  EXPECT_EQ(aggregate_predict(x, forest, p), aggregate_predict(x, forest, p));
}

TEST(AttentionTrace, ColumnsSumToOne) {
  auto rng = make_rng(4);
  const auto forest = random_forest(7, 3, rng);
  const auto p = random_params(3, rng);
  const auto t = trace_attention(std::vector<double>{0.5, 0.5, -0.5}, forest, p);
  ASSERT_EQ(t.alpha.rows(), 7u);
  ASSERT_EQ(t.alpha.cols(), 3u);
  for (std::size_t h = 0; h < 3; ++h) {
    double s = 0;
    for (std::size_t k = 0; k < 7; ++k) {
      s += t.alpha(k, h);
      EXPECT_NEAR(t.delta(k, h), reliability(p.lambda()[h], forest.errors[k]), 1e-12);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(ContextCache, AgreesWithDirectPredict) {
  auto rng = make_rng(12);
  const auto forest = random_forest(6, 3, rng);
  const auto p = random_params(3, rng);
  Matrix x(25, 3);
  for (auto& v : x.data()) v = uniform(rng, -2, 2);
  const auto cache = build_context(forest, x);
  const Matrix q = predict_cached(cache, forest, p);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto direct = aggregate_predict(x.row(i), forest, p);
    EXPECT_NEAR(q(i, 0), direct[0], 1e-12);
    EXPECT_NEAR(q(i, 1), direct[1], 1e-12);
  }
}

TEST(AttentionGradient, MatchesCentralDifferences) {
  auto rng = make_rng(21);
  const auto forest = random_forest(4, 3, rng);
  for (bool use_rel : {true, false}) {
    auto p = random_params(2, rng, 0.3);
    p.use_reliability = use_rel;
    p.tau = 0.8;
    Matrix x(10, 3);
    for (auto& v : x.data()) v = uniform(rng, -1.5, 1.5);
    std::vector<int> y;
    for (std::size_t i = 0; i < 10; ++i) y.push_back(static_cast<int>(i % 2));

    const auto cache = build_context(forest, x);
    AttentionKernel kernel(forest.size(), p);
    std::vector<double> grad(p.values.size(), 0.0);
    for (std::size_t i = 0; i < 10; ++i) {
      kernel.forward(p, forest.errors, cache.distances(i), cache.targets(i));
      kernel.backward(p, forest.errors, cache.targets(i), y[i], 0.1, grad);
    }
    auto mean_loss = [&](const AttentionParams& q) {
      double s = 0;
      for (std::size_t i = 0; i < 10; ++i) s -= std::log(oracle_predict(x.row(i), forest, q)[y[i]]);
      return s / 10;
    };
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t j = 0; j < grad.size(); ++j) {
      AttentionParams a = p, b = p;
      a.values[j] += h;
      b.values[j] -= h;
      const double fd = (mean_loss(a) - mean_loss(b)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[j]) / std::max({std::abs(fd), std::abs(grad[j]), 1e-8}));
    }
    EXPECT_LE(worst, 1e-4) << "use_reliability=" << use_rel;
    if (!use_rel) {
      for (std::size_t h2 = 0; h2 < p.heads; ++h2) EXPECT_EQ(grad[h2], 0.0);
    }
  }
}

TEST(AttentionParams, InitAndValidate) {
  auto rng = make_rng(1);
  const auto p = AttentionParams::init(3, 2, 16, rng);
  EXPECT_EQ(p.size(), 3 + 9 + 16 * 6 + 16 + 2 * 16 + 2);
  for (double l : p.lambda()) EXPECT_EQ(l, 1.0);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(p.mixing()[r * 3 + c], r == c ? 1.0 : 0.0, 0.01);
    }
  }
  for (double w : p.w1()) EXPECT_LE(std::abs(w), 1.0 / std::sqrt(6.0));
  for (double w : p.w2()) EXPECT_LE(std::abs(w), 0.25);
  for (double b : p.b1()) EXPECT_EQ(b, 0.0);
  EXPECT_NO_THROW(p.validate());
  auto bad = p;
  bad.tau = 0.0;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = p;
  bad.values[4] = NAN;
  EXPECT_THROW(bad.validate(), NumericalError);
}

}  // namespace
}  // namespace mhasrf

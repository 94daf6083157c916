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

#include "mhasrf/attention.hpp"

#include <string>

#include "mhasrf/soft_tree.hpp"

namespace mhasrf {

AttentionParams::AttentionParams(std::size_t h, std::size_t c, std::size_t units)
    : heads(h), num_classes(c), hidden(units) {
  if (h < 1) throw UsageError("attention: need at least one head");
  if (c < 1) throw UsageError("attention: need at least one class");
  if (units < 1) throw UsageError("attention: need at least one hidden unit");
  values.assign(size(), 0.0);
}

AttentionParams AttentionParams::init(std::size_t heads, std::size_t num_classes,
                                      std::size_t hidden, std::mt19937_64& rng) {
  AttentionParams p(heads, num_classes, hidden);
  for (auto& v : p.lambda()) v = 1.0;
  auto w = p.mixing();
  for (std::size_t i = 0; i < heads; ++i) {
    for (std::size_t j = 0; j < heads; ++j) {
      w[i * heads + j] = (i == j ? 1.0 : 0.0) + uniform(rng, -0.01, 0.01);
    }
  }
  const double b1 = 1.0 / std::sqrt(static_cast<double>(p.input_size()));
  for (auto& v : p.w1()) v = uniform(rng, -b1, b1);
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& v : p.w2()) v = uniform(rng, -b2, b2);
  return p;
}

void AttentionParams::validate() const {
  if (!(tau > 0.0)) throw UsageError("attention: tau must be > 0");
  if (!(epsilon > 0.0)) throw UsageError("attention: epsilon must be > 0");
  if (values.size() != size()) throw FormatError("attention: parameter block has wrong size");
  if (!all_finite(values)) throw NumericalError("attention: non-finite parameters");
}

double reliability(double lambda, double tree_error, double epsilon) {
  return lambda / (tree_error + epsilon);
}

ContextCache build_context(const SoftForest& forest, const Matrix& x) {
  if (!forest.has_stats()) throw DataError("build_context: leaf statistics not computed");
  if (x.cols() != forest.num_features()) throw DataError("build_context: feature count mismatch");
  ContextCache cache;
  cache.rows = x.rows();
  cache.trees = forest.size();
  cache.classes = forest.num_classes();
  cache.sq_dist.assign(cache.rows * cache.trees, 0.0);
  cache.mean_y.assign(cache.rows * cache.trees * cache.classes, 0.0);
  std::vector<std::size_t> fallbacks(cache.trees, 0);
  parallel_for(cache.trees, [&](std::size_t k) {
    for (std::size_t i = 0; i < cache.rows; ++i) {
      auto row = x.row(i);
      const LeafContext ctx = forest.lookup_context(row, k);
      double dist = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double diff = row[j] - ctx.mean_x[j];
        dist += diff * diff;
      }
      cache.sq_dist[i * cache.trees + k] = dist;
      std::copy(ctx.mean_y.begin(), ctx.mean_y.end(),
                cache.mean_y.begin() +
                    static_cast<std::ptrdiff_t>((i * cache.trees + k) * cache.classes));
      if (ctx.fallback) ++fallbacks[k];
    }
  });
  for (auto f : fallbacks) cache.fallbacks += f;
  return cache;
}

AttentionKernel::AttentionKernel(std::size_t trees, const AttentionParams& params)
    : trees_(trees),
      heads_(params.heads),
      classes_(params.num_classes),
      hidden_(params.hidden),
      alpha_(trees * params.heads),
      alpha_final_(trees * params.heads),
      m_(params.input_size()),
      pre_(params.hidden),
      act_(params.hidden),
      probs_(params.num_classes),
      d_m_(params.input_size()),
      d_act_(params.hidden),
      d_final_(trees * params.heads),
      d_alpha_(trees * params.heads) {}

void AttentionKernel::forward(const AttentionParams& params, std::span<const double> tree_errors,
                              std::span<const double> distances,
                              std::span<const double> targets) {
  const std::size_t T = trees_, H = heads_, C = classes_;
  auto lambda = params.lambda();
  const double inv_two_tau = 1.0 / (2.0 * params.tau);

  std::vector<double> column(T);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t k = 0; k < T; ++k) {
      const double delta =
          params.use_reliability ? reliability(lambda[h], tree_errors[k], params.epsilon) : 0.0;
      column[k] = delta - distances[k] * inv_two_tau;
    }
    softmax_inplace(column);
    for (std::size_t k = 0; k < T; ++k) alpha_[k * H + h] = column[k];
  }

  auto w = params.mixing();
  for (std::size_t k = 0; k < T; ++k) {
    for (std::size_t i = 0; i < H; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < H; ++j) s += w[i * H + j] * alpha_[k * H + j];
      alpha_final_[k * H + i] = s;
    }
  }

  std::fill(m_.begin(), m_.end(), 0.0);
  for (std::size_t k = 0; k < T; ++k) {
    const double* b = targets.data() + k * C;
    for (std::size_t i = 0; i < H; ++i) {
      const double a = alpha_final_[k * H + i];
      for (std::size_t c = 0; c < C; ++c) m_[i * C + c] += a * b[c];
    }
  }

  const std::size_t in = params.input_size();
  auto w1 = params.w1();
  auto b1 = params.b1();
  for (std::size_t u = 0; u < hidden_; ++u) {
    double s = b1[u];
    for (std::size_t q = 0; q < in; ++q) s += w1[u * in + q] * m_[q];
    pre_[u] = s;
    act_[u] = s > 0.0 ? s : 0.0;
  }
  auto w2 = params.w2();
  auto b2 = params.b2();
  for (std::size_t c = 0; c < C; ++c) {
    double s = b2[c];
    for (std::size_t u = 0; u < hidden_; ++u) s += w2[c * hidden_ + u] * act_[u];
    probs_[c] = s;
  }
  softmax_inplace(probs_);
}

double AttentionKernel::backward(const AttentionParams& params,
                                 std::span<const double> tree_errors,
                                 std::span<const double> targets, int label, double scale,
                                 std::span<double> grad) {
  const std::size_t T = trees_, H = heads_, C = classes_;
  const std::size_t in = params.input_size();
  const auto y = static_cast<std::size_t>(label);

  std::vector<double> d_logits(C);
  for (std::size_t c = 0; c < C; ++c) d_logits[c] = scale * (probs_[c] - (c == y ? 1.0 : 0.0));

  auto w2 = params.w2();
  double* g_w2 = grad.data() + params.w2_offset();
  double* g_b2 = grad.data() + params.b2_offset();
  std::fill(d_act_.begin(), d_act_.end(), 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    g_b2[c] += d_logits[c];
    for (std::size_t u = 0; u < hidden_; ++u) {
      g_w2[c * hidden_ + u] += d_logits[c] * act_[u];
      d_act_[u] += w2[c * hidden_ + u] * d_logits[c];
    }
  }

  auto w1 = params.w1();
  double* g_w1 = grad.data() + params.w1_offset();
  double* g_b1 = grad.data() + params.b1_offset();
  std::fill(d_m_.begin(), d_m_.end(), 0.0);
  for (std::size_t u = 0; u < hidden_; ++u) {
    if (!(pre_[u] > 0.0)) continue;
    const double da = d_act_[u];
    g_b1[u] += da;
    for (std::size_t q = 0; q < in; ++q) {
      g_w1[u * in + q] += da * m_[q];
      d_m_[q] += w1[u * in + q] * da;
    }
  }

  for (std::size_t k = 0; k < T; ++k) {
    const double* b = targets.data() + k * C;
    for (std::size_t i = 0; i < H; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += d_m_[i * C + c] * b[c];
      d_final_[k * H + i] = s;
    }
  }

  auto w = params.mixing();
  double* g_w = grad.data() + params.mixing_offset();
  for (std::size_t k = 0; k < T; ++k) {
    for (std::size_t j = 0; j < H; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < H; ++i) {
        g_w[i * H + j] += d_final_[k * H + i] * alpha_[k * H + j];
        s += w[i * H + j] * d_final_[k * H + i];
      }
      d_alpha_[k * H + j] = s;
    }
  }

  if (params.use_reliability) {
    double* g_lambda = grad.data();
    for (std::size_t h = 0; h < H; ++h) {
      double mean = 0.0;
      for (std::size_t k = 0; k < T; ++k) mean += alpha_[k * H + h] * d_alpha_[k * H + h];
      double g = 0.0;
      for (std::size_t k = 0; k < T; ++k) {
        const double d_score = alpha_[k * H + h] * (d_alpha_[k * H + h] - mean);
        g += d_score / (tree_errors[k] + params.epsilon);
      }
      g_lambda[h] += g;
    }
  }
  return clamped_neg_log(probs_[y]);
}

AttentionTrace AttentionKernel::trace(const AttentionParams& params,
                                      std::span<const double> tree_errors) const {
  const std::size_t T = trees_, H = heads_, C = classes_;
  AttentionTrace t{Matrix(T, H), Matrix(T, H), Matrix(T, H), Matrix(H, C), probs_};
  for (std::size_t k = 0; k < T; ++k) {
    for (std::size_t h = 0; h < H; ++h) {
      t.delta(k, h) = params.use_reliability
                          ? reliability(params.lambda()[h], tree_errors[k], params.epsilon)
                          : 0.0;
      t.alpha(k, h) = alpha_[k * H + h];
      t.alpha_final(k, h) = alpha_final_[k * H + h];
    }
  }
  std::copy(m_.begin(), m_.end(), t.aggregated.data().begin());
  return t;
}

namespace {

void check_compatible(const SoftForest& forest, const AttentionParams& params) {
  params.validate();
  if (forest.errors.size() != forest.size()) {
    throw DataError("attention: forest has no tree errors");
  }
  if (params.num_classes != forest.num_classes()) {
    throw DataError("attention: class count differs from forest");
  }
}

AttentionKernel run_single(std::span<const double> x, const SoftForest& forest,
                           const AttentionParams& params) {
  check_compatible(forest, params);
  Matrix one(1, x.size());
  std::copy(x.begin(), x.end(), one.row(0).begin());
  const ContextCache cache = build_context(forest, one);
  AttentionKernel kernel(forest.size(), params);
  kernel.forward(params, forest.errors, cache.distances(0), cache.targets(0));
  return kernel;
}

}  // namespace

std::vector<double> head_attention(std::span<const double> x, const SoftForest& forest,
                                   const AttentionParams& params, std::size_t h) {
  if (h >= params.heads) throw UsageError("head_attention: head index out of range");
  const AttentionKernel kernel = run_single(x, forest, params);
  std::vector<double> out(forest.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = kernel.alpha()[k * params.heads + h];
  return out;
}

Matrix final_attention(std::span<const double> x, const SoftForest& forest,
                       const AttentionParams& params) {
  const AttentionKernel kernel = run_single(x, forest, params);
  Matrix out(forest.size(), params.heads);
  std::copy(kernel.alpha_final().begin(), kernel.alpha_final().end(), out.data().begin());
  return out;
}

std::vector<double> aggregate_predict(std::span<const double> x, const SoftForest& forest,
                                      const AttentionParams& params) {
  const AttentionKernel kernel = run_single(x, forest, params);
  return {kernel.probs().begin(), kernel.probs().end()};
}

AttentionTrace trace_attention(std::span<const double> x, const SoftForest& forest,
                               const AttentionParams& params) {
  return run_single(x, forest, params).trace(params, forest.errors);
}

Matrix predict_cached(const ContextCache& cache, const SoftForest& forest,
                      const AttentionParams& params) {
  check_compatible(forest, params);
  Matrix out(cache.rows, params.num_classes);
  AttentionKernel kernel(cache.trees, params);
  for (std::size_t i = 0; i < cache.rows; ++i) {
    kernel.forward(params, forest.errors, cache.distances(i), cache.targets(i));
    std::copy(kernel.probs().begin(), kernel.probs().end(), out.row(i).begin());
  }
  return out;
}

}  // namespace mhasrf

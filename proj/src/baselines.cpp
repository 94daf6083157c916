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

#include "mhasrf/baselines.hpp"

#include <numeric>
#include <sstream>

namespace mhasrf {
namespace {

constexpr std::uint64_t kForestStream = 0x7266;

int majority(std::span<const std::size_t> counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return static_cast<int>(best);
}

// n * Gini impurity = n - sum(c^2) / n.
double weighted_gini(std::span<const double> counts, double n) {
  if (n <= 0.0) return 0.0;
  double sq = 0.0;
  for (double c : counts) sq += c * c;
  return n - sq / n;
}

class CartBuilder {
 public:
  CartBuilder(const Matrix& x, std::span<const int> y, std::size_t num_classes,
              const BaselineHyper& hyper, std::size_t max_features, std::mt19937_64* rng)
      : x_(x), y_(y), classes_(num_classes), hyper_(hyper), max_features_(max_features),
        rng_(rng) {}

  CartTree build(std::vector<std::size_t> rows) {
    CartTree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  int grow(CartTree& tree, std::vector<std::size_t> rows, int depth) {
    std::vector<std::size_t> counts(classes_, 0);
    for (auto i : rows) ++counts[static_cast<std::size_t>(y_[i])];
    const int node = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[node].label = majority(counts);

    const bool pure = std::count(counts.begin(), counts.end(), 0) ==
                      static_cast<std::ptrdiff_t>(classes_ - 1);
    const bool depth_reached = hyper_.max_depth >= 0 && depth >= hyper_.max_depth;
    if (pure || depth_reached || rows.size() < 2 * hyper_.min_leaf) return node;

    const Split split = best_split(rows, counts);
    if (split.feature < 0) return node;

    std::vector<std::size_t> left, right;
    for (auto i : rows) {
      (x_(i, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right)
          .push_back(i);
    }
    rows.clear();
    rows.shrink_to_fit();
    tree.nodes[node].feature = split.feature;
    tree.nodes[node].threshold = split.threshold;
    const int l = grow(tree, std::move(left), depth + 1);
    const int r = grow(tree, std::move(right), depth + 1);
    tree.nodes[node].left = l;
    tree.nodes[node].right = r;
    return node;
  }

  std::vector<std::size_t> candidate_features() {
    const std::size_t d = x_.cols();
    std::vector<std::size_t> features(d);
    std::iota(features.begin(), features.end(), 0);
    if (max_features_ >= d || rng_ == nullptr) return features;
    for (std::size_t i = 0; i < max_features_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, d - 1);
      std::swap(features[i], features[pick(*rng_)]);
    }
    features.resize(max_features_);
    return features;
  }

  Split best_split(const std::vector<std::size_t>& rows, std::span<const std::size_t> counts) {
    const double n = static_cast<double>(rows.size());
    std::vector<double> total(counts.begin(), counts.end());
    Split best;
    best.impurity = weighted_gini(total, n) - 1e-12;

    std::vector<std::size_t> sorted = rows;
    std::vector<double> left(classes_), right(classes_);
    for (std::size_t f : candidate_features()) {
      std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
        const double va = x_(a, f), vb = x_(b, f);
        return va < vb || (va == vb && a < b);
      });
      std::fill(left.begin(), left.end(), 0.0);
      right = total;
      for (std::size_t s = 0; s + 1 < sorted.size(); ++s) {
        const auto c = static_cast<std::size_t>(y_[sorted[s]]);
        left[c] += 1.0;
        right[c] -= 1.0;
        const std::size_t nl = s + 1;
        const std::size_t nr = sorted.size() - nl;
        if (nl < hyper_.min_leaf || nr < hyper_.min_leaf) continue;
        const double v = x_(sorted[s], f);
        const double v_next = x_(sorted[s + 1], f);
        if (!(v < v_next)) continue;
        const double impurity = weighted_gini(left, static_cast<double>(nl)) +
                                weighted_gini(right, static_cast<double>(nr));
        if (impurity < best.impurity) {
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (v + v_next);
          best.impurity = impurity;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const int> y_;
  std::size_t classes_;
  const BaselineHyper& hyper_;
  std::size_t max_features_;
  std::mt19937_64* rng_;
};

LogisticModel fit_logistic(const FeatureFrame& train, const BaselineHyper& hyper) {
  const std::size_t n = train.size(), d = train.num_features(), C = train.num_classes;
  LogisticModel m;
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += train.x(i, j);
  }
  for (auto& v : m.mean) v /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = train.x(i, j) - m.mean[j];
      var[j] += diff * diff;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    m.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  Matrix z(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z(i, j) = (train.x(i, j) - m.mean[j]) / m.scale[j];
  }

  m.weights = Matrix(C, d);
  m.bias.assign(C, 0.0);
  Matrix gw(C, d);
  std::vector<double> gb(C), p(C);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < hyper.lr_iterations; ++it) {
    std::fill(gw.data().begin(), gw.data().end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = z.row(i);
      for (std::size_t c = 0; c < C; ++c) {
        double s = m.bias[c];
        for (std::size_t j = 0; j < d; ++j) s += m.weights(c, j) * row[j];
        p[c] = s;
      }
      softmax_inplace(p);
      for (std::size_t c = 0; c < C; ++c) {
        const double g = (p[c] - (static_cast<std::size_t>(train.y[i]) == c ? 1.0 : 0.0)) * inv_n;
        gb[c] += g;
        for (std::size_t j = 0; j < d; ++j) gw(c, j) += g * row[j];
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      m.bias[c] -= hyper.lr_rate * gb[c];
      for (std::size_t j = 0; j < d; ++j) m.weights(c, j) -= hyper.lr_rate * gw(c, j);
    }
  }
  return m;
}

NaiveBayesModel fit_naive_bayes(const FeatureFrame& train, const BaselineHyper& hyper) {
  const std::size_t n = train.size(), d = train.num_features(), C = train.num_classes;
  NaiveBayesModel m;
  m.kinds = train.kinds.size() == d ? train.kinds
                                     : std::vector<FeatureKind>(d, FeatureKind::kContinuous);
  std::vector<double> class_count(C, 0.0);
  for (int label : train.y) class_count[static_cast<std::size_t>(label)] += 1.0;
  m.log_prior.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    m.log_prior[c] = std::log((class_count[c] + hyper.nb_smoothing) /
                              (static_cast<double>(n) + hyper.nb_smoothing * static_cast<double>(C)));
  }

  m.mean = Matrix(C, d);
  m.variance = Matrix(C, d);
  m.log_likelihood.assign(d, {});
  m.levels.assign(d, 0);
  m.unseen_log_likelihood.assign(d * C, 0.0);

  double max_variance = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    if (m.kinds[j] == FeatureKind::kCategorical) {
      int max_code = 0;
      for (std::size_t i = 0; i < n; ++i) {
        max_code = std::max(max_code, static_cast<int>(std::lround(train.x(i, j))));
      }
      // One level beyond the largest seen code stands for "reserved/unseen".
      const std::size_t levels = static_cast<std::size_t>(max_code) + 2;
      m.levels[j] = levels;
      std::vector<double> counts(C * levels, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto code = static_cast<std::size_t>(std::max(0L, std::lround(train.x(i, j))));
        counts[static_cast<std::size_t>(train.y[i]) * levels + code] += 1.0;
      }
      auto& table = m.log_likelihood[j];
      table.resize(C * levels);
      for (std::size_t c = 0; c < C; ++c) {
        const double denom = class_count[c] + hyper.nb_smoothing * static_cast<double>(levels);
        for (std::size_t v = 0; v < levels; ++v) {
          table[c * levels + v] = std::log((counts[c * levels + v] + hyper.nb_smoothing) / denom);
        }
        m.unseen_log_likelihood[j * C + c] = std::log(hyper.nb_smoothing / denom);
      }
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      m.mean(static_cast<std::size_t>(train.y[i]), j) += train.x(i, j);
    }
    for (std::size_t c = 0; c < C; ++c) {
      if (class_count[c] > 0) m.mean(c, j) /= class_count[c];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(train.y[i]);
      const double diff = train.x(i, j) - m.mean(c, j);
      m.variance(c, j) += diff * diff;
    }
    for (std::size_t c = 0; c < C; ++c) {
      if (class_count[c] > 0) m.variance(c, j) /= class_count[c];
      max_variance = std::max(max_variance, m.variance(c, j));
    }
  }
  const double floor = 1e-9 * (max_variance > 0.0 ? max_variance : 1.0);
  for (auto& v : m.variance.data()) v += floor;
  return m;
}

int predict_logistic(const LogisticModel& m, std::span<const double> x) {
  std::vector<double> s(m.bias);
  for (std::size_t c = 0; c < s.size(); ++c) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      s[c] += m.weights(c, j) * (x[j] - m.mean[j]) / m.scale[j];
    }
  }
  return static_cast<int>(argmax(s));
}

int predict_bayes(const NaiveBayesModel& m, std::span<const double> x) {
  const std::size_t C = m.log_prior.size();
  std::vector<double> s(m.log_prior);
  for (std::size_t j = 0; j < x.size(); ++j) {
    for (std::size_t c = 0; c < C; ++c) {
      if (m.kinds[j] == FeatureKind::kCategorical) {
        const long code = std::lround(x[j]);
        const std::size_t levels = m.levels[j];
        s[c] += code >= 0 && static_cast<std::size_t>(code) < levels
                    ? m.log_likelihood[j][c * levels + static_cast<std::size_t>(code)]
                    : m.unseen_log_likelihood[j * C + c];
      } else {
        const double var = m.variance(c, j);
        const double diff = x[j] - m.mean(c, j);
        s[c] += -0.5 * std::log(2.0 * M_PI * var) - diff * diff / (2.0 * var);
      }
    }
  }
  return static_cast<int>(argmax(s));
}

}  // namespace

std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kDecisionTree: return "Decision Tree";
    case BaselineKind::kRandomForest: return "Random Forest";
    case BaselineKind::kLogisticRegression: return "Logistic Regression";
    case BaselineKind::kNaiveBayes: return "Naive Bayes";
  }
  return "unknown";
}

std::string BaselineHyper::describe(BaselineKind kind) const {
  std::ostringstream out;
  switch (kind) {
    case BaselineKind::kDecisionTree:
      out << "gini, max_depth=" << max_depth << ", min_leaf=" << min_leaf;
      break;
    case BaselineKind::kRandomForest:
      out << "trees=" << num_trees << ", gini, max_depth=" << max_depth
          << ", min_leaf=" << min_leaf << ", max_features="
          << (max_features == 0 ? std::string("ceil(sqrt(d))") : std::to_string(max_features))
          << ", bootstrap=" << (bootstrap ? "true" : "false");
      break;
    case BaselineKind::kLogisticRegression:
      out << "standardized, gradient descent, iterations=" << lr_iterations
          << ", rate=" << lr_rate;
      break;
    case BaselineKind::kNaiveBayes:
      out << "gaussian continuous, categorical smoothing=" << nb_smoothing;
      break;
  }
  return out.str();
}

int CartTree::predict(std::span<const double> x) const {
  int node = 0;
  while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const CartNode& n = nodes[static_cast<std::size_t>(node)];
    node = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(node)].label;
}

CartTree fit_cart(const Matrix& x, std::span<const int> y, std::size_t num_classes,
                  std::span<const std::size_t> rows, const BaselineHyper& hyper,
                  std::size_t max_features, std::mt19937_64* rng) {
  if (rows.empty()) throw DataError("fit_cart: no rows");
  CartBuilder builder(x, y, num_classes, hyper, max_features, rng);
  return builder.build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

BaselineModel fit_baseline(BaselineKind kind, const FeatureFrame& train,
                           const BaselineHyper& hyper, std::uint64_t seed) {
  if (train.size() == 0) throw DataError("fit_baseline: empty training frame");
  if (train.y.size() != train.size()) throw DataError("fit_baseline: label count mismatch");
  BaselineModel model;
  model.kind = kind;
  model.num_features = train.num_features();
  model.num_classes = train.num_classes;

  const bool single_class =
      std::all_of(train.y.begin(), train.y.end(), [&](int v) { return v == train.y[0]; });
  if (single_class) {
    model.constant = true;
    model.constant_label = train.y[0];
    return model;
  }

  const std::size_t n = train.size();
  const std::size_t d = train.num_features();
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);

  switch (kind) {
    case BaselineKind::kDecisionTree:
      model.trees.push_back(fit_cart(train.x, train.y, train.num_classes, all, hyper, d, nullptr));
      break;
    case BaselineKind::kRandomForest: {
      const std::size_t mtry =
          hyper.max_features == 0
              ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))))
              : hyper.max_features;
      model.trees.resize(hyper.num_trees);
      parallel_for(hyper.num_trees, [&](std::size_t t) {
        auto rng = make_rng(seed + t, kForestStream);
        std::vector<std::size_t> rows = all;
        if (hyper.bootstrap) {
          std::uniform_int_distribution<std::size_t> pick(0, n - 1);
          for (auto& r : rows) r = pick(rng);
        }
        model.trees[t] = fit_cart(train.x, train.y, train.num_classes, rows, hyper, mtry, &rng);
      });
      break;
    }
    case BaselineKind::kLogisticRegression:
      model.logistic = fit_logistic(train, hyper);
      break;
    case BaselineKind::kNaiveBayes:
      model.bayes = fit_naive_bayes(train, hyper);
      break;
  }
  return model;
}

std::vector<int> predict_baseline(const BaselineModel& model, const Matrix& x) {
  if (x.cols() != model.num_features) throw DataError("predict_baseline: feature count mismatch");
  std::vector<int> out(x.rows(), model.constant_label);
  if (model.constant) return out;
  std::vector<std::size_t> votes(model.num_classes);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    switch (model.kind) {
      case BaselineKind::kDecisionTree:
      case BaselineKind::kRandomForest:
        std::fill(votes.begin(), votes.end(), 0);
        for (const auto& tree : model.trees) ++votes[static_cast<std::size_t>(tree.predict(row))];
        out[i] = majority(votes);
        break;
      case BaselineKind::kLogisticRegression:
        out[i] = predict_logistic(model.logistic, row);
        break;
      case BaselineKind::kNaiveBayes:
        out[i] = predict_bayes(model.bayes, row);
        break;
    }
  }
  return out;
}

}  // namespace mhasrf

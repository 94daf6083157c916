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

#include "mhasrf/evaluation.hpp"

#include <cstdio>
#include <json.hpp>
#include <ostream>

#include "mhasrf/csv.hpp"

namespace mhasrf {
namespace {

std::string number(double v) { return nlohmann::json(v).dump(); }

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

double ratio(std::size_t num, std::size_t den, const std::string& flag,
             std::vector<std::string>& flags) {
  if (den == 0) {
    flags.push_back(flag);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw DataError("metrics: length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if ((preds[i] != 0 && preds[i] != 1) || (labels[i] != 0 && labels[i] != 1)) {
      throw DataError("metrics: classes must be 0 or 1");
    }
    const bool p = preds[i] == 1, y = labels[i] == 1;
    if (p && y) ++cm.tp;
    else if (p && !y) ++cm.fp;
    else if (!p && y) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

MetricsRow metrics(std::span<const int> preds, std::span<const int> labels,
                   const std::string& name) {
  MetricsRow row;
  row.model = name;
  row.confusion = confusion(preds, labels);
  const ConfusionMatrix& cm = row.confusion;
  const std::size_t n = cm.total();
  row.accuracy = ratio(cm.tp + cm.tn, n, "accuracy", row.zero_division);

  // Class c as positive: class 1 uses cm directly, class 0 swaps roles.
  const ConfusionMatrix as_class[2] = {{cm.tn, cm.fn, cm.fp, cm.tp}, cm};
  row.per_class.resize(2);
  for (std::size_t c = 0; c < 2; ++c) {
    const ConfusionMatrix& m = as_class[c];
    const std::string suffix = "[" + std::to_string(c) + "]";
    ClassMetrics& out = row.per_class[c];
    out.precision = ratio(m.tp, m.tp + m.fp, "precision" + suffix, row.zero_division);
    out.recall = ratio(m.tp, m.tp + m.fn, "recall" + suffix, row.zero_division);
    out.specificity = ratio(m.tn, m.tn + m.fp, "specificity" + suffix, row.zero_division);
    out.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn, "f1" + suffix, row.zero_division);
    out.support = static_cast<double>(m.tp + m.fn);
  }
  const ClassMetrics& pos = row.per_class[1];
  row.precision = pos.precision;
  row.recall = pos.recall;
  row.specificity = pos.specificity;
  row.f1 = pos.f1;

  if (n > 0) {
    for (const auto& c : row.per_class) {
      const double w = c.support / static_cast<double>(n);
      row.weighted.precision += w * c.precision;
      row.weighted.recall += w * c.recall;
      row.weighted.specificity += w * c.specificity;
      row.weighted.f1 += w * c.f1;
    }
  }
  row.weighted.support = static_cast<double>(n);
  return row;
}

void write_report_text(std::ostream& out, const std::string& title,
                       const std::vector<MetricsRow>& rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.model.size());
  width += 2;
  auto header = [&](const char* label) {
    out << label << '\n'
        << pad("Model", width) << "Accuracy  Specificity  Precision  Recall    F1\n";
  };
  out << title << "\n\n";
  header("Support-weighted averages");
  for (const auto& r : rows) {
    out << pad(r.model, width) << pad(fixed4(r.accuracy), 10) << pad(fixed4(r.weighted.specificity), 13)
        << pad(fixed4(r.weighted.precision), 11) << pad(fixed4(r.weighted.recall), 10)
        << fixed4(r.weighted.f1) << '\n';
  }
  out << '\n';
  header("Positive class (no-show)");
  for (const auto& r : rows) {
    out << pad(r.model, width) << pad(fixed4(r.accuracy), 10) << pad(fixed4(r.specificity), 13)
        << pad(fixed4(r.precision), 11) << pad(fixed4(r.recall), 10) << fixed4(r.f1) << '\n';
  }
  out << "\nConfusion matrices (tp fp fn tn)\n";
  for (const auto& r : rows) {
    out << pad(r.model, width) << r.confusion.tp << ' ' << r.confusion.fp << ' '
        << r.confusion.fn << ' ' << r.confusion.tn << '\n';
  }
  bool any_details = false;
  for (const auto& r : rows) any_details = any_details || !r.details.empty();
  if (any_details) {
    out << "\nSettings\n";
    for (const auto& r : rows) {
      if (!r.details.empty()) out << pad(r.model, width) << r.details << '\n';
    }
  }
  for (const auto& r : rows) {
    for (const auto& f : r.zero_division) {
      out << "warning: " << r.model << ": " << f << " has a zero denominator, reported as 0\n";
    }
  }
}

void write_report_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  csv::write_row(out, {"model", "accuracy", "weighted_specificity", "weighted_precision",
                       "weighted_recall", "weighted_f1", "specificity", "precision", "recall",
                       "f1", "tp", "fp", "fn", "tn", "zero_division", "settings"});
  for (const auto& r : rows) {
    std::string flags;
    for (const auto& f : r.zero_division) flags += (flags.empty() ? "" : ";") + f;
    csv::write_row(out, {r.model, number(r.accuracy), number(r.weighted.specificity),
                         number(r.weighted.precision), number(r.weighted.recall),
                         number(r.weighted.f1), number(r.specificity), number(r.precision),
                         number(r.recall), number(r.f1), std::to_string(r.confusion.tp),
                         std::to_string(r.confusion.fp), std::to_string(r.confusion.fn),
                         std::to_string(r.confusion.tn), flags, r.details});
  }
}

namespace {

std::string describe(const TrainConfig& c) {
  return "trees=" + std::to_string(c.num_trees) + ", depth=" + std::to_string(c.depth) +
         ", heads=" + std::to_string(c.heads) + ", lr=" + number(c.learning_rate) +
         ", stage1_epochs=" + std::to_string(c.stage1_epochs) +
         ", stage2_epochs=" + std::to_string(c.stage2_epochs) +
         ", batch=" + std::to_string(c.batch_size) + ", seed=" + std::to_string(c.seed) +
         (c.use_reliability ? "" : ", reliability=off");
}

}  // namespace

std::vector<MetricsRow> compare_with_model(const Model& model, const FeatureFrame& train,
                                           const FeatureFrame& test, const BaselineHyper& hyper) {
  if (test.size() == 0) throw DataError("compare: empty test frame");
  std::vector<MetricsRow> rows;
  rows.push_back(metrics(model.predict(test.x), test.y, "MHASRF"));
  rows.back().details = describe(model.config);
  for (BaselineKind kind : kBaselineOrder) {
    const BaselineModel fitted = fit_baseline(kind, train, hyper, model.config.seed);
    rows.push_back(metrics(predict_baseline(fitted, test.x), test.y, baseline_name(kind)));
    rows.back().details = hyper.describe(kind);
    if (fitted.constant) rows.back().details += ", single-class training data: constant predictor";
  }
  return rows;
}

std::vector<MetricsRow> compare_models(const FeatureFrame& train, const FeatureFrame& test,
                                       const TrainConfig& config, const BaselineHyper& hyper) {
  const TrainResult trained = mhasrf::train(train, test, config);
  return compare_with_model(trained.model, train, test, hyper);
}

AblationResult ablation_run(const FeatureFrame& train, const FeatureFrame& test,
                            const TrainConfig& config) {
  if (test.size() == 0) throw DataError("ablation: empty test frame");
  const Model base = fit_forest_stage(train, config);

  struct Variant {
    const char* name;
    std::size_t heads;
    bool reliability;
  };
  const Variant variants[] = {{"MHASRF", config.heads, true},
                              {"SHASRF", 1, true},
                              {"MHASRF without delta", config.heads, false}};
  AblationResult result;
  for (const auto& v : variants) {
    Model model = base;
    model.config.heads = v.heads;
    model.config.use_reliability = v.reliability;
    fit_attention_stage(model, train, test);
    auto preds = model.predict(test.x);
    result.rows.push_back(metrics(preds, test.y, v.name));
    result.rows.back().details = describe(model.config);
    result.predictions.push_back(std::move(preds));
    result.models.push_back(std::move(model));
  }
  return result;
}

Matrix export_attention(const Model& model, const FeatureFrame& batch) {
  if (batch.size() == 0) throw DataError("export_attention: empty batch");
  const ContextCache cache = build_context(model.forest, model.standardizer.apply(batch.x));
  const std::size_t T = model.forest.size();
  const std::size_t H = model.attention.heads;
  Matrix out(batch.size(), T);
  AttentionKernel kernel(T, model.attention);
  for (std::size_t i = 0; i < cache.rows; ++i) {
    kernel.forward(model.attention, model.forest.errors, cache.distances(i), cache.targets(i));
    auto af = kernel.alpha_final();
    for (std::size_t k = 0; k < T; ++k) {
      double s = 0.0;
      for (std::size_t h = 0; h < H; ++h) s += af[k * H + h];
      out(i, k) = s / static_cast<double>(H);
    }
  }
  return out;
}

void write_attention_csv(std::ostream& out, const Matrix& attention) {
  csv::Row header;
  for (std::size_t k = 0; k < attention.cols(); ++k) header.push_back("tree_" + std::to_string(k + 1));
  csv::write_row(out, header);
  csv::Row row(attention.cols());
  for (std::size_t i = 0; i < attention.rows(); ++i) {
    for (std::size_t k = 0; k < attention.cols(); ++k) row[k] = number(attention(i, k));
    csv::write_row(out, row);
  }
}

}  // namespace mhasrf

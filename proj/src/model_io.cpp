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

#include "mhasrf/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

namespace mhasrf {
namespace {

using nlohmann::json;

constexpr std::string_view kChecksumPrefix = "fnv1a64:";

json loss_value(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

double loss_from(const json& v) {
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

json config_to_json(const TrainConfig& c) {
  return {{"num_trees", c.num_trees},
          {"depth", c.depth},
          {"heads", c.heads},
          {"learning_rate", c.learning_rate},
          {"stage1_epochs", c.stage1_epochs},
          {"stage2_epochs", c.stage2_epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"tau", c.tau},
          {"epsilon", c.epsilon},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"hidden_units", c.hidden_units},
          {"use_reliability", c.use_reliability}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  j.at("num_trees").get_to(c.num_trees);
  j.at("depth").get_to(c.depth);
  j.at("heads").get_to(c.heads);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("stage1_epochs").get_to(c.stage1_epochs);
  j.at("stage2_epochs").get_to(c.stage2_epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("seed").get_to(c.seed);
  j.at("tau").get_to(c.tau);
  j.at("epsilon").get_to(c.epsilon);
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  j.at("hidden_units").get_to(c.hidden_units);
  j.at("use_reliability").get_to(c.use_reliability);
  return c;
}

std::string kind_name(FeatureKind k) {
  return k == FeatureKind::kCategorical ? "categorical" : "continuous";
}

FeatureKind kind_from(const std::string& s) {
  if (s == "categorical") return FeatureKind::kCategorical;
  if (s == "continuous") return FeatureKind::kContinuous;
  throw FormatError("model file: unknown feature kind '" + s + "'");
}

json features_to_json(const Model& m) {
  json out = json::array();
  for (std::size_t j = 0; j < m.feature_names.size(); ++j) {
    json f = {{"name", m.feature_names[j]}, {"kind", kind_name(m.kinds[j])}};
    if (m.encoder) {
      const auto& col = m.encoder->columns()[j];
      if (col.kind == FeatureKind::kCategorical) {
        f["categories"] = col.categories.values();
      } else {
        f["median"] = col.median;
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

json forest_to_json(const SoftForest& forest) {
  json trees = json::array();
  for (const auto& t : forest.trees) {
    trees.push_back({{"depth", t.depth()},
                     {"num_features", t.num_features()},
                     {"num_classes", t.num_classes()},
                     {"parameters", std::vector<double>(t.parameters().begin(),
                                                        t.parameters().end())}});
  }
  json stats = json::array();
  for (const auto& s : forest.stats) {
    stats.push_back({{"mean_x", s.mean_x.data()},
                     {"mean_y", s.mean_y.data()},
                     {"count", s.count}});
  }
  return {{"bootstrap_seed", forest.bootstrap_seed},
          {"trees", trees},
          {"leaf_stats", stats},
          {"errors", forest.errors},
          {"global_mean_x", forest.global_mean_x},
          {"global_class_freq", forest.global_class_freq}};
}

SoftForest forest_from_json(const json& j) {
  SoftForest forest;
  j.at("bootstrap_seed").get_to(forest.bootstrap_seed);
  for (const auto& t : j.at("trees")) {
    SoftTree tree(t.at("depth").get<std::size_t>(), t.at("num_features").get<std::size_t>(),
                  t.at("num_classes").get<std::size_t>());
    const auto params = t.at("parameters").get<std::vector<double>>();
    if (params.size() != tree.parameters().size()) {
      throw FormatError("model file: tree parameter count mismatch");
    }
    std::copy(params.begin(), params.end(), tree.parameters().begin());
    forest.trees.push_back(std::move(tree));
  }
  const auto& stats = j.at("leaf_stats");
  if (!stats.empty() && stats.size() != forest.trees.size()) {
    throw FormatError("model file: leaf statistics do not match tree count");
  }
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const SoftTree& tree = forest.trees[k];
    TreeLeafStats s{Matrix(tree.num_leaves(), tree.num_features()),
                    Matrix(tree.num_leaves(), tree.num_classes()), {}};
    auto mean_x = stats[k].at("mean_x").get<std::vector<double>>();
    auto mean_y = stats[k].at("mean_y").get<std::vector<double>>();
    s.count = stats[k].at("count").get<std::vector<std::size_t>>();
    if (mean_x.size() != s.mean_x.data().size() || mean_y.size() != s.mean_y.data().size() ||
        s.count.size() != tree.num_leaves()) {
      throw FormatError("model file: leaf statistics have the wrong shape");
    }
    s.mean_x.data() = std::move(mean_x);
    s.mean_y.data() = std::move(mean_y);
    forest.stats.push_back(std::move(s));
  }
  j.at("errors").get_to(forest.errors);
  j.at("global_mean_x").get_to(forest.global_mean_x);
  j.at("global_class_freq").get_to(forest.global_class_freq);
  return forest;
}

json history_to_json(const TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", loss_value(e.train_loss)},
                      {"test_loss", loss_value(e.test_loss)}});
  }
  return {{"initial_train_loss", loss_value(h.initial_train_loss)},
          {"initial_test_loss", loss_value(h.initial_test_loss)},
          {"epochs", epochs}};
}

TrainHistory history_from_json(const json& j) {
  TrainHistory h;
  h.initial_train_loss = loss_from(j.at("initial_train_loss"));
  h.initial_test_loss = loss_from(j.at("initial_test_loss"));
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    e.at("epoch").get_to(r.epoch);
    r.train_loss = loss_from(e.at("train_loss"));
    r.test_loss = loss_from(e.at("test_loss"));
    h.epochs.push_back(r);
  }
  return h;
}

json payload_to_json(const Model& m) {
  const AttentionParams& a = m.attention;
  return {{"config", config_to_json(m.config)},
          {"split", {{"train_fraction", m.split.train_fraction}, {"seed", m.split.seed}}},
          {"has_encoder", static_cast<bool>(m.encoder)},
          {"features", features_to_json(m)},
          {"standardizer", {{"mean", m.standardizer.mean}, {"scale", m.standardizer.scale}}},
          {"forest", forest_to_json(m.forest)},
          {"attention",
           {{"heads", a.heads},
            {"num_classes", a.num_classes},
            {"hidden", a.hidden},
            {"tau", a.tau},
            {"epsilon", a.epsilon},
            {"use_reliability", a.use_reliability},
            {"values", a.values}}},
          {"history", history_to_json(m.history)}};
}

Model model_from_json(const json& j) {
  Model m;
  m.config = config_from_json(j.at("config"));
  j.at("split").at("train_fraction").get_to(m.split.train_fraction);
  j.at("split").at("seed").get_to(m.split.seed);

  const bool has_encoder = j.at("has_encoder").get<bool>();
  auto encoder = std::make_shared<FrameEncoder>();
  for (const auto& f : j.at("features")) {
    m.feature_names.push_back(f.at("name").get<std::string>());
    m.kinds.push_back(kind_from(f.at("kind").get<std::string>()));
    if (!has_encoder) continue;
    FrameEncoder::Column col;
    col.name = m.feature_names.back();
    col.kind = m.kinds.back();
    if (col.kind == FeatureKind::kCategorical) {
      col.categories = CategoricalEncoder(f.at("categories").get<std::vector<std::string>>());
    } else {
      col.median = f.at("median").get<double>();
    }
    encoder->columns().push_back(std::move(col));
  }
  if (has_encoder) m.encoder = std::move(encoder);

  j.at("standardizer").at("mean").get_to(m.standardizer.mean);
  j.at("standardizer").at("scale").get_to(m.standardizer.scale);
  m.forest = forest_from_json(j.at("forest"));

  const auto& a = j.at("attention");
  m.attention = AttentionParams(a.at("heads").get<std::size_t>(),
                                a.at("num_classes").get<std::size_t>(),
                                a.at("hidden").get<std::size_t>());
  a.at("tau").get_to(m.attention.tau);
  a.at("epsilon").get_to(m.attention.epsilon);
  a.at("use_reliability").get_to(m.attention.use_reliability);
  auto values = a.at("values").get<std::vector<double>>();
  if (values.size() != m.attention.size()) {
    throw FormatError("model file: attention parameter count mismatch");
  }
  m.attention.values = std::move(values);
  m.history = history_from_json(j.at("history"));

  if (m.standardizer.mean.size() != m.feature_names.size() ||
      m.forest.num_features() != m.feature_names.size()) {
    throw FormatError("model file: feature count mismatch between sections");
  }
  return m;
}

std::pair<json, std::string> split_file(const std::string& text) {
  const auto newline = text.find('\n');
  if (newline == std::string::npos) throw FormatError("model file: missing header line");
  json header;
  try {
    header = json::parse(text.substr(0, newline));
  } catch (const json::exception&) {
    throw FormatError("model file: unreadable header line");
  }
  if (!header.is_object()) throw FormatError("model file: unreadable header line");
  return {std::move(header), text.substr(newline + 1)};
}

}  // namespace

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string serialize_model(const Model& model) {
  model.attention.validate();
  if (!all_finite(model.standardizer.scale) || !all_finite(model.standardizer.mean)) {
    throw NumericalError("save_model: non-finite standardizer");
  }
  const std::string payload = payload_to_json(model).dump(1) + "\n";
  const json header = {{"format", kModelFormatName},
                       {"format_version", kModelFormatVersion},
                       {"checksum", std::string(kChecksumPrefix) + fnv1a64_hex(payload)}};
  return header.dump() + "\n" + payload;
}

Model deserialize_model(const std::string& text) {
  auto [header, payload] = split_file(text);
  if (header.value("format", std::string()) != kModelFormatName) {
    throw FormatError("model file: not an mhasrf model");
  }
  const auto version_it = header.find("format_version");
  if (version_it == header.end() || !version_it->is_number_integer()) {
    throw FormatError("model file: missing format_version");
  }
  const int version = version_it->get<int>();
  if (version != kModelFormatVersion) {
    throw FormatError("model file: unsupported format_version " + std::to_string(version) +
                      " (this reader supports " + std::to_string(kModelFormatVersion) + ")");
  }
  const std::string expected = header.value("checksum", std::string());
  const std::string actual = std::string(kChecksumPrefix) + fnv1a64_hex(payload);
  if (expected != actual) {
    throw FormatError("model file: checksum mismatch (expected " + expected + ", got " + actual +
                      ")");
  }
  try {
    Model m = model_from_json(json::parse(payload));
    m.attention.validate();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: malformed payload: ") + e.what());
  } catch (const Error& e) {
    if (dynamic_cast<const FormatError*>(&e) != nullptr) throw;
    throw FormatError(std::string("model file: ") + e.what());
  }
}

void save_model(const Model& model, const std::string& path) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file " + path);
  out << text;
  if (!out) throw DataError("failed writing model file " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

std::string model_checksum(const std::string& file_text) {
  return split_file(file_text).first.value("checksum", std::string());
}

}  // namespace mhasrf

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

#include "mhasrf/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "mhasrf/config.hpp"
#include "mhasrf/csv.hpp"
#include "mhasrf/evaluation.hpp"
#include "mhasrf/importance.hpp"
#include "mhasrf/model_io.hpp"
#include "mhasrf/trainer.hpp"

namespace mhasrf {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
  std::string input;
  std::string model;
  std::optional<std::size_t> rows;
  std::size_t batch = 32;
  bool use_test = false;
  double step = 1e-5;
};

struct Context {
  const Options& opt;
  std::ostream& out;
  std::ostream& err;
  RunConfig config;

  SplitSpec split() const { return {config.train_fraction, config.train.seed}; }
};

std::string number(double v) { return nlohmann::json(v).dump(); }

std::string format_time(double minutes) {
  if (minutes < 0.0) return {};
  const auto m = static_cast<long>(std::lround(minutes));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%02ld:%02ld", m / 60, m % 60);
  return buf;
}

fs::path output_path(const Context& ctx, const std::string& name) {
  const fs::path dir(ctx.opt.out);
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

AppointmentTable load_derived(const Context& ctx, bool allow_unknown = false) {
  require(ctx.opt.input, "--input");
  LoadResult loaded = load_table(ctx.opt.input, {allow_unknown});
  if (loaded.report.dropped() > 0) {
    ctx.err << "note: " << loaded.report.dropped() << " of " << loaded.report.rows_read
            << " rows dropped while cleaning\n";
  }
  return derive_features(std::move(loaded.table));
}

Model load_model_option(const Context& ctx) {
  require(ctx.opt.model, "--model");
  return load_model(ctx.opt.model);
}

void report_warnings(const Context& ctx, const EncodeDiagnostics& diag) {
  for (const auto& w : diag.warnings) ctx.err << "warning: " << w << '\n';
}

// Re-creates the model's train/test split of a table and encodes both parts
// with the model's own encoder.
std::pair<FeatureFrame, FeatureFrame> split_for_model(const Context& ctx, const Model& model,
                                                      const AppointmentTable& table) {
  const auto idx = split_indices(table.rows.size(), model.split);
  auto pick = [&](const std::vector<std::size_t>& rows) {
    AppointmentTable part;
    part.derived = table.derived;
    for (auto i : rows) part.rows.push_back(table.rows[i]);
    return part;
  };
  EncodeDiagnostics diag;
  FeatureFrame train = model.encode_table(pick(idx.train), &diag);
  FeatureFrame test = model.encode_table(pick(idx.test), &diag);
  report_warnings(ctx, diag);
  return {std::move(train), std::move(test)};
}

int cmd_gen_data(Context& ctx) {
  const std::size_t rows = ctx.opt.rows.value_or(ctx.config.rows);
  if (rows < 1) throw UsageError("--rows must be >= 1");
  const AppointmentTable table = generate_synthetic(rows, ctx.config.train.seed, ctx.config.synthetic);
  std::ostringstream text;
  write_table_csv(table, text);
  const auto path = output_path(ctx, "appointments.csv");
  write_file(path, text.str());
  ctx.out << "wrote " << rows << " rows to " << path.string() << '\n';
  return kExitOk;
}

int cmd_preprocess(Context& ctx) {
  require(ctx.opt.input, "--input");
  LoadResult loaded = load_table(ctx.opt.input);
  const AppointmentTable table = derive_features(std::move(loaded.table));
  const FeatureFrame frame = encode(table);

  std::ostringstream text;
  csv::Row header = {"patient_id", "appointment_date", "appointment_time"};
  header.insert(header.end(), frame.feature_names.begin(), frame.feature_names.end());
  header.push_back("label");
  csv::write_row(text, header);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const RowKey& key = frame.row_keys[i];
    csv::Row row = {key.patient_id, key.date, format_time(key.time_minutes)};
    for (double v : frame.x.row(i)) row.push_back(number(v));
    row.push_back(std::to_string(frame.y[i]));
    csv::write_row(text, row);
  }
  write_file(output_path(ctx, "features.csv"), text.str());

  std::string report = loaded.report.to_text();
  report += "features: " + std::to_string(frame.num_features()) + "\n";
  report += "encoded rows: " + std::to_string(frame.size()) + "\n";
  write_file(output_path(ctx, "cleaning_report.txt"), report);
  ctx.out << report;
  return kExitOk;
}

int cmd_train(Context& ctx) {
  const AppointmentTable table = load_derived(ctx);
  const TrainTestData data = make_train_test(table, ctx.split());
  report_warnings(ctx, data.test_diagnostics);
  TrainResult result = train(data.train, data.test, ctx.config.train);
  result.model.split = ctx.split();

  const std::string text = serialize_model(result.model);
  write_file(output_path(ctx, "model.json"), text);
  std::ostringstream history;
  result.history.write_csv(history);
  write_file(output_path(ctx, "history.csv"), history.str());

  const auto preds = result.model.predict(data.test.x);
  const MetricsRow row = metrics(preds, data.test.y, "MHASRF");
  ctx.out << "train rows: " << data.train.size() << ", test rows: " << data.test.size() << '\n'
          << "final train loss: " << number(result.history.epochs.empty()
                                                ? result.history.initial_train_loss
                                                : result.history.epochs.back().train_loss)
          << '\n'
          << "test accuracy: " << number(row.accuracy) << '\n'
          << "checksum: " << model_checksum(text) << '\n';
  return kExitOk;
}

void write_metrics_files(Context& ctx, const std::string& stem, const std::string& title,
                         const std::vector<MetricsRow>& rows) {
  std::ostringstream text, table;
  write_report_text(text, title, rows);
  write_report_csv(table, rows);
  write_file(output_path(ctx, stem + ".txt"), text.str());
  write_file(output_path(ctx, stem + ".csv"), table.str());
  ctx.out << text.str();
}

int cmd_evaluate(Context& ctx) {
  const AppointmentTable table = load_derived(ctx);
  std::vector<MetricsRow> rows;
  if (!ctx.opt.model.empty()) {
    const Model model = load_model_option(ctx);
    const auto [train, test] = split_for_model(ctx, model, table);
    rows = compare_with_model(model, train, test);
  } else {
    const TrainTestData data = make_train_test(table, ctx.split());
    report_warnings(ctx, data.test_diagnostics);
    rows = compare_models(data.train, data.test, ctx.config.train);
  }
  write_metrics_files(ctx, "comparison", "Baseline comparison (test split)", rows);
  return kExitOk;
}

int cmd_ablate(Context& ctx) {
  const AppointmentTable table = load_derived(ctx);
  const TrainTestData data = make_train_test(table, ctx.split());
  report_warnings(ctx, data.test_diagnostics);
  const AblationResult result = ablation_run(data.train, data.test, ctx.config.train);
  write_metrics_files(ctx, "ablation", "Ablation (test split)", result.rows);
  return kExitOk;
}

int cmd_predict(Context& ctx) {
  const Model model = load_model_option(ctx);
  const AppointmentTable table = load_derived(ctx, true);
  EncodeDiagnostics diag;
  const FeatureFrame frame = model.encode_table(table, &diag);
  report_warnings(ctx, diag);
  const Matrix probs = model.predict_proba(frame.x);

  std::ostringstream text;
  csv::Row header = {"patient_id", "appointment_date", "appointment_time"};
  for (std::size_t c = 0; c < probs.cols(); ++c) {
    header.push_back(c == 0 ? "prob_show" : c == 1 ? "prob_no_show" : "prob_" + std::to_string(c));
  }
  header.push_back("predicted_class");
  header.push_back("predicted_status");
  csv::write_row(text, header);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const RowKey& key = frame.row_keys[i];
    csv::Row row = {key.patient_id, key.date, format_time(key.time_minutes)};
    for (double p : probs.row(i)) row.push_back(number(p));
    const auto cls = argmax(probs.row(i));
    row.push_back(std::to_string(cls));
    row.push_back(cls == 1 ? "No-Show" : "Show");
    csv::write_row(text, row);
  }
  const auto path = output_path(ctx, "predictions.csv");
  write_file(path, text.str());
  ctx.out << "scored " << frame.size() << " rows into " << path.string() << '\n';
  return kExitOk;
}

FeatureFrame evaluation_rows(Context& ctx, const Model& model) {
  const AppointmentTable table = load_derived(ctx);
  auto [train, test] = split_for_model(ctx, model, table);
  FeatureFrame chosen = ctx.opt.use_test ? std::move(test) : std::move(train);
  if (chosen.size() == 0) throw DataError("selected split has zero rows");
  return chosen;
}

int cmd_importance(Context& ctx) {
  const Model model = load_model_option(ctx);
  const FeatureFrame rows = evaluation_rows(ctx, model);
  const ImportanceReport report = importance_report(model, rows.x);
  std::ostringstream table, json;
  report.write_csv(table);
  report.write_json(json);
  write_file(output_path(ctx, "importance.csv"), table.str());
  write_file(output_path(ctx, "importance.json"), json.str());
  ctx.out << "feature importance (" << (ctx.opt.use_test ? "test" : "train") << " rows: "
          << rows.size() << ")\n";
  for (std::size_t idx : report.ranking()) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "  %-24s %7.3f%%\n", report.rows[idx].feature.c_str(),
                  100.0 * report.rows[idx].combined);
    ctx.out << buf;
  }
  return kExitOk;
}

int cmd_export_attention(Context& ctx) {
  const Model model = load_model_option(ctx);
  const FeatureFrame rows = evaluation_rows(ctx, model);
  if (ctx.opt.batch < 1) throw UsageError("--batch must be >= 1");
  std::vector<std::size_t> first(std::min(ctx.opt.batch, rows.size()));
  std::iota(first.begin(), first.end(), 0);
  const Matrix attention = export_attention(model, rows.subset(first));
  std::ostringstream text;
  write_attention_csv(text, attention);
  const auto path = output_path(ctx, "attention.csv");
  write_file(path, text.str());
  ctx.out << "wrote " << attention.rows() << " x " << attention.cols() << " attention matrix to "
          << path.string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(Context& ctx) {
  if (!(ctx.opt.step > 0.0)) throw UsageError("--step must be > 0");
  const GradCheckFixture fixture = make_grad_check_fixture(ctx.opt.seed.value_or(0));
  std::string text = "fixture: T=3, D=2, H=2, d=4, batch=" + std::to_string(fixture.batch.size()) + "\n";
  bool passed = true;
  for (GradCheckMode mode : {GradCheckMode::kStage1, GradCheckMode::kStage2}) {
    const GradCheckReport report = grad_check(fixture.model, fixture.batch, ctx.opt.step, mode);
    passed = passed && report.passed();
    text += "\n" + report.to_text();
  }
  write_file(output_path(ctx, "gradcheck.txt"), text);
  ctx.out << text;
  if (!passed) {
    ctx.err << "error: gradient check failed\n";
    return kExitNumerical;
  }
  return kExitOk;
}

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--seed", opt.seed, "Random seed (overrides the config file)");
  sub->add_option("--config", opt.config, "key = value configuration file");
  sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app("Multi-head attention soft random forest", "mhasrf");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  struct Command {
    const char* name;
    const char* help;
    int (*run)(Context&);
  };
  const Command commands[] = {
      {"gen-data", "Write a synthetic appointments CSV", cmd_gen_data},
      {"preprocess", "Clean, derive and encode a CSV; write features and a cleaning report",
       cmd_preprocess},
      {"train", "Fit MHASRF; write model.json and history.csv", cmd_train},
      {"evaluate", "Compare MHASRF against the baselines on the test split", cmd_evaluate},
      {"ablate", "Compare MHASRF, SHASRF and MHASRF without reliability", cmd_ablate},
      {"predict", "Score a CSV with a trained model", cmd_predict},
      {"importance", "Write tree, attention and combined feature importance", cmd_importance},
      {"export-attention", "Write per-tree attention weights for a batch", cmd_export_attention},
      {"gradcheck", "Check analytic gradients against finite differences", cmd_gradcheck},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, opt);
    const std::string name = c.name;
    if (name != "gen-data" && name != "gradcheck") {
      sub->add_option("--input", opt.input, "Appointments CSV");
    }
    if (name == "evaluate" || name == "predict" || name == "importance" ||
        name == "export-attention") {
      sub->add_option("--model", opt.model, "Model file from train");
    }
    if (name == "gen-data") sub->add_option("--rows", opt.rows, "Number of rows");
    if (name == "importance" || name == "export-attention") {
      sub->add_flag("--use-test", opt.use_test, "Use the test split instead of the training split");
    }
    if (name == "export-attention") {
      sub->add_option("--batch", opt.batch, "Number of rows to export")->capture_default_str();
    }
    if (name == "gradcheck") {
      sub->add_option("--step", opt.step, "Finite-difference step")->capture_default_str();
    }
    subs.emplace_back(sub, &c);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    RunConfig config;
    if (!opt.config.empty()) config = load_run_config(opt.config);
    if (opt.seed) config.train.seed = *opt.seed;
    config.train.validate();
    Context ctx{opt, out, err, config};
    for (const auto& [sub, command] : subs) {
      if (sub->parsed()) return command->run(ctx);
    }
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace mhasrf

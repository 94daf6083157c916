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

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mhasrf/common.hpp"

namespace mhasrf {

enum class AppointmentStatus { kShow, kNoShow, kCancelled, kUnknown };

std::optional<AppointmentStatus> parse_status(std::string_view text);
std::string_view status_name(AppointmentStatus status);

// Calendar date with a serial day number for ordering.
struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  static std::optional<Date> parse(std::string_view text);  // YYYY-MM-DD
  std::int64_t serial() const;                              // days since 1970-01-01
  std::string weekday_name() const;
  std::string month_name() const;
  std::string to_string() const;

  friend auto operator<=>(const Date&, const Date&) = default;
};

// One appointment. Empty strings / nullopt mean "missing".
struct AppointmentRecord {
  std::string patient_id;
  std::optional<double> age;
  std::string gender;
  std::string language;
  std::string visit_reason;
  std::string visit_type;
  AppointmentStatus status = AppointmentStatus::kUnknown;
  Date date;
  std::optional<double> time_minutes;  // minutes since midnight
  std::string day_of_week;
  std::string month;
  std::string institute;
  std::string center_name;
  std::string department_name;
  std::string provider_name;
  std::optional<double> temperature;  // deg C
  std::optional<double> dew;          // deg C
  std::optional<double> humidity;     // percent
  std::optional<double> windspeed;
  std::optional<double> visibility;
  std::string weather_condition;
  std::string air_quality;

  // Filled by derive_features.
  int week_of_month = 0;
  std::string season;
  double number_of_visits = 0.0;
  double pct_no_show = 0.0;  // 0..100
  double same_day_appointments = 0.0;
};

struct AppointmentTable {
  std::vector<AppointmentRecord> rows;
  bool derived = false;
};

// Raw CSV column names in canonical order.
const std::vector<std::string>& raw_schema();

struct CleaningReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t cancelled = 0;
  std::size_t missing_patient_id = 0;
  std::size_t bad_date = 0;
  std::size_t bad_age = 0;
  std::size_t age_out_of_range = 0;
  std::size_t bad_status = 0;
  std::size_t invalid_numeric_set_missing = 0;

  std::size_t dropped() const { return rows_read - rows_kept; }
  std::string to_text() const;
};

struct LoadOptions {
  // Scoring inputs may carry rows without an outcome yet.
  bool allow_unknown_status = false;
};

struct LoadResult {
  AppointmentTable table;
  CleaningReport report;
};

LoadResult load_table(const std::string& path, const LoadOptions& options = {});
LoadResult parse_table(const std::vector<std::vector<std::string>>& rows,
                       const LoadOptions& options = {});

void write_table_csv(const AppointmentTable& table, std::ostream& out);

// Adds the engineered columns. History features only look at strictly
// earlier (date, time) appointments of the same patient with a known outcome.
AppointmentTable derive_features(AppointmentTable table);

int week_of_month(int day_of_month);
std::string season_of_month(int month);

enum class FeatureKind { kContinuous, kCategorical };

// Value -> code map with codes in first-appearance order.
class CategoricalEncoder {
 public:
  CategoricalEncoder() = default;
  explicit CategoricalEncoder(std::vector<std::string> values);

  // Registers the value if new and returns its code.
  int fit_value(const std::string& value);
  // Unseen values map to the reserved code cardinality().
  int encode(const std::string& value, bool* unseen = nullptr) const;
  const std::string& decode(int code) const;

  int cardinality() const { return static_cast<int>(values_.size()); }
  int reserved_code() const { return cardinality(); }
  const std::vector<std::string>& values() const { return values_; }

 private:
  std::vector<std::string> values_;
  std::unordered_map<std::string, int> codes_;
};

inline const std::string kMissingCategory = "__missing__";

struct RowKey {
  std::string patient_id;
  std::string date;
  double time_minutes = 0.0;
};

struct EncodeDiagnostics {
  std::size_t unseen_values = 0;
  std::vector<std::string> warnings;
};

class FrameEncoder;

// Encoded design matrix. Column j of x is feature_names[j] with kinds[j].
struct FeatureFrame {
  Matrix x;
  std::vector<int> y;  // 0 = show, 1 = no-show
  std::vector<std::string> feature_names;
  std::vector<FeatureKind> kinds;
  std::shared_ptr<const FrameEncoder> encoder;  // null for hand-built frames
  std::vector<RowKey> row_keys;
  std::size_t num_classes = 2;

  std::size_t size() const { return x.rows(); }
  std::size_t num_features() const { return x.cols(); }
  FeatureFrame subset(std::span<const std::size_t> indices) const;
};

// Label encoding and median imputation fitted on a training table.
class FrameEncoder {
 public:
  struct Column {
    std::string name;
    FeatureKind kind = FeatureKind::kContinuous;
    CategoricalEncoder categories;  // categorical only
    double median = 0.0;            // continuous only
  };

  static FrameEncoder fit(const AppointmentTable& table);
  FeatureFrame transform(const AppointmentTable& table, EncodeDiagnostics* diag = nullptr) const;

  const std::vector<Column>& columns() const { return columns_; }
  std::vector<Column>& columns() { return columns_; }
  std::vector<std::string> feature_names() const;
  std::vector<FeatureKind> kinds() const;

 private:
  std::vector<Column> columns_;
};

// Fits a FrameEncoder on the table and applies it.
FeatureFrame encode(const AppointmentTable& table);

// The 24 predictive features in column order.
const std::vector<std::pair<std::string, FeatureKind>>& feature_schema();

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

SplitIndices split_indices(std::size_t n, const SplitSpec& spec);
std::pair<FeatureFrame, FeatureFrame> split(const FeatureFrame& frame, const SplitSpec& spec);

struct TrainTestData {
  FeatureFrame train;
  FeatureFrame test;
  EncodeDiagnostics test_diagnostics;
};

// Splits the rows of a derived table and encodes both parts with an encoder
// fitted on the training rows only.
TrainTestData make_train_test(const AppointmentTable& derived, const SplitSpec& spec);

// Label model of the synthetic generator. The logit is
//   logit(base_rate) + reason_weight * effect[reason] + type_weight * effect[type]
//   + history_weight * (prior no-show fraction - base_rate)
// (the history term is zero on a patient's first appointment), so only these
// three features carry signal. Every other column is drawn independently of
// the label; windspeed is the column documented as pure noise.
struct SyntheticConfig {
  double base_rate = 0.3;
  double reason_weight = 1.0;
  double type_weight = 1.0;
  double history_weight = 4.0;
  double cancel_rate = 0.05;
  std::size_t patients = 0;  // 0 = rows / 8
};

AppointmentTable generate_synthetic(std::size_t n, std::uint64_t seed,
                                    const SyntheticConfig& config = {});

}  // namespace mhasrf

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

#include "mhasrf/data_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "mhasrf/csv.hpp"

namespace mhasrf {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (text.starts_with('+')) text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

// "HH:MM" or integer minutes since midnight.
std::optional<double> parse_time(std::string_view text) {
  text = trim(text);
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    auto minutes = parse_number(text);
    if (minutes && *minutes >= 0.0 && *minutes < 24.0 * 60.0) return minutes;
    return std::nullopt;
  }
  auto hours = parse_number(text.substr(0, colon));
  auto minutes = parse_number(text.substr(colon + 1));
  if (!hours || !minutes || *hours < 0 || *hours > 23 || *minutes < 0 || *minutes >= 60 ||
      std::floor(*hours) != *hours || std::floor(*minutes) != *minutes) {
    return std::nullopt;
  }
  return *hours * 60.0 + *minutes;
}

std::string format_number(std::optional<double> value) {
  if (!value) return {};
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), *value);
  return std::string(buf, ptr);
}

std::string format_time(std::optional<double> minutes) {
  if (!minutes) return {};
  const int m = static_cast<int>(std::lround(*minutes));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", m / 60, m % 60);
  return buf;
}

const std::string& or_missing(const std::string& value) {
  return value.empty() ? kMissingCategory : value;
}

struct FeatureAccessor {
  std::string name;
  FeatureKind kind;
  std::function<std::optional<double>(const AppointmentRecord&)> continuous;
  std::function<std::string(const AppointmentRecord&)> categorical;
};

FeatureAccessor cont(std::string name,
                     std::function<std::optional<double>(const AppointmentRecord&)> f) {
  return {std::move(name), FeatureKind::kContinuous, std::move(f), {}};
}

FeatureAccessor cat(std::string name, std::function<std::string(const AppointmentRecord&)> f) {
  return {std::move(name), FeatureKind::kCategorical, {}, std::move(f)};
}

const std::vector<FeatureAccessor>& accessors() {
  using R = AppointmentRecord;
  static const std::vector<FeatureAccessor> table = {
      cont("age", [](const R& r) { return r.age; }),
      cat("language", [](const R& r) { return or_missing(r.language); }),
      cat("gender", [](const R& r) { return or_missing(r.gender); }),
      cat("visit_reason", [](const R& r) { return or_missing(r.visit_reason); }),
      cat("visit_type", [](const R& r) { return or_missing(r.visit_type); }),
      cont("appointment_time", [](const R& r) { return r.time_minutes; }),
      cat("day_of_week", [](const R& r) { return or_missing(r.day_of_week); }),
      cat("month", [](const R& r) { return or_missing(r.month); }),
      cat("week_of_month", [](const R& r) { return std::to_string(r.week_of_month); }),
      cat("season", [](const R& r) { return or_missing(r.season); }),
      cont("number_of_visits",
           [](const R& r) { return std::optional<double>(r.number_of_visits); }),
      cont("pct_no_show", [](const R& r) { return std::optional<double>(r.pct_no_show); }),
      cont("same_day_appointments",
           [](const R& r) { return std::optional<double>(r.same_day_appointments); }),
      cat("institute", [](const R& r) { return or_missing(r.institute); }),
      cat("center_name", [](const R& r) { return or_missing(r.center_name); }),
      cat("department_name", [](const R& r) { return or_missing(r.department_name); }),
      cat("provider_name", [](const R& r) { return or_missing(r.provider_name); }),
      cont("temperature", [](const R& r) { return r.temperature; }),
      cont("dew", [](const R& r) { return r.dew; }),
      cont("humidity", [](const R& r) { return r.humidity; }),
      cont("windspeed", [](const R& r) { return r.windspeed; }),
      cont("visibility", [](const R& r) { return r.visibility; }),
      cat("weather_condition", [](const R& r) { return or_missing(r.weather_condition); }),
      cat("air_quality", [](const R& r) { return or_missing(r.air_quality); }),
  };
  return table;
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(),
                                         values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

std::optional<AppointmentStatus> parse_status(std::string_view text) {
  std::string key;
  for (char c : lower(trim(text))) {
    if (c != ' ' && c != '-' && c != '_') key.push_back(c);
  }
  if (key.empty()) return AppointmentStatus::kUnknown;
  if (key == "show" || key == "attended") return AppointmentStatus::kShow;
  if (key == "noshow") return AppointmentStatus::kNoShow;
  if (key == "cancelled" || key == "canceled") return AppointmentStatus::kCancelled;
  return std::nullopt;
}

std::string_view status_name(AppointmentStatus status) {
  switch (status) {
    case AppointmentStatus::kShow:
      return "show";
    case AppointmentStatus::kNoShow:
      return "no-show";
    case AppointmentStatus::kCancelled:
      return "cancelled";
    case AppointmentStatus::kUnknown:
      break;
  }
  return "";
}

std::optional<Date> Date::parse(std::string_view text) {
  text = trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  auto field = [&](std::size_t pos, std::size_t len, int& out) {
    const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return ec == std::errc() && ptr == text.data() + pos + len;
  };
  if (!field(0, 4, y) || !field(5, 2, m) || !field(8, 2, d)) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date{y, m, d};
}

std::int64_t Date::serial() const {
  const std::chrono::sys_days days{std::chrono::year{year} /
                                   std::chrono::month{static_cast<unsigned>(month)} /
                                   std::chrono::day{static_cast<unsigned>(day)}};
  return days.time_since_epoch().count();
}

std::string Date::weekday_name() const {
  static const char* kNames[] = {"Sunday",   "Monday", "Tuesday", "Wednesday",
                                 "Thursday", "Friday", "Saturday"};
  const std::chrono::sys_days days{std::chrono::year{year} /
                                   std::chrono::month{static_cast<unsigned>(month)} /
                                   std::chrono::day{static_cast<unsigned>(day)}};
  return kNames[std::chrono::weekday{days}.c_encoding()];
}

std::string Date::month_name() const {
  static const char* kNames[] = {"January", "February", "March",     "April",
                                 "May",     "June",     "July",      "August",
                                 "September", "October", "November", "December"};
  return kNames[month - 1];
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

const std::vector<std::string>& raw_schema() {
  static const std::vector<std::string> columns = {
      "patient_id",      "age",           "gender",        "language",
      "visit_reason",    "visit_type",    "appointment_status", "appointment_date",
      "appointment_time", "day_of_week",  "month",         "institute",
      "center_name",     "department_name", "provider_name", "temperature",
      "dew",             "humidity",      "windspeed",     "visibility",
      "weather_condition", "air_quality"};
  return columns;
}

std::string CleaningReport::to_text() const {
  std::ostringstream out;
  out << "rows_read: " << rows_read << '\n'
      << "rows_kept: " << rows_kept << '\n'
      << "rows_dropped: " << dropped() << '\n'
      << "dropped_cancelled: " << cancelled << '\n'
      << "dropped_missing_patient_id: " << missing_patient_id << '\n'
      << "dropped_bad_status: " << bad_status << '\n'
      << "dropped_bad_date: " << bad_date << '\n'
      << "dropped_bad_age: " << bad_age << '\n'
      << "dropped_age_out_of_range: " << age_out_of_range << '\n'
      << "invalid_numeric_set_missing: " << invalid_numeric_set_missing << '\n'
      << "rules: cancelled rows dropped; rows without patient id, with an unknown status, "
         "an unparseable date or an unparseable age dropped; ages outside [0, 120] "
         "dropped; other unparseable numbers treated as missing\n";
  return out.str();
}

LoadResult parse_table(const std::vector<std::vector<std::string>>& rows,
                       const LoadOptions& options) {
  if (rows.empty()) throw DataError("zero usable rows");

  std::map<std::string, std::size_t> header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    header.emplace(lower(trim(rows[0][i])), i);
  }
  std::vector<std::size_t> column_of;
  for (const auto& name : raw_schema()) {
    auto it = header.find(name);
    if (it == header.end()) throw DataError("missing mandatory column '" + name + "'");
    column_of.push_back(it->second);
  }

  LoadResult result;
  CleaningReport& report = result.report;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ++report.rows_read;
    auto field = [&](std::size_t schema_index) -> std::string {
      const std::size_t c = column_of[schema_index];
      return c < row.size() ? std::string(trim(row[c])) : std::string();
    };
    auto number = [&](std::size_t schema_index) -> std::optional<double> {
      const std::string text = field(schema_index);
      if (text.empty()) return std::nullopt;
      auto value = parse_number(text);
      if (!value) ++report.invalid_numeric_set_missing;
      return value;
    };

    AppointmentRecord rec;
    rec.patient_id = field(0);
    if (rec.patient_id.empty()) {
      ++report.missing_patient_id;
      continue;
    }
    const auto status = parse_status(field(6));
    if (!status || (*status == AppointmentStatus::kUnknown && !options.allow_unknown_status)) {
      ++report.bad_status;
      continue;
    }
    if (*status == AppointmentStatus::kCancelled) {
      ++report.cancelled;
      continue;
    }
    rec.status = *status;
    const auto date = Date::parse(field(7));
    if (!date) {
      ++report.bad_date;
      continue;
    }
    rec.date = *date;
    const std::string age_text = field(1);
    if (!age_text.empty()) {
      rec.age = parse_number(age_text);
      if (!rec.age) {
        ++report.bad_age;
        continue;
      }
      if (*rec.age < 0.0 || *rec.age > 120.0) {
        ++report.age_out_of_range;
        continue;
      }
    }
    rec.gender = field(2);
    rec.language = field(3);
    rec.visit_reason = field(4);
    rec.visit_type = field(5);
    if (const std::string t = field(8); !t.empty()) {
      rec.time_minutes = parse_time(t);
      if (!rec.time_minutes) ++report.invalid_numeric_set_missing;
    }
    rec.day_of_week = field(9);
    if (rec.day_of_week.empty()) rec.day_of_week = rec.date.weekday_name();
    rec.month = field(10);
    if (rec.month.empty()) rec.month = rec.date.month_name();
    rec.institute = field(11);
    rec.center_name = field(12);
    rec.department_name = field(13);
    rec.provider_name = field(14);
    rec.temperature = number(15);
    rec.dew = number(16);
    rec.humidity = number(17);
    rec.windspeed = number(18);
    rec.visibility = number(19);
    rec.weather_condition = field(20);
    rec.air_quality = field(21);
    result.table.rows.push_back(std::move(rec));
  }
  report.rows_kept = result.table.rows.size();
  if (result.table.rows.empty()) throw DataError("zero usable rows");
  return result;
}

LoadResult load_table(const std::string& path, const LoadOptions& options) {
  return parse_table(csv::read_file(path), options);
}

void write_table_csv(const AppointmentTable& table, std::ostream& out) {
  csv::write_row(out, raw_schema());
  for (const auto& r : table.rows) {
    csv::write_row(out, {r.patient_id, format_number(r.age), r.gender, r.language,
                         r.visit_reason, r.visit_type, std::string(status_name(r.status)),
                         r.date.to_string(), format_time(r.time_minutes), r.day_of_week,
                         r.month, r.institute, r.center_name, r.department_name,
                         r.provider_name, format_number(r.temperature), format_number(r.dew),
                         format_number(r.humidity), format_number(r.windspeed),
                         format_number(r.visibility), r.weather_condition, r.air_quality});
  }
}

int week_of_month(int day_of_month) { return (day_of_month + 6) / 7; }

std::string season_of_month(int month) {
  switch (month) {
    case 12:
    case 1:
    case 2:
      return "winter";
    case 3:
    case 4:
    case 5:
      return "spring";
    case 6:
    case 7:
    case 8:
      return "summer";
    default:
      return "autumn";
  }
}

AppointmentTable derive_features(AppointmentTable table) {
  auto& rows = table.rows;
  // A missing time sorts first within its date.
  auto key = [&](std::size_t i) {
    return std::tuple<const std::string&, std::int64_t, double>(
        rows[i].patient_id, rows[i].date.serial(), rows[i].time_minutes.value_or(-1.0));
  };
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  std::size_t start = 0;
  while (start < order.size()) {
    const std::string& patient = rows[order[start]].patient_id;
    std::size_t end = start;
    while (end < order.size() && rows[order[end]].patient_id == patient) ++end;

    double visits = 0.0;
    double misses = 0.0;
    std::map<std::int64_t, double> per_day;
    for (std::size_t i = start; i < end; ++i) per_day[rows[order[i]].date.serial()] += 1.0;

    // Appointments sharing (date, time) are not earlier than one another.
    std::size_t g = start;
    while (g < end) {
      std::size_t h = g;
      while (h < end && key(order[h]) == key(order[g])) ++h;
      for (std::size_t i = g; i < h; ++i) {
        auto& r = rows[order[i]];
        r.number_of_visits = visits;
        r.pct_no_show = visits > 0.0 ? 100.0 * misses / visits : 0.0;
      }
      for (std::size_t i = g; i < h; ++i) {
        const auto& r = rows[order[i]];
        if (r.status == AppointmentStatus::kShow || r.status == AppointmentStatus::kNoShow) {
          visits += 1.0;
          if (r.status == AppointmentStatus::kNoShow) misses += 1.0;
        }
      }
      g = h;
    }
    for (std::size_t i = start; i < end; ++i) {
      auto& r = rows[order[i]];
      r.same_day_appointments = per_day[r.date.serial()];
    }
    start = end;
  }

  for (auto& r : rows) {
    r.week_of_month = week_of_month(r.date.day);
    r.season = season_of_month(r.date.month);
  }
  table.derived = true;
  return table;
}

CategoricalEncoder::CategoricalEncoder(std::vector<std::string> values) {
  for (auto& v : values) fit_value(v);
}

int CategoricalEncoder::fit_value(const std::string& value) {
  auto [it, inserted] = codes_.emplace(value, cardinality());
  if (inserted) values_.push_back(value);
  return it->second;
}

int CategoricalEncoder::encode(const std::string& value, bool* unseen) const {
  auto it = codes_.find(value);
  if (unseen) *unseen = it == codes_.end();
  return it == codes_.end() ? reserved_code() : it->second;
}

const std::string& CategoricalEncoder::decode(int code) const {
  static const std::string kUnseen = "__unseen__";
  if (code < 0 || code >= cardinality()) return kUnseen;
  return values_[static_cast<std::size_t>(code)];
}

const std::vector<std::pair<std::string, FeatureKind>>& feature_schema() {
  static const auto schema = [] {
    std::vector<std::pair<std::string, FeatureKind>> out;
    for (const auto& a : accessors()) out.emplace_back(a.name, a.kind);
    return out;
  }();
  return schema;
}

FeatureFrame FeatureFrame::subset(std::span<const std::size_t> indices) const {
  FeatureFrame out;
  out.x = x.select_rows(indices);
  out.feature_names = feature_names;
  out.kinds = kinds;
  out.encoder = encoder;
  out.num_classes = num_classes;
  out.y.reserve(indices.size());
  for (std::size_t i : indices) {
    out.y.push_back(y[i]);
    if (!row_keys.empty()) out.row_keys.push_back(row_keys[i]);
  }
  return out;
}

FrameEncoder FrameEncoder::fit(const AppointmentTable& table) {
  if (!table.derived) throw DataError("encode: derived columns missing; run derive_features");
  FrameEncoder enc;
  for (const auto& a : accessors()) {
    Column col;
    col.name = a.name;
    col.kind = a.kind;
    if (a.kind == FeatureKind::kCategorical) {
      for (const auto& r : table.rows) col.categories.fit_value(a.categorical(r));
    } else {
      std::vector<double> present;
      present.reserve(table.rows.size());
      for (const auto& r : table.rows) {
        if (auto v = a.continuous(r)) present.push_back(*v);
      }
      col.median = median_of(std::move(present));
    }
    enc.columns_.push_back(std::move(col));
  }
  return enc;
}

FeatureFrame FrameEncoder::transform(const AppointmentTable& table,
                                     EncodeDiagnostics* diag) const {
  if (!table.derived) throw DataError("encode: derived columns missing; run derive_features");
  const auto& acc = accessors();
  if (columns_.size() != acc.size()) throw DataError("encode: encoder column count mismatch");

  FeatureFrame frame;
  frame.x = Matrix(table.rows.size(), columns_.size());
  frame.feature_names = feature_names();
  frame.kinds = kinds();
  frame.y.reserve(table.rows.size());
  frame.row_keys.reserve(table.rows.size());
  std::set<std::pair<std::size_t, std::string>> reported;

  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const Column& col = columns_[j];
      if (col.kind == FeatureKind::kCategorical) {
        const std::string value = acc[j].categorical(r);
        bool unseen = false;
        frame.x(i, j) = col.categories.encode(value, &unseen);
        if (unseen && diag) {
          ++diag->unseen_values;
          if (reported.emplace(j, value).second) {
            diag->warnings.push_back("column '" + col.name + "': unseen value '" + value +
                                     "' mapped to reserved code " +
                                     std::to_string(col.categories.reserved_code()));
          }
        }
      } else {
        frame.x(i, j) = acc[j].continuous(r).value_or(col.median);
      }
    }
    frame.y.push_back(r.status == AppointmentStatus::kNoShow ? 1 : 0);
    frame.row_keys.push_back({r.patient_id, r.date.to_string(), r.time_minutes.value_or(-1.0)});
  }
  frame.encoder = std::make_shared<const FrameEncoder>(*this);
  return frame;
}

std::vector<std::string> FrameEncoder::feature_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

std::vector<FeatureKind> FrameEncoder::kinds() const {
  std::vector<FeatureKind> out;
  for (const auto& c : columns_) out.push_back(c.kind);
  return out;
}

FeatureFrame encode(const AppointmentTable& table) {
  return FrameEncoder::fit(table).transform(table);
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw UsageError("split: train_fraction must lie in (0, 1)");
  }
  if (n < 2) throw DataError("split: need at least 2 rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(spec.seed, 0x73706c6974);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * double(n)));
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return out;
}

std::pair<FeatureFrame, FeatureFrame> split(const FeatureFrame& frame, const SplitSpec& spec) {
  const auto idx = split_indices(frame.size(), spec);
  return {frame.subset(idx.train), frame.subset(idx.test)};
}

TrainTestData make_train_test(const AppointmentTable& derived, const SplitSpec& spec) {
  const auto idx = split_indices(derived.rows.size(), spec);
  auto pick = [&](const std::vector<std::size_t>& rows) {
    AppointmentTable part;
    part.derived = derived.derived;
    part.rows.reserve(rows.size());
    for (auto i : rows) part.rows.push_back(derived.rows[i]);
    return part;
  };
  const AppointmentTable train_rows = pick(idx.train);
  const FrameEncoder encoder = FrameEncoder::fit(train_rows);
  TrainTestData out;
  out.train = encoder.transform(train_rows);
  out.test = encoder.transform(pick(idx.test), &out.test_diagnostics);
  return out;
}

}  // namespace mhasrf

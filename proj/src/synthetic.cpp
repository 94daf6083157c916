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

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string_view>
#include <tuple>

#include "mhasrf/data_pipeline.hpp"

namespace mhasrf {
namespace {

struct Level {
  std::string_view name;
  double effect;
};

// Ground-truth effects on the no-show logit.
constexpr std::array<Level, 6> kVisitReasons = {{{"Routine Checkup", -8.0},
                                                 {"Follow-up", -6.0},
                                                 {"Prescription Refill", -4.0},
                                                 {"Lab Results", 4.0},
                                                 {"New Complaint", 6.0},
                                                 {"Screening", 8.0}}};
constexpr std::array<Level, 3> kVisitTypes = {
    {{"New Visit", 2.0}, {"Consult Visit", 0.0}, {"Procedure Visit", -2.0}}};

constexpr std::array<std::string_view, 5> kLanguages = {"Arabic", "English", "Urdu", "Hindi",
                                                        "Tagalog"};
constexpr std::array<double, 5> kLanguageWeights = {0.5, 0.25, 0.1, 0.1, 0.05};
constexpr std::array<std::string_view, 8> kDepartments = {
    "Dentistry",  "Gynecology", "Urology",     "Dermatology",
    "Cardiology", "Pediatrics", "Orthopedics", "Ophthalmology"};
constexpr std::array<std::string_view, 4> kWeather = {"Clear", "Cloudy", "Dusty", "Rain"};
constexpr std::array<double, 4> kWeatherWeights = {0.6, 0.2, 0.15, 0.05};
constexpr std::array<std::string_view, 4> kAirQuality = {"Good", "Moderate", "Unhealthy",
                                                         "Hazardous"};
constexpr std::array<double, 4> kAirWeights = {0.45, 0.35, 0.15, 0.05};
constexpr int kProviders = 40;
constexpr int kCenters = 6;
constexpr int kInstitutes = 3;

template <std::size_t N>
std::size_t pick(std::mt19937_64& rng, const std::array<double, N>& weights) {
  return std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng);
}

std::size_t pick_uniform(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double round_to(double value, double step) { return std::round(value / step) * step; }

std::string numbered(const char* prefix, int width, std::size_t value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, value);
  return buf;
}

struct Patient {
  std::string id;
  double age;
  std::string gender;
  std::string language;
};

}  // namespace

AppointmentTable generate_synthetic(std::size_t n, std::uint64_t seed,
                                    const SyntheticConfig& config) {
  auto rng = make_rng(seed, 0x73796e7468);
  const std::size_t num_patients =
      config.patients > 0 ? config.patients : std::max<std::size_t>(1, n / 8);

  std::vector<Patient> patients;
  patients.reserve(num_patients);
  for (std::size_t p = 0; p < num_patients; ++p) {
    Patient pat;
    pat.id = numbered("P", 6, p + 1);
    pat.age = static_cast<double>(std::uniform_int_distribution<int>(1, 90)(rng));
    pat.gender = std::bernoulli_distribution(0.55)(rng) ? "F" : "M";
    pat.language = std::string(kLanguages[pick(rng, kLanguageWeights)]);
    patients.push_back(std::move(pat));
  }

  AppointmentTable table;
  table.rows.resize(n);
  std::vector<std::size_t> reason_of(n), type_of(n);
  const Date jan1{2018, 1, 1};
  const auto first_day = jan1.serial();

  for (std::size_t i = 0; i < n; ++i) {
    auto& r = table.rows[i];
    const Patient& pat = patients[pick_uniform(rng, num_patients)];
    r.patient_id = pat.id;
    r.age = pat.age;
    r.gender = pat.gender;
    r.language = pat.language;

    reason_of[i] = pick_uniform(rng, kVisitReasons.size());
    type_of[i] = pick_uniform(rng, kVisitTypes.size());
    r.visit_reason = std::string(kVisitReasons[reason_of[i]].name);
    r.visit_type = std::string(kVisitTypes[type_of[i]].name);

    const auto day_index = static_cast<std::int64_t>(pick_uniform(rng, 365));
    const std::chrono::sys_days day{std::chrono::days{first_day + day_index}};
    const std::chrono::year_month_day ymd{day};
    r.date = Date{static_cast<int>(ymd.year()), static_cast<int>(unsigned(ymd.month())),
                  static_cast<int>(unsigned(ymd.day()))};
    r.time_minutes = 8.0 * 60.0 + 15.0 * static_cast<double>(pick_uniform(rng, 36));
    r.day_of_week = r.date.weekday_name();
    r.month = r.date.month_name();

    const std::size_t provider = pick_uniform(rng, kProviders);
    const std::size_t center = provider % kCenters;
    r.provider_name = numbered("Dr. ", 3, provider + 1);
    r.department_name = std::string(kDepartments[provider % kDepartments.size()]);
    r.center_name = numbered("Center ", 1, center + 1);
    r.institute = numbered("Institute ", 1, center % kInstitutes + 1);

    const double seasonal = 28.0 - 12.0 * std::cos(2.0 * M_PI * (r.date.month - 1) / 12.0);
    const double temperature = std::normal_distribution<double>(seasonal, 3.0)(rng);
    r.temperature = round_to(temperature, 0.1);
    r.dew = round_to(temperature - uniform(rng, 2.0, 15.0), 0.1);
    r.humidity = round_to(uniform(rng, 10.0, 90.0), 0.1);
    r.windspeed = round_to(uniform(rng, 0.0, 40.0), 0.1);
    r.visibility = round_to(uniform(rng, 2.0, 10.0), 0.1);
    r.weather_condition = std::string(kWeather[pick(rng, kWeatherWeights)]);
    r.air_quality = std::string(kAirQuality[pick(rng, kAirWeights)]);

    r.status = std::bernoulli_distribution(config.cancel_rate)(rng) ? AppointmentStatus::kCancelled
                                                                    : AppointmentStatus::kUnknown;
  }

  // Outcomes are drawn in per-patient chronological order so that the label
  // can depend on the same history feature the pipeline later derives.
  auto key = [&](std::size_t i) {
    const auto& r = table.rows[i];
    return std::tuple<const std::string&, std::int64_t, double>(r.patient_id, r.date.serial(),
                                                                *r.time_minutes);
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  const double base_logit = std::log(config.base_rate / (1.0 - config.base_rate));
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start;
    while (end < n && table.rows[order[end]].patient_id == table.rows[order[start]].patient_id) {
      ++end;
    }
    double visits = 0.0;
    double misses = 0.0;
    std::size_t g = start;
    while (g < end) {
      std::size_t h = g;
      while (h < end && key(order[h]) == key(order[g])) ++h;
      const double history =
          visits > 0.0 ? config.history_weight * (misses / visits - config.base_rate) : 0.0;
      for (std::size_t i = g; i < h; ++i) {
        auto& r = table.rows[order[i]];
        if (r.status == AppointmentStatus::kCancelled) continue;
        const double logit = base_logit +
                             config.reason_weight * kVisitReasons[reason_of[order[i]]].effect +
                             config.type_weight * kVisitTypes[type_of[order[i]]].effect + history;
        const bool no_show = std::bernoulli_distribution(sigmoid(logit))(rng);
        r.status = no_show ? AppointmentStatus::kNoShow : AppointmentStatus::kShow;
      }
      for (std::size_t i = g; i < h; ++i) {
        const auto& r = table.rows[order[i]];
        if (r.status == AppointmentStatus::kCancelled) continue;
        visits += 1.0;
        if (r.status == AppointmentStatus::kNoShow) misses += 1.0;
      }
      g = h;
    }
    start = end;
  }
  return table;
}

}  // namespace mhasrf

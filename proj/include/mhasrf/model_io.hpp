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

#include <string>
#include <string_view>

#include "mhasrf/trainer.hpp"

namespace mhasrf {

inline constexpr int kModelFormatVersion = 1;
inline constexpr std::string_view kModelFormatName = "mhasrf-model";

// FNV-1a 64-bit, lowercase hex, 16 digits.
std::string fnv1a64_hex(std::string_view bytes);

// Line 1: {"checksum":"fnv1a64:<hex>","format":"mhasrf-model","format_version":1}
// Rest:   JSON payload; the checksum covers exactly these bytes.
std::string serialize_model(const Model& model);
// FormatError on corruption, checksum mismatch or an unsupported version.
Model deserialize_model(const std::string& text);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

// The checksum field of a serialized model file.
std::string model_checksum(const std::string& file_text);

}  // namespace mhasrf

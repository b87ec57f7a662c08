/*
 * Copyright 2026 The factorlab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "factorlab/nn/nn.hpp"

namespace factorlab {

inline constexpr int kCheckpointFormatVersion = 1;

// Single-file checkpoint: magic line, length-prefixed JSON metadata header
// (format_version is always present), then raw parameter blobs.
void write_checkpoint(const std::filesystem::path& path, nlohmann::json metadata,
                      std::span<nn::Parameter* const> params);
nlohmann::json read_checkpoint_metadata(const std::filesystem::path& path);
nlohmann::json read_checkpoint(const std::filesystem::path& path, std::span<nn::Parameter* const> params);

// 64-bit FNV-1a of a canonical JSON dump, hex encoded.
std::string config_hash(const nlohmann::json& config);

}  // namespace factorlab

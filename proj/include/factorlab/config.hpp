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

// Experiment configuration: one JSON document, every field optional, with
// dotted-path overrides ("classifier.epochs=3").

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "factorlab/factorworld.hpp"
#include "factorlab/infogan.hpp"
#include "factorlab/interventions.hpp"
#include "factorlab/task.hpp"

namespace factorlab {

struct OracleBinding {
  int code = 0;
  std::string factor;
};

struct ExperimentConfig {
  WorldSpec world = default_world();
  uint64_t seed = 0;
  size_t train_size = 2000;
  size_t val_size = 1000;
  size_t test_size = 2000;

  // "oracle" binds codes straight to render factors; "infogan" trains one.
  std::string generator = "oracle";
  std::vector<OracleBinding> oracle_mapping{{0, "size"}, {3, "brightness"}, {6, "hue"}};
  InfoGanConfig infogan;

  ClassifierConfig classifier = default_classifier();
  // Weights and multiplier shared by every run; kind and code come from the
  // grid.
  InterventionConfig intervention;
  std::vector<InterventionKind> kinds{InterventionKind::kDA, InterventionKind::kAA,
                                      InterventionKind::kSC};
  // Codes to intervene on; empty means the `top_codes` highest-ranked.
  std::vector<int> codes;
  int top_codes = 2;

  double eval_multiplier = 10.0;
  int n_bins = 10;
  size_t min_count = 20;
  // Real factors for the generalization and ACAI settings. Names of world
  // factors use their range for bin edges; "lab_brightness" is measured from
  // pixels with edges frozen from the validation split.
  std::vector<std::string> real_factors{"brightness"};
  bool acai = true;

  int traversal_steps = 8;
  int traversal_images = 5;
  int jobs = 1;

  static WorldSpec default_world();
  static ClassifierConfig default_classifier();
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Sets `dotted.key` to `value`, parsed as JSON when it parses and kept as a
// string otherwise. Array elements are addressed by index ("a.0.b").
void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value);
// "key=value" form.
void apply_override(nlohmann::json& doc, const std::string& assignment);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

}  // namespace factorlab

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

#include "factorlab/config.hpp"

#include <fstream>
#include <set>

#include "factorlab/error.hpp"

namespace factorlab {

WorldSpec ExperimentConfig::default_world() {
  WorldSpec spec = WorldSpec::standard();
  spec.factors[static_cast<size_t>(spec.factor_index("brightness"))].sensitivity = 0.8;
  return spec;
}

ClassifierConfig ExperimentConfig::default_classifier() {
  ClassifierConfig c;
  c.widths = {8, 16, 32, 32};
  c.epochs = 10;
  c.batch_size = 64;
  c.learning_rate = 1e-3;
  return c;
}

void ExperimentConfig::validate() const {
  world.validate();
  if (train_size == 0 || val_size == 0 || test_size == 0)
    throw InputError("config: train_size, val_size and test_size must be positive");
  if (generator != "oracle" && generator != "infogan")
    throw InputError("config: generator must be 'oracle' or 'infogan', got '" + generator + "'");
  if (generator == "oracle") {
    std::set<int> seen;
    for (const auto& b : oracle_mapping) {
      world.factor_index(b.factor);
      if (!seen.insert(b.code).second) throw InputError("config: oracle code bound twice");
    }
  } else {
    infogan.validate();
  }
  classifier.validate();
  const int d_c = generator == "oracle" ? kDefaultCodeCount : infogan.d_c;
  InterventionConfig probe = intervention;
  probe.factor_index = 0;
  probe.validate(d_c);
  for (int c : codes)
    if (c < 0 || c >= d_c) throw InputError("config: code " + std::to_string(c) + " out of range");
  if (codes.empty() && (top_codes < 1 || top_codes > d_c))
    throw InputError("config: top_codes must lie in [1, d_c]");
  if (kinds.empty()) throw InputError("config: intervention grid is empty");
  if (!(eval_multiplier > 0)) throw InputError("config: eval_multiplier must be > 0");
  if (n_bins < 2) throw InputError("config: n_bins must be >= 2");
  for (const auto& f : real_factors)
    if (f != "lab_brightness") world.factor_index(f);
  if (jobs < 1) throw InputError("config: jobs must be >= 1");
  if (traversal_steps < 2 || traversal_images < 1) throw InputError("config: traversal grid too small");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json mapping = nlohmann::json::array();
  for (const auto& b : c.oracle_mapping) mapping.push_back({{"code", b.code}, {"factor", b.factor}});
  std::vector<std::string> kinds;
  for (auto k : c.kinds) kinds.push_back(to_string(k));
  nlohmann::json intervention = c.intervention;
  intervention.erase("kind");
  intervention.erase("factor_index");
  j = nlohmann::json{{"world", c.world},
                     {"seed", c.seed},
                     {"train_size", c.train_size},
                     {"val_size", c.val_size},
                     {"test_size", c.test_size},
                     {"generator", c.generator},
                     {"oracle_mapping", mapping},
                     {"infogan", c.infogan},
                     {"classifier", c.classifier},
                     {"intervention", intervention},
                     {"kinds", kinds},
                     {"codes", c.codes},
                     {"top_codes", c.top_codes},
                     {"eval_multiplier", c.eval_multiplier},
                     {"n_bins", c.n_bins},
                     {"min_count", c.min_count},
                     {"real_factors", c.real_factors},
                     {"acai", c.acai},
                     {"traversal_steps", c.traversal_steps},
                     {"traversal_images", c.traversal_images},
                     {"jobs", c.jobs}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::set<std::string> known{
      "world",           "seed",       "train_size",   "val_size",        "test_size",
      "generator",       "oracle_mapping", "infogan",  "classifier",      "intervention",
      "kinds",           "codes",      "top_codes",    "eval_multiplier", "n_bins",
      "min_count",       "real_factors", "acai",       "traversal_steps", "traversal_images",
      "jobs"};
  if (!j.is_object()) throw InputError("config: top level must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw InputError("config: unknown key '" + key + "'");

  ExperimentConfig d;
  c.world = j.contains("world") ? j.at("world").get<WorldSpec>() : d.world;
  c.seed = j.value("seed", d.seed);
  c.train_size = j.value("train_size", d.train_size);
  c.val_size = j.value("val_size", d.val_size);
  c.test_size = j.value("test_size", d.test_size);
  c.generator = j.value("generator", d.generator);
  c.oracle_mapping = d.oracle_mapping;
  if (j.contains("oracle_mapping")) {
    c.oracle_mapping.clear();
    for (const auto& b : j.at("oracle_mapping"))
      c.oracle_mapping.push_back({b.at("code").get<int>(), b.at("factor").get<std::string>()});
  }
  c.infogan = j.contains("infogan") ? j.at("infogan").get<InfoGanConfig>() : d.infogan;
  c.classifier = d.classifier;
  if (j.contains("classifier")) {
    // Missing classifier keys keep the experiment defaults.
    nlohmann::json merged = d.classifier;
    merged.update(j.at("classifier"));
    c.classifier = merged.get<ClassifierConfig>();
  }
  c.intervention = j.contains("intervention") ? j.at("intervention").get<InterventionConfig>() : d.intervention;
  c.kinds = d.kinds;
  if (j.contains("kinds")) {
    c.kinds.clear();
    for (const auto& k : j.at("kinds")) c.kinds.push_back(parse_intervention_kind(k.get<std::string>()));
  }
  c.codes = j.value("codes", d.codes);
  c.top_codes = j.value("top_codes", d.top_codes);
  c.eval_multiplier = j.value("eval_multiplier", d.eval_multiplier);
  c.n_bins = j.value("n_bins", d.n_bins);
  c.min_count = j.value("min_count", d.min_count);
  c.real_factors = j.value("real_factors", d.real_factors);
  c.acai = j.value("acai", d.acai);
  c.traversal_steps = j.value("traversal_steps", d.traversal_steps);
  c.traversal_images = j.value("traversal_images", d.traversal_images);
  c.jobs = j.value("jobs", d.jobs);
}

void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) throw InputError("override: empty key");
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;

  nlohmann::json* node = &doc;
  size_t start = 0;
  while (true) {
    const size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw InputError("override: malformed key '" + dotted_key + "'");
    nlohmann::json* next = nullptr;
    if (node->is_array()) {
      size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (const std::exception&) {
        throw InputError("override: '" + part + "' is not an array index in '" + dotted_key + "'");
      }
      if (idx >= node->size()) throw InputError("override: index " + part + " out of range in '" + dotted_key + "'");
      next = &(*node)[idx];
    } else {
      if (node->is_null()) *node = nlohmann::json::object();
      if (!node->is_object()) throw InputError("override: '" + dotted_key + "' descends into a scalar");
      next = &(*node)[part];
    }
    if (dot == std::string::npos) {
      *next = parsed;
      return;
    }
    node = next;
    start = dot + 1;
  }
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos) throw InputError("override '" + assignment + "' is not key=value");
  apply_override(doc, assignment.substr(0, eq), assignment.substr(eq + 1));
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << doc.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides) {
  nlohmann::json doc = path.empty() ? nlohmann::json(ExperimentConfig{}) : read_json_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  ExperimentConfig config;
  try {
    config = doc.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  config.validate();
  return config;
}

}  // namespace factorlab

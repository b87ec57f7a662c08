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

// Experiment orchestration: sensitivity scan over generator codes, the
// unsupervised, generalization and ACAI settings, and the resumable
// end-to-end pipeline.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "factorlab/config.hpp"
#include "factorlab/factorworld.hpp"
#include "factorlab/generative.hpp"
#include "factorlab/interventions.hpp"
#include "factorlab/metrics.hpp"
#include "factorlab/task.hpp"

namespace factorlab {

inline const std::string kSettingUnsupervised = "Unsup. Invariance";
inline const std::string kSettingGeneralization = "Factor Generalization";
inline const std::string kSettingSemisupervised = "Semisup. Invariance";

// ---------------------------------------------------------------- scan

struct SensitivityEntry {
  int code = 0;
  MetricBundle metrics;
};

void to_json(nlohmann::json& j, const SensitivityEntry& e);
void from_json(const nlohmann::json& j, SensitivityEntry& e);

// Synthetic evaluation set size: ceil(multiplier * test_size).
size_t sensitivity_eval_size(size_t test_size, double multiplier = 10.0);

// Codes of the synthetic evaluation set: every c_i ~ U(-2, 2), labels
// stratified to the test distribution. Images are regenerated on demand so
// the set is never held in memory.
std::vector<LatentCode> synthetic_eval_codes(const GeneratorInfo& info, std::span<const double> label_dist,
                                             size_t test_size, uint64_t seed, double multiplier = 10.0);

// Predicted labels of each classifier on G(codes), generated in chunks.
std::vector<std::vector<int>> predict_synthetic(std::span<const Classifier* const> classifiers,
                                                const Generator& gen, std::span<const LatentCode> codes);

// Bins of c_i (equal width over [-2, 2]) for each code.
BinPartition code_partition(std::span<const LatentCode> codes, int i, int n_bins);

// Baseline bundle per code, sorted by descending Acc_gap (ties: lower code).
std::vector<SensitivityEntry> sensitivity_scan(const Classifier& baseline, const Generator& gen,
                                               std::span<const double> label_dist, size_t test_size,
                                               uint64_t seed, int n_bins = 10,
                                               size_t min_count = kDefaultMinBinCount,
                                               double multiplier = 10.0);
std::vector<SensitivityEntry> rank_codes(std::span<const int> predictions, std::span<const LatentCode> codes,
                                         int d_c, int n_bins = 10, size_t min_count = kDefaultMinBinCount);

// ---------------------------------------------------------------- rows

struct ReportRow {
  std::string setting;
  std::string intervention;  // "Base", "DA-3", "ACAI (DA-3)"
  std::string factor;        // "C4", "brightness"
  MetricBundle metrics;
  double cai_05 = 0.0;
  double cai_075 = 0.0;
};

void to_json(nlohmann::json& j, const ReportRow& r);
void from_json(const nlohmann::json& j, ReportRow& r);

struct NamedClassifier {
  std::string name;
  const Classifier* classifier = nullptr;
};

// "C4" for code index 3.
std::string code_label(int i);

// Base row followed by one row per intervened classifier, all on the
// synthetic partition by c_i; CAI against the Base row.
std::vector<ReportRow> unsupervised_setting(const Classifier& baseline,
                                            std::span<const NamedClassifier> intervened, const Generator& gen,
                                            std::span<const LatentCode> eval_codes, int i, int n_bins = 10,
                                            size_t min_count = kDefaultMinBinCount);
// Same from precomputed predictions; names[0] and predictions[0] are the
// baseline.
std::vector<ReportRow> rows_from_predictions(const std::string& setting, const std::string& factor,
                                             std::span<const std::string> names,
                                             std::span<const std::vector<int>> predictions,
                                             std::span<const int> labels, const BinPartition& partition,
                                             size_t min_count = kDefaultMinBinCount);

// Rows on a real labeled set binned by a fixed partition, which every
// classifier shares.
std::vector<ReportRow> generalization_setting(const Classifier& baseline,
                                              std::span<const NamedClassifier> intervened,
                                              std::span<const Sample> test, const BinPartition& partition,
                                              const std::string& factor,
                                              size_t min_count = kDefaultMinBinCount);

// ---------------------------------------------------------------- real factors

struct RealFactorBinning {
  std::string factor;
  Interval range;
  int n_bins = 10;
};

// Per-sample value of a world factor or of "lab_brightness" (mean L*).
std::vector<double> real_factor_values(std::span<const Sample> samples, const WorldSpec& spec,
                                       const std::string& factor);
// World factors bin over their declared range; measured factors over the
// validation min/max, which is then frozen for every other split.
RealFactorBinning real_factor_binning(const WorldSpec& spec, const std::string& factor,
                                      std::span<const Sample> validation, int n_bins = 10);
BinPartition real_factor_partition(std::span<const Sample> samples, const WorldSpec& spec,
                                   const RealFactorBinning& binning);

// ---------------------------------------------------------------- ACAI

struct AcaiCandidate {
  int code = 0;
  InterventionKind kind = InterventionKind::kDA;
  MetricBundle validation;
};

struct AcaiSelection {
  size_t index = 0;
  int code = 0;
  InterventionKind kind = InterventionKind::kDA;
  std::string label;  // "ACAI (DA-4)"
  std::vector<double> validation_cai_05;  // one per candidate, grid order
};

void to_json(nlohmann::json& j, const AcaiSelection& s);
void from_json(const nlohmann::json& j, AcaiSelection& s);

std::string acai_label(InterventionKind kind, int code);

// Argmax of validation CAI_0.5 against the validation baseline. Ties go to
// higher validation accuracy, then lower code, then kind order DA, AA, SC.
AcaiSelection acai_select(std::span<const AcaiCandidate> candidates, const MetricBundle& validation_baseline);

// ---------------------------------------------------------------- pipeline

struct EvalReport {
  nlohmann::json config;
  std::vector<SensitivityEntry> sensitivity;
  std::vector<int> examined_codes;
  std::vector<ReportRow> rows;
  // Keyed by real factor.
  std::map<std::string, AcaiSelection> acai;
  // Per real factor: validation baseline and candidate bundles.
  nlohmann::json acai_grid = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

// Pipeline stages in order. Each writes into its own subdirectory of the
// output root and is skipped on rerun when its completion marker matches the
// current config hash.
enum class Stage { kData, kGenerator, kBaseline, kScan, kInterventions, kEvaluate, kReport };
std::string to_string(Stage stage);

// A stage failure, tagged with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& what, bool input_error)
      : std::runtime_error(to_string(stage) + ": " + what), stage_(stage), input_error_(input_error) {}
  Stage stage() const { return stage_; }
  bool input_error() const { return input_error_; }

 private:
  Stage stage_;
  bool input_error_;
};

struct RunOptions {
  // Last stage to execute (inclusive).
  Stage until = Stage::kReport;
  // Log sink for progress lines; silent when empty.
  std::function<void(const std::string&)> log;
};

class Experiment {
 public:
  Experiment(ExperimentConfig config, std::filesystem::path out_dir);

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& out_dir() const { return out_; }
  std::string config_hash() const { return hash_; }

  EvalReport run(const RunOptions& options = {});

  // Individual stages; each loads its prerequisites from disk when needed.
  void data();
  void generator();
  void baseline();
  void scan();
  void interventions();
  EvalReport evaluate();
  void report(const EvalReport& report);

  bool stage_done(Stage stage) const;

  // Artifact locations.
  std::filesystem::path split_dir(const std::string& split) const;
  std::filesystem::path generator_path() const;
  std::filesystem::path baseline_path() const;
  std::filesystem::path intervention_path(InterventionKind kind, int code) const;
  std::filesystem::path report_dir() const;

  // Codes chosen for interventions: config.codes, or the top-ranked ones.
  std::vector<int> examined_codes() const;

 private:
  void mark_done(Stage stage, const nlohmann::json& extra = {}) const;
  const std::vector<Sample>& split(const std::string& name);
  GeneratorHandle load_gen();
  std::vector<double> test_label_dist();
  std::vector<SensitivityEntry> load_scan() const;
  void log(const std::string& line) const;

  ExperimentConfig config_;
  std::filesystem::path out_;
  std::string hash_;
  std::function<void(const std::string&)> log_;
  std::map<std::string, std::vector<Sample>> splits_;
  GeneratorHandle gen_;
};

// Train/val/test index sets must be pairwise disjoint.
void check_disjoint(std::span<const std::vector<size_t>> index_sets);

// Runs `count` independent jobs on up to `jobs` threads; rethrows the first
// failure after all jobs finish.
void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& body);

}  // namespace factorlab

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

// Report emission: results tables (markdown and CSV), the sorted
// sensitive-factor table and latent traversal grids.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "factorlab/generative.hpp"
#include "factorlab/harness.hpp"

namespace factorlab {

struct ReportTable {
  std::string name;  // file stem, e.g. "table_C4_brightness"
  std::vector<ReportRow> rows;
};

// One table per (examined code, real factor): unsupervised rows for that
// code, generalization rows for its interventions, then the ACAI row.
std::vector<ReportTable> report_tables(const EvalReport& report);

inline const std::string kTableCsvHeader = "Setting,Interv.,Acc,Acc_gap,Acc_min,CAI_0.5,CAI_0.75";

// Full-precision CSV; the header is kTableCsvHeader.
std::string table_csv(std::span<const ReportRow> rows);
// Two-decimal markdown; the best value of each column within a setting is
// bold (highest Acc, Acc_min and CAI, lowest Acc_gap).
std::string table_markdown(std::span<const ReportRow> rows);

struct CsvRow {
  std::string setting;
  std::string intervention;
  double acc = 0.0, acc_gap = 0.0, acc_min = 0.0, cai_05 = 0.0, cai_075 = 0.0;
};
std::vector<CsvRow> read_table_csv(const std::filesystem::path& path);

// Sensitivity ranking with the baseline and each intervention's unsupervised
// metrics per code, codes as columns in ranked order.
std::string sensitivity_markdown(const EvalReport& report);
std::string sensitivity_csv(const EvalReport& report);

// Writes report.json, every table as .md and .csv, sensitivity.{md,csv},
// and traversal_C<i>.png per examined code when `gen` is given. An empty
// report still emits what it can and warns on stderr. Returns written paths.
std::vector<std::filesystem::path> emit_report(const EvalReport& report, const std::filesystem::path& dir,
                                               const Generator* gen = nullptr, int traversal_steps = 8,
                                               int traversal_images = 5, uint64_t traversal_seed = 0);

// Reads report.json from a directory (or the file itself).
EvalReport load_report(const std::filesystem::path& path);

}  // namespace factorlab

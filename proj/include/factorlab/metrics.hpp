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

// Utility and invariance metrics, all in percentage points.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "factorlab/factorworld.hpp"
#include "factorlab/image.hpp"

namespace factorlab {

class Classifier;

inline constexpr size_t kDefaultMinBinCount = 20;

struct MetricBundle {
  double acc = 0.0;
  double acc_gap = 0.0;
  double acc_min = 0.0;
  std::vector<double> per_bin_acc;
  std::vector<size_t> bin_counts;
  // Bins below the minimum count; they are left out of gap and min.
  std::vector<bool> excluded;

  std::vector<double> included_bin_acc() const;
};

void to_json(nlohmann::json& j, const MetricBundle& m);
void from_json(const nlohmann::json& j, MetricBundle& m);

// Flat CSV row: acc,acc_gap,acc_min,n_bins,bin_acc_0..,bin_count_0..
std::string metric_csv_header(int n_bins);
std::string to_csv_row(const MetricBundle& m);

// Overall and per-bin accuracy. Bins holding fewer than `min_count` samples
// are flagged excluded; per_bin_acc is 0 for empty bins.
MetricBundle per_bin_accuracy(std::span<const int> predictions, std::span<const int> labels,
                              const BinPartition& partition, size_t min_count = kDefaultMinBinCount);

// max - min over the given bin accuracies.
double acc_gap(std::span<const double> per_bin);

struct AccuracyPair {
  double acc = 0.0;
  double acc_gap = 0.0;
};

struct CaiInputs {
  AccuracyPair baseline;
  AccuracyPair intervened;
  double lambda = 0.5;
};

// lambda * (gap_base - gap_new) + (1 - lambda) * (acc_new - acc_base).
double cai(const CaiInputs& inputs);
double cai(const MetricBundle& baseline, const MetricBundle& intervened, double lambda);

// Full bundle (acc, per-bin, gap, min) from precomputed predictions.
MetricBundle evaluate_predictions(std::span<const int> predictions, std::span<const int> labels,
                                  const BinPartition& partition, size_t min_count = kDefaultMinBinCount);

MetricBundle evaluate(const Classifier& classifier, std::span<const Image> images,
                      std::span<const int> labels, const BinPartition& partition,
                      size_t min_count = kDefaultMinBinCount);

}  // namespace factorlab

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

#include "factorlab/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "factorlab/error.hpp"
#include "factorlab/task.hpp"

namespace factorlab {

std::vector<double> MetricBundle::included_bin_acc() const {
  std::vector<double> out;
  for (size_t b = 0; b < per_bin_acc.size(); ++b)
    if (b >= excluded.size() || !excluded[b]) out.push_back(per_bin_acc[b]);
  return out;
}

void to_json(nlohmann::json& j, const MetricBundle& m) {
  std::vector<int> excluded(m.excluded.begin(), m.excluded.end());
  j = nlohmann::json{{"acc", m.acc},
                     {"acc_gap", m.acc_gap},
                     {"acc_min", m.acc_min},
                     {"per_bin_acc", m.per_bin_acc},
                     {"bin_counts", m.bin_counts},
                     {"excluded", excluded}};
}

void from_json(const nlohmann::json& j, MetricBundle& m) {
  m.acc = j.at("acc").get<double>();
  m.acc_gap = j.at("acc_gap").get<double>();
  m.acc_min = j.at("acc_min").get<double>();
  m.per_bin_acc = j.at("per_bin_acc").get<std::vector<double>>();
  m.bin_counts = j.at("bin_counts").get<std::vector<size_t>>();
  const auto excluded = j.value("excluded", std::vector<int>(m.per_bin_acc.size(), 0));
  m.excluded.assign(excluded.begin(), excluded.end());
}

std::string metric_csv_header(int n_bins) {
  std::string out = "acc,acc_gap,acc_min,n_bins";
  for (int b = 0; b < n_bins; ++b) out += ",bin_acc_" + std::to_string(b);
  for (int b = 0; b < n_bins; ++b) out += ",bin_count_" + std::to_string(b);
  return out;
}

std::string to_csv_row(const MetricBundle& m) {
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  std::string out = num(m.acc) + "," + num(m.acc_gap) + "," + num(m.acc_min) + "," +
                    std::to_string(m.per_bin_acc.size());
  for (double v : m.per_bin_acc) out += "," + num(v);
  for (size_t c : m.bin_counts) out += "," + std::to_string(c);
  return out;
}

MetricBundle per_bin_accuracy(std::span<const int> predictions, std::span<const int> labels,
                              const BinPartition& partition, size_t min_count) {
  if (predictions.size() != labels.size() || labels.size() != partition.assignment.size())
    throw InputError("per_bin_accuracy: predictions, labels and partition differ in length");
  const int n_bins = partition.num_bins();
  MetricBundle m;
  m.bin_counts.assign(static_cast<size_t>(n_bins), 0);
  std::vector<size_t> correct(static_cast<size_t>(n_bins), 0);
  size_t total_correct = 0;
  for (size_t k = 0; k < labels.size(); ++k) {
    const int b = partition.assignment[k];
    if (b < 0 || b >= n_bins) throw InputError("per_bin_accuracy: bin index out of range");
    ++m.bin_counts[static_cast<size_t>(b)];
    if (predictions[k] == labels[k]) {
      ++correct[static_cast<size_t>(b)];
      ++total_correct;
    }
  }
  m.per_bin_acc.assign(static_cast<size_t>(n_bins), 0.0);
  m.excluded.assign(static_cast<size_t>(n_bins), false);
  bool any_included = false;
  for (size_t b = 0; b < m.bin_counts.size(); ++b) {
    if (m.bin_counts[b] > 0) m.per_bin_acc[b] = 100.0 * correct[b] / m.bin_counts[b];
    m.excluded[b] = m.bin_counts[b] < std::max<size_t>(min_count, 1);
    any_included |= !m.excluded[b];
  }
  if (!any_included) throw EvaluationError("per_bin_accuracy: every bin is below the minimum count");
  m.acc = labels.empty() ? 0.0 : 100.0 * total_correct / labels.size();
  return m;
}

double acc_gap(std::span<const double> per_bin) {
  if (per_bin.size() < 2) throw EvaluationError("acc_gap: need at least two included bins");
  const auto [lo, hi] = std::minmax_element(per_bin.begin(), per_bin.end());
  return *hi - *lo;
}

double cai(const CaiInputs& in) {
  if (!(in.lambda >= 0.0 && in.lambda <= 1.0)) throw InputError("cai: lambda must lie in [0, 1]");
  return in.lambda * (in.baseline.acc_gap - in.intervened.acc_gap) +
         (1.0 - in.lambda) * (in.intervened.acc - in.baseline.acc);
}

double cai(const MetricBundle& baseline, const MetricBundle& intervened, double lambda) {
  return cai(CaiInputs{{baseline.acc, baseline.acc_gap}, {intervened.acc, intervened.acc_gap}, lambda});
}

MetricBundle evaluate_predictions(std::span<const int> predictions, std::span<const int> labels,
                                  const BinPartition& partition, size_t min_count) {
  MetricBundle m = per_bin_accuracy(predictions, labels, partition, min_count);
  const auto included = m.included_bin_acc();
  m.acc_gap = acc_gap(included);
  m.acc_min = *std::min_element(included.begin(), included.end());
  return m;
}

MetricBundle evaluate(const Classifier& classifier, std::span<const Image> images,
                      std::span<const int> labels, const BinPartition& partition, size_t min_count) {
  if (images.size() != labels.size()) throw InputError("evaluate: images and labels differ in length");
  const auto predictions = classifier.predict_labels(images);
  return evaluate_predictions(predictions, labels, partition, min_count);
}

}  // namespace factorlab

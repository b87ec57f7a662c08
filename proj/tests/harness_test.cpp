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

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "factorlab/config.hpp"
#include "factorlab/error.hpp"
#include "factorlab/harness.hpp"
#include "factorlab/rng.hpp"

namespace factorlab {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("factorlab_harness_" + name);
  fs::remove_all(p);
  return p;
}

ClassifierConfig tiny_classifier() {
  ClassifierConfig c;
  c.widths = {4, 8, 8, 8};
  c.epochs = 1;
  c.batch_size = 16;
  return c;
}

WorldSpec small_world() {
  WorldSpec spec = ExperimentConfig::default_world();
  spec.image_size = 16;
  return spec;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.world = small_world();
  c.seed = 5;
  c.train_size = 100;
  c.val_size = 60;
  c.test_size = 60;
  c.classifier = tiny_classifier();
  c.intervention.da_multiplier = 1.0;
  c.codes = {3};
  c.eval_multiplier = 2.0;
  c.n_bins = 3;
  c.min_count = 5;
  c.traversal_steps = 3;
  c.traversal_images = 2;
  return c;
}

MetricBundle bundle(double acc, double gap) {
  MetricBundle m;
  m.acc = acc;
  m.acc_gap = gap;
  m.acc_min = acc - gap;
  return m;
}

// ---------------------------------------------------------------- scan

TEST(Scan, EvaluationSetIsTenTimesTestSize) {
  EXPECT_EQ(sensitivity_eval_size(2000), 20000u);
  EXPECT_EQ(sensitivity_eval_size(37), 370u);
  EXPECT_THROW(sensitivity_eval_size(0), InputError);

  GeneratorInfo info;
  const std::vector<double> dist{0.1, 0.2, 0.3, 0.2, 0.2};
  const auto codes = synthetic_eval_codes(info, dist, 100, 9);
  ASSERT_EQ(codes.size(), 1000u);
  std::vector<size_t> counts(5, 0);
  for (const auto& c : codes) {
    ++counts[static_cast<size_t>(c.y)];
    for (double v : c.c) {
      EXPECT_GE(v, kCodeLow);
      EXPECT_LE(v, kCodeHigh);
    }
  }
  EXPECT_EQ(counts, (std::vector<size_t>{100, 200, 300, 200, 200}));
}

TEST(Scan, RankingIsSortedPermutationWithInjectedCodeFirst) {
  GeneratorInfo info;
  const std::vector<double> dist(5, 0.2);
  const auto codes = synthetic_eval_codes(info, dist, 500, 2);
  // Predictions fail whenever c_5 is high, independent of every other code.
  std::vector<int> preds;
  for (const auto& c : codes) preds.push_back(c.c[4] > 1.0 ? (c.y + 1) % 5 : c.y);
  const auto ranking = rank_codes(preds, codes, info.d_c);
  ASSERT_EQ(ranking.size(), static_cast<size_t>(info.d_c));
  EXPECT_EQ(ranking.front().code, 4);
  EXPECT_NEAR(ranking.front().metrics.acc_gap, 100.0, 1e-12);
  std::set<int> seen;
  for (size_t k = 0; k < ranking.size(); ++k) {
    seen.insert(ranking[k].code);
    if (k > 0) EXPECT_GE(ranking[k - 1].metrics.acc_gap, ranking[k].metrics.acc_gap);
  }
  EXPECT_EQ(seen.size(), static_cast<size_t>(info.d_c));
}

TEST(Scan, TiesKeepLowerCodeFirst) {
  GeneratorInfo info;
  const auto codes = synthetic_eval_codes(info, std::vector<double>(5, 0.2), 100, 3);
  std::vector<int> preds;
  for (const auto& c : codes) preds.push_back(c.y);
  const auto ranking = rank_codes(preds, codes, info.d_c);
  for (int i = 0; i < info.d_c; ++i) EXPECT_EQ(ranking[static_cast<size_t>(i)].code, i);
}

// Upper bound on the range of `bins` binomial accuracies (percent) that
// share one true rate `p`, at family-wise level 1e-3.
double null_gap_bound(double p, size_t smallest_bin, int bins) {
  const double z = 4.06;  // two-sided normal quantile at 1e-3 / bins, bins = 10
  EXPECT_EQ(bins, 10);
  return 2.0 * z * 100.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(smallest_bin));
}

// Trains a desk-sized baseline on the injected-sensitivity world and scans
// an oracle generator that binds code 4 to brightness alone.
TEST(Scan, OracleScanFindsInjectedFactor) {
  const WorldSpec spec = ExperimentConfig::default_world();
  const auto train = generate_dataset(spec, 2000, 21);
  ClassifierConfig cc = ExperimentConfig::default_classifier();
  cc.seed = 4;
  const auto base = train_classifier(train, cc, spec.num_classes, spec.image_size);
  const auto gen = oracle_generator(spec, {default_code_mapping(spec, 3, spec.factor_index("brightness"))});
  const auto ranking = sensitivity_scan(base, *gen, std::vector<double>(5, 0.2), 2000, 22);
  ASSERT_EQ(ranking.size(), 10u);
  EXPECT_EQ(ranking.front().code, 3);
  for (const auto& e : ranking) {
    if (e.code == 3) continue;
    // Unmapped codes leave images untouched, so their gap is sampling noise.
    const auto counts = e.metrics.bin_counts;
    const size_t smallest = *std::min_element(counts.begin(), counts.end());
    const double p = e.metrics.acc / 100.0;
    EXPECT_LT(e.metrics.acc_gap, null_gap_bound(p, smallest, 10)) << "unmapped code " << e.code;
    EXPECT_LT(e.metrics.acc_gap, ranking.front().metrics.acc_gap / 3.0);
  }
}

// ---------------------------------------------------------------- rows

TEST(Rows, StubInterventionsMatchBaseline) {
  const WorldSpec spec = small_world();
  const auto gen = oracle_generator(spec, {default_code_mapping(spec, 3, 1)});
  ClassifierConfig cc = tiny_classifier();
  cc.seed = 8;
  const Classifier base(cc, spec.num_classes, spec.image_size);
  const std::vector<NamedClassifier> stubs{{"DA-4", &base}, {"AA-4", &base}, {"SC-4", &base}};
  const auto codes = synthetic_eval_codes(gen->info(), std::vector<double>(5, 0.2), 40, 4);
  const auto rows = unsupervised_setting(base, stubs, *gen, codes, 3);
  ASSERT_EQ(rows.size(), 4u);
  const char* names[] = {"Base", "DA-4", "AA-4", "SC-4"};
  for (size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].intervention, names[k]);
    EXPECT_EQ(rows[k].setting, kSettingUnsupervised);
    EXPECT_EQ(rows[k].factor, "C4");
    EXPECT_EQ(rows[k].metrics.per_bin_acc, rows[0].metrics.per_bin_acc);
    EXPECT_EQ(rows[k].cai_05, 0.0);
    EXPECT_EQ(rows[k].cai_075, 0.0);
  }
}

TEST(Rows, CaiIsAgainstBaselineOnSamePartition) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> cls(0, 4);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  const size_t n = 600;
  std::vector<int> labels(n);
  std::vector<double> values(n);
  for (size_t k = 0; k < n; ++k) {
    labels[k] = cls(rng);
    values[k] = value(rng);
  }
  const auto partition = bin_assign(values, 4, Interval{0.0, 1.0}, "brightness");
  std::vector<std::vector<int>> preds(3, labels);
  for (size_t k = 0; k < n; ++k) {
    if (values[k] > 0.6 && k % 2 == 0) preds[0][k] = (labels[k] + 1) % 5;
    if (k % 5 == 0) preds[1][k] = (labels[k] + 2) % 5;
    if (values[k] < 0.3 && k % 3 == 0) preds[2][k] = (labels[k] + 1) % 5;
  }
  const std::vector<std::string> names{"Base", "DA-1", "SC-1"};
  const auto rows = rows_from_predictions(kSettingGeneralization, "brightness", names, preds, labels, partition);
  ASSERT_EQ(rows.size(), 3u);
  const auto base = evaluate_predictions(preds[0], labels, partition);
  for (size_t k = 0; k < rows.size(); ++k) {
    const auto m = evaluate_predictions(preds[k], labels, partition);
    EXPECT_EQ(rows[k].metrics.acc, m.acc);
    EXPECT_EQ(rows[k].metrics.acc_gap, m.acc_gap);
    EXPECT_EQ(rows[k].cai_05, cai(base, m, 0.5));
    EXPECT_EQ(rows[k].cai_075, cai(base, m, 0.75));
  }
  EXPECT_EQ(rows[0].cai_05, 0.0);
  const std::vector<std::string> one_name{"Base"};
  EXPECT_THROW(rows_from_predictions(kSettingGeneralization, "brightness", one_name, preds, labels, partition),
               InputError);
}

TEST(Rows, GeneralizationSharesOnePartition) {
  const WorldSpec spec = small_world();
  const auto test = generate_dataset(spec, 120, 31);
  ClassifierConfig a = tiny_classifier(), b = tiny_classifier();
  a.seed = 1;
  b.seed = 2;
  const Classifier base(a, spec.num_classes, spec.image_size);
  const Classifier other(b, spec.num_classes, spec.image_size);
  const auto binning = real_factor_binning(spec, "brightness", test, 3);
  const auto partition = real_factor_partition(test, spec, binning);
  const std::vector<NamedClassifier> others{{"DA-4", &other}, {"AA-4", &base}};
  const auto rows = generalization_setting(base, others, test, partition, "brightness", 5);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.setting, kSettingGeneralization);
    EXPECT_EQ(r.metrics.bin_counts, rows[0].metrics.bin_counts);
  }
  EXPECT_EQ(rows[2].cai_05, 0.0);
  std::vector<Image> images;
  for (const auto& s : test) images.push_back(s.image);
  const auto direct = evaluate(other, images, labels_of(test), partition, 5);
  EXPECT_EQ(rows[1].metrics.per_bin_acc, direct.per_bin_acc);
}

// ---------------------------------------------------------------- real factors

TEST(RealFactors, WorldFactorsUseDeclaredRange) {
  const WorldSpec spec = small_world();
  const auto val = generate_dataset(spec, 30, 41);
  const auto b = real_factor_binning(spec, "hue", val);
  const auto& range = spec.factors[static_cast<size_t>(spec.factor_index("hue"))].range;
  EXPECT_EQ(b.range.lo, range.lo);
  EXPECT_EQ(b.range.hi, range.hi);
  EXPECT_THROW(real_factor_binning(spec, "no_such_factor", val), InputError);
}

TEST(RealFactors, MeasuredBrightnessEdgesComeFromValidation) {
  const WorldSpec spec = small_world();
  const auto val = generate_dataset(spec, 50, 42);
  const auto test = generate_dataset(spec, 50, 43);
  const auto b = real_factor_binning(spec, "lab_brightness", val, 4);
  std::vector<double> lum;
  for (const auto& s : val) lum.push_back(compute_brightness(s.image));
  EXPECT_EQ(b.range.lo, *std::min_element(lum.begin(), lum.end()));
  EXPECT_EQ(b.range.hi, *std::max_element(lum.begin(), lum.end()));
  // Test samples are binned with the frozen validation edges.
  const auto part = real_factor_partition(test, spec, b);
  std::vector<double> test_lum;
  for (const auto& s : test) test_lum.push_back(compute_brightness(s.image));
  EXPECT_EQ(part.assignment, bin_assign(test_lum, 4, b.range).assignment);
  EXPECT_THROW(real_factor_binning(spec, "lab_brightness", std::vector<Sample>{}), InputError);
}

// ---------------------------------------------------------------- ACAI

TEST(Acai, PicksBestCandidateAndLabelsIt) {
  const MetricBundle base = bundle(80.0, 20.0);
  std::vector<AcaiCandidate> grid;
  for (int code : {0, 3})
    for (auto kind : {InterventionKind::kDA, InterventionKind::kAA, InterventionKind::kSC})
      grid.push_back({code, kind, bundle(79.0, 19.0)});
  grid[3].validation = bundle(81.0, 8.0);  // (DA, code index 3)
  const auto sel = acai_select(grid, base);
  EXPECT_EQ(sel.index, 3u);
  EXPECT_EQ(sel.code, 3);
  EXPECT_EQ(sel.kind, InterventionKind::kDA);
  EXPECT_EQ(sel.label, "ACAI (DA-4)");
  ASSERT_EQ(sel.validation_cai_05.size(), grid.size());
  EXPECT_DOUBLE_EQ(sel.validation_cai_05[3], 0.5 * 12.0 + 0.5 * 1.0);
}

TEST(Acai, SingleCandidateIsSelected) {
  const std::vector<AcaiCandidate> grid{{7, InterventionKind::kSC, bundle(50.0, 40.0)}};
  const auto sel = acai_select(grid, bundle(90.0, 5.0));
  EXPECT_EQ(sel.index, 0u);
  EXPECT_EQ(sel.label, "ACAI (SC-8)");
}

TEST(Acai, EmptyGridIsInputError) {
  EXPECT_THROW(acai_select(std::vector<AcaiCandidate>{}, bundle(80.0, 10.0)), InputError);
}

TEST(Acai, TieBreaksFollowDocumentedOrder) {
  const MetricBundle base = bundle(80.0, 20.0);
  // Equal CAI_0.5 (both 1.0): the higher validation accuracy wins.
  std::vector<AcaiCandidate> grid{{0, InterventionKind::kDA, bundle(80.0, 18.0)},
                                  {1, InterventionKind::kDA, bundle(82.0, 20.0)}};
  EXPECT_EQ(acai_select(grid, base).index, 1u);
  // Equal CAI and accuracy: lower code, then kind order DA, AA, SC.
  grid = {{5, InterventionKind::kDA, bundle(81.0, 19.0)},
          {2, InterventionKind::kSC, bundle(81.0, 19.0)},
          {2, InterventionKind::kAA, bundle(81.0, 19.0)}};
  EXPECT_EQ(acai_select(grid, base).index, 2u);
}

TEST(Acai, SelectionReproducibleFromPersistedGrid) {
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> acc(70, 90), gap(0, 30);
  for (int trial = 0; trial < 200; ++trial) {
    const MetricBundle base = bundle(acc(rng), gap(rng));
    std::vector<AcaiCandidate> grid;
    for (int code = 0; code < 4; ++code)
      for (auto kind : {InterventionKind::kDA, InterventionKind::kAA, InterventionKind::kSC})
        grid.push_back({code, kind, bundle(acc(rng), gap(rng))});
    std::shuffle(grid.begin(), grid.end(), rng);
    const auto sel = acai_select(grid, base);
    nlohmann::json j = sel;
    const auto back = j.get<AcaiSelection>();
    const auto& col = back.validation_cai_05;
    const double best = *std::max_element(col.begin(), col.end());
    EXPECT_EQ(col[back.index], best);
    EXPECT_EQ(back.label, sel.label);
  }
}

// ---------------------------------------------------------------- pipeline

TEST(Pipeline, OverlappingSplitsAreRejected) {
  const std::vector<std::vector<size_t>> ok{{0, 1, 2}, {3, 4}, {5}};
  EXPECT_NO_THROW(check_disjoint(ok));
  const std::vector<std::vector<size_t>> bad{{0, 1, 2}, {2, 4}, {5}};
  EXPECT_THROW(check_disjoint(bad), InputError);
}

TEST(Pipeline, ParallelForVisitsEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(37);
  parallel_for(hits.size(), 3, [&](size_t k) { ++hits[k]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(5, 2, [](size_t k) {
                 if (k == 3) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

TEST(Pipeline, OracleRunIsDeterministicAndSkipsGanTraining) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const auto ra = Experiment(tiny_experiment(), a).run();
  const auto rb = Experiment(tiny_experiment(), b).run();
  EXPECT_EQ(nlohmann::json(ra).dump(), nlohmann::json(rb).dump());
  EXPECT_EQ(read_json_file(a / "report" / "report.json"), read_json_file(b / "report" / "report.json"));
  EXPECT_TRUE(fs::exists(a / "config.resolved.json"));
  EXPECT_FALSE(fs::exists(a / "generator" / "gan_log.csv"));

  // Row structure: Base plus three kinds for the one examined code, then
  // generalization rows and the ACAI row.
  ASSERT_EQ(ra.rows.size(), 4u + 4u + 1u);
  EXPECT_EQ(ra.rows[0].setting, kSettingUnsupervised);
  EXPECT_EQ(ra.rows[3].intervention, "SC-4");
  EXPECT_EQ(ra.rows[4].setting, kSettingGeneralization);
  EXPECT_EQ(ra.rows[8].setting, kSettingSemisupervised);
  EXPECT_EQ(ra.rows[8].intervention, ra.acai.at("brightness").label);
  std::set<int> ranked;
  for (const auto& e : ra.sensitivity) ranked.insert(e.code);
  EXPECT_EQ(ranked.size(), 10u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, ResumedRunMatchesUninterruptedRun) {
  const fs::path whole = scratch("whole"), parts = scratch("parts");
  const auto full = Experiment(tiny_experiment(), whole).run();

  RunOptions first;
  first.until = Stage::kScan;
  Experiment(tiny_experiment(), parts).run(first);
  Experiment stepped(tiny_experiment(), parts);
  EXPECT_TRUE(stepped.stage_done(Stage::kBaseline));
  EXPECT_FALSE(stepped.stage_done(Stage::kInterventions));
  std::vector<std::string> lines;
  RunOptions rest;
  rest.log = [&](const std::string& l) { lines.push_back(l); };
  const auto resumed = stepped.run(rest);
  EXPECT_EQ(nlohmann::json(resumed).dump(), nlohmann::json(full).dump());
  EXPECT_NE(std::find(lines.begin(), lines.end(), "stage baseline already complete; skipping"), lines.end());

  // A changed config invalidates every marker.
  ExperimentConfig changed = tiny_experiment();
  changed.seed = 6;
  EXPECT_FALSE(Experiment(changed, parts).stage_done(Stage::kData));
  fs::remove_all(whole);
  fs::remove_all(parts);
}

TEST(Pipeline, StageFailureIsRecordedByName) {
  const fs::path out = scratch("fail");
  ExperimentConfig cfg = tiny_experiment();
  // Every synthetic bin falls below the minimum count.
  cfg.min_count = 100000;
  try {
    Experiment(cfg, out).run();
    FAIL() << "expected a stage failure";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::kScan);
  }
  const auto failure = read_json_file(out / "failure.json");
  EXPECT_EQ(failure["stage"], "scan");
  EXPECT_TRUE(Experiment(cfg, out).stage_done(Stage::kBaseline));
  fs::remove_all(out);
}

TEST(Pipeline, InvalidConfigIsInputError) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.kinds.clear();
  EXPECT_THROW(cfg.validate(), InputError);
  cfg = tiny_experiment();
  cfg.test_size = 0;
  EXPECT_THROW(cfg.validate(), InputError);
}

}  // namespace
}  // namespace factorlab

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

#include "factorlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "factorlab/checkpoint.hpp"
#include "factorlab/error.hpp"
#include "factorlab/infogan.hpp"
#include "factorlab/report.hpp"
#include "factorlab/rng.hpp"

namespace factorlab {

namespace fs = std::filesystem;

namespace {

constexpr size_t kChunk = 256;

std::vector<Image> images_of(std::span<const Sample> samples) {
  std::vector<Image> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.image);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- scan

void to_json(nlohmann::json& j, const SensitivityEntry& e) {
  j = nlohmann::json{{"code", e.code}, {"metrics", e.metrics}};
}

void from_json(const nlohmann::json& j, SensitivityEntry& e) {
  e.code = j.at("code").get<int>();
  e.metrics = j.at("metrics").get<MetricBundle>();
}

size_t sensitivity_eval_size(size_t test_size, double multiplier) {
  if (test_size == 0) throw InputError("sensitivity scan: test_size must be positive");
  return synthetic_count(multiplier, test_size);
}

std::vector<LatentCode> synthetic_eval_codes(const GeneratorInfo& info, std::span<const double> label_dist,
                                             size_t test_size, uint64_t seed, double multiplier) {
  return sample_codes(info, sensitivity_eval_size(test_size, multiplier), label_dist,
                      CodeDistribution::kUniformEval, seed);
}

std::vector<std::vector<int>> predict_synthetic(std::span<const Classifier* const> classifiers,
                                                const Generator& gen, std::span<const LatentCode> codes) {
  std::vector<std::vector<int>> out(classifiers.size());
  for (auto& v : out) v.reserve(codes.size());
  for (size_t start = 0; start < codes.size(); start += kChunk) {
    const auto images = gen.generate_batch(codes.subspan(start, std::min(kChunk, codes.size() - start)));
    for (size_t c = 0; c < classifiers.size(); ++c) {
      const auto pred = classifiers[c]->predict_labels(images);
      out[c].insert(out[c].end(), pred.begin(), pred.end());
    }
  }
  return out;
}

BinPartition code_partition(std::span<const LatentCode> codes, int i, int n_bins) {
  std::vector<double> values;
  values.reserve(codes.size());
  for (const auto& c : codes) values.push_back(c.c.at(static_cast<size_t>(i)));
  return bin_assign(values, n_bins, Interval{kCodeLow, kCodeHigh}, code_label(i));
}

std::vector<SensitivityEntry> rank_codes(std::span<const int> predictions, std::span<const LatentCode> codes,
                                         int d_c, int n_bins, size_t min_count) {
  std::vector<int> labels;
  labels.reserve(codes.size());
  for (const auto& c : codes) labels.push_back(c.y);
  std::vector<SensitivityEntry> out;
  for (int i = 0; i < d_c; ++i)
    out.push_back({i, evaluate_predictions(predictions, labels, code_partition(codes, i, n_bins), min_count)});
  std::stable_sort(out.begin(), out.end(), [](const SensitivityEntry& a, const SensitivityEntry& b) {
    return a.metrics.acc_gap > b.metrics.acc_gap;
  });
  return out;
}

std::vector<SensitivityEntry> sensitivity_scan(const Classifier& baseline, const Generator& gen,
                                               std::span<const double> label_dist, size_t test_size,
                                               uint64_t seed, int n_bins, size_t min_count, double multiplier) {
  const auto codes = synthetic_eval_codes(gen.info(), label_dist, test_size, seed, multiplier);
  const Classifier* clf[] = {&baseline};
  const auto preds = predict_synthetic(clf, gen, codes);
  return rank_codes(preds[0], codes, gen.info().d_c, n_bins, min_count);
}

// ---------------------------------------------------------------- rows

void to_json(nlohmann::json& j, const ReportRow& r) {
  j = nlohmann::json{{"setting", r.setting}, {"intervention", r.intervention}, {"factor", r.factor},
                     {"metrics", r.metrics}, {"cai_05", r.cai_05},             {"cai_075", r.cai_075}};
}

void from_json(const nlohmann::json& j, ReportRow& r) {
  r.setting = j.at("setting").get<std::string>();
  r.intervention = j.at("intervention").get<std::string>();
  r.factor = j.at("factor").get<std::string>();
  r.metrics = j.at("metrics").get<MetricBundle>();
  r.cai_05 = j.at("cai_05").get<double>();
  r.cai_075 = j.at("cai_075").get<double>();
}

std::string code_label(int i) { return "C" + std::to_string(i + 1); }

std::vector<ReportRow> rows_from_predictions(const std::string& setting, const std::string& factor,
                                             std::span<const std::string> names,
                                             std::span<const std::vector<int>> predictions,
                                             std::span<const int> labels, const BinPartition& partition,
                                             size_t min_count) {
  if (names.empty() || names.size() != predictions.size())
    throw InputError("rows: need one name per prediction vector, baseline first");
  std::vector<ReportRow> rows;
  const MetricBundle base = evaluate_predictions(predictions[0], labels, partition, min_count);
  for (size_t k = 0; k < names.size(); ++k) {
    ReportRow row;
    row.setting = setting;
    row.intervention = names[k];
    row.factor = factor;
    row.metrics = k == 0 ? base : evaluate_predictions(predictions[k], labels, partition, min_count);
    row.cai_05 = cai(base, row.metrics, 0.5);
    row.cai_075 = cai(base, row.metrics, 0.75);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ReportRow> unsupervised_setting(const Classifier& baseline, std::span<const NamedClassifier> intervened,
                                            const Generator& gen, std::span<const LatentCode> eval_codes, int i,
                                            int n_bins, size_t min_count) {
  std::vector<const Classifier*> clfs{&baseline};
  std::vector<std::string> names{"Base"};
  for (const auto& c : intervened) {
    clfs.push_back(c.classifier);
    names.push_back(c.name);
  }
  const auto preds = predict_synthetic(clfs, gen, eval_codes);
  std::vector<int> labels;
  for (const auto& c : eval_codes) labels.push_back(c.y);
  return rows_from_predictions(kSettingUnsupervised, code_label(i), names, preds, labels,
                               code_partition(eval_codes, i, n_bins), min_count);
}

std::vector<ReportRow> generalization_setting(const Classifier& baseline, std::span<const NamedClassifier> intervened,
                                              std::span<const Sample> test, const BinPartition& partition,
                                              const std::string& factor, size_t min_count) {
  const auto images = images_of(test);
  const auto labels = labels_of(test);
  std::vector<std::vector<int>> preds{baseline.predict_labels(images)};
  std::vector<std::string> names{"Base"};
  for (const auto& c : intervened) {
    preds.push_back(c.classifier->predict_labels(images));
    names.push_back(c.name);
  }
  return rows_from_predictions(kSettingGeneralization, factor, names, preds, labels, partition, min_count);
}

// ---------------------------------------------------------------- real factors

std::vector<double> real_factor_values(std::span<const Sample> samples, const WorldSpec& spec,
                                       const std::string& factor) {
  if (factor == "lab_brightness") {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(compute_brightness(s.image));
    return out;
  }
  return factor_column(samples, spec.factor_index(factor));
}

RealFactorBinning real_factor_binning(const WorldSpec& spec, const std::string& factor,
                                      std::span<const Sample> validation, int n_bins) {
  RealFactorBinning b;
  b.factor = factor;
  b.n_bins = n_bins;
  if (factor != "lab_brightness") {
    b.range = spec.factors.at(static_cast<size_t>(spec.factor_index(factor))).range;
    return b;
  }
  const auto values = real_factor_values(validation, spec, factor);
  if (values.empty()) throw InputError("real factor binning: empty validation set");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*lo < *hi)) throw EvaluationError("real factor binning: '" + factor + "' is constant on validation");
  b.range = {*lo, *hi};
  return b;
}

BinPartition real_factor_partition(std::span<const Sample> samples, const WorldSpec& spec,
                                   const RealFactorBinning& binning) {
  return bin_assign(real_factor_values(samples, spec, binning.factor), binning.n_bins, binning.range, binning.factor);
}

// ---------------------------------------------------------------- ACAI

void to_json(nlohmann::json& j, const AcaiSelection& s) {
  j = nlohmann::json{{"index", s.index}, {"code", s.code},   {"kind", to_string(s.kind)},
                     {"label", s.label}, {"validation_cai_05", s.validation_cai_05}};
}

void from_json(const nlohmann::json& j, AcaiSelection& s) {
  s.index = j.at("index").get<size_t>();
  s.code = j.at("code").get<int>();
  s.kind = parse_intervention_kind(j.at("kind").get<std::string>());
  s.label = j.at("label").get<std::string>();
  s.validation_cai_05 = j.at("validation_cai_05").get<std::vector<double>>();
}

std::string acai_label(InterventionKind kind, int code) {
  return "ACAI (" + intervention_name(kind, code) + ")";
}

AcaiSelection acai_select(std::span<const AcaiCandidate> candidates, const MetricBundle& validation_baseline) {
  if (candidates.empty()) throw InputError("acai_select: empty candidate grid");
  AcaiSelection sel;
  for (const auto& c : candidates) sel.validation_cai_05.push_back(cai(validation_baseline, c.validation, 0.5));
  auto better = [&](size_t a, size_t b) {
    const auto& ca = candidates[a];
    const auto& cb = candidates[b];
    if (sel.validation_cai_05[a] != sel.validation_cai_05[b]) return sel.validation_cai_05[a] > sel.validation_cai_05[b];
    if (ca.validation.acc != cb.validation.acc) return ca.validation.acc > cb.validation.acc;
    if (ca.code != cb.code) return ca.code < cb.code;
    return static_cast<int>(ca.kind) < static_cast<int>(cb.kind);
  };
  size_t best = 0;
  for (size_t k = 1; k < candidates.size(); ++k)
    if (better(k, best)) best = k;
  sel.index = best;
  sel.code = candidates[best].code;
  sel.kind = candidates[best].kind;
  sel.label = acai_label(sel.kind, sel.code);
  return sel;
}

// ---------------------------------------------------------------- report

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"config", r.config},     {"sensitivity", r.sensitivity}, {"examined_codes", r.examined_codes},
                     {"rows", r.rows},         {"acai", r.acai},               {"acai_grid", r.acai_grid}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  r.config = j.value("config", nlohmann::json::object());
  r.sensitivity = j.value("sensitivity", std::vector<SensitivityEntry>{});
  r.examined_codes = j.value("examined_codes", std::vector<int>{});
  r.rows = j.value("rows", std::vector<ReportRow>{});
  r.acai = j.value("acai", std::map<std::string, AcaiSelection>{});
  r.acai_grid = j.value("acai_grid", nlohmann::json::object());
}

// ---------------------------------------------------------------- pipeline

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kData: return "data";
    case Stage::kGenerator: return "generator";
    case Stage::kBaseline: return "baseline";
    case Stage::kScan: return "scan";
    case Stage::kInterventions: return "interventions";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "?";
}

void check_disjoint(std::span<const std::vector<size_t>> index_sets) {
  std::set<size_t> seen;
  for (const auto& set : index_sets)
    for (size_t idx : set)
      if (!seen.insert(idx).second)
        throw InputError("split index " + std::to_string(idx) + " appears in more than one split");
}

void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& body) {
  const size_t workers = std::min<size_t>(count, static_cast<size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (size_t w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (size_t k = next++; k < count; k = next++) {
        try {
          body(k);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

Experiment::Experiment(ExperimentConfig config, fs::path out_dir) : config_(std::move(config)), out_(std::move(out_dir)) {
  config_.validate();
  hash_ = factorlab::config_hash(nlohmann::json(config_));
  fs::create_directories(out_);
  write_json_file(out_ / "config.resolved.json", nlohmann::json(config_));
}

void Experiment::log(const std::string& line) const {
  if (log_) log_(line);
}

fs::path Experiment::split_dir(const std::string& split) const { return out_ / "data" / split; }
fs::path Experiment::generator_path() const { return out_ / "generator" / "generator.ckpt"; }
fs::path Experiment::baseline_path() const { return out_ / "baseline" / "model.ckpt"; }
fs::path Experiment::intervention_path(InterventionKind kind, int code) const {
  return out_ / "interventions" / intervention_name(kind, code) / "model.ckpt";
}
fs::path Experiment::report_dir() const { return out_ / "report"; }

bool Experiment::stage_done(Stage stage) const {
  const fs::path marker = out_ / "stages" / (to_string(stage) + ".json");
  if (!fs::exists(marker)) return false;
  try {
    return read_json_file(marker).value("config_hash", "") == hash_;
  } catch (const std::exception&) {
    return false;
  }
}

void Experiment::mark_done(Stage stage, const nlohmann::json& extra) const {
  nlohmann::json marker = extra.is_object() ? extra : nlohmann::json::object();
  marker["stage"] = to_string(stage);
  marker["config_hash"] = hash_;
  write_json_file(out_ / "stages" / (to_string(stage) + ".json"), marker);
}

const std::vector<Sample>& Experiment::split(const std::string& name) {
  auto it = splits_.find(name);
  if (it != splits_.end()) return it->second;
  auto loaded = load_dataset(split_dir(name));
  return splits_[name] = std::move(loaded.samples);
}

GeneratorHandle Experiment::load_gen() {
  if (!gen_) gen_ = load_generator(generator_path());
  return gen_;
}

std::vector<double> Experiment::test_label_dist() {
  const auto& test = split("test");
  std::vector<double> dist(static_cast<size_t>(config_.world.num_classes), 0.0);
  for (const auto& s : test) dist[static_cast<size_t>(s.label)] += 1.0;
  for (double& d : dist) d /= static_cast<double>(test.size());
  return dist;
}

void Experiment::data() {
  const size_t total = config_.train_size + config_.val_size + config_.test_size;
  log("generating " + std::to_string(total) + " factor-world images");
  auto all = generate_dataset(config_.world, total, derive_seed(config_.seed, 0, salt::kDataset));
  std::vector<std::vector<size_t>> index_sets(3);
  const size_t bounds[] = {0, config_.train_size, config_.train_size + config_.val_size, total};
  for (size_t s = 0; s < 3; ++s)
    for (size_t k = bounds[s]; k < bounds[s + 1]; ++k) index_sets[s].push_back(k);
  check_disjoint(index_sets);
  const char* names[] = {"train", "val", "test"};
  nlohmann::json splits;
  for (size_t s = 0; s < 3; ++s) {
    std::vector<Sample> part(all.begin() + static_cast<std::ptrdiff_t>(bounds[s]),
                             all.begin() + static_cast<std::ptrdiff_t>(bounds[s + 1]));
    save_dataset(split_dir(names[s]), part, config_.world, config_.seed);
    splits[names[s]] = {{"begin", bounds[s]}, {"end", bounds[s + 1]}};
  }
  write_json_file(out_ / "data" / "splits.json", splits);
  // Everything downstream reads the persisted (8-bit) images, so resumed and
  // uninterrupted runs see identical inputs.
  splits_.clear();
}

void Experiment::generator() {
  fs::create_directories(generator_path().parent_path());
  if (config_.generator == "oracle") {
    std::vector<CodeMapping> mapping;
    for (const auto& b : config_.oracle_mapping)
      mapping.push_back(default_code_mapping(config_.world, b.code, config_.world.factor_index(b.factor)));
    gen_ = oracle_generator(config_.world, mapping);
    gen_->save(generator_path());
    log("bound oracle generator");
    return;
  }
  InfoGanConfig gc = config_.infogan;
  gc.seed = derive_seed(config_.seed, config_.infogan.seed, salt::kGanBatch);
  gc.diagnostics_dir = generator_path().parent_path();
  log("training InfoGAN for " + std::to_string(gc.steps) + " steps");
  auto result = train_infogan(split("train"), config_.world.num_classes, config_.world.image_size, gc);
  result.model->save(generator_path());
  std::ofstream csv(generator_path().parent_path() / "gan_log.csv");
  csv << "step,d_loss,g_loss,info,neg_log_prior\n";
  for (const auto& l : result.log)
    csv << l.step << "," << l.d_loss << "," << l.g_loss << "," << l.info << "," << l.neg_log_prior << "\n";
  const auto rho = code_reconstruction_correlation(*result.model, 1000, derive_seed(config_.seed, 1, salt::kGanBatch));
  write_json_file(generator_path().parent_path() / "code_correlation.json", rho);
  gen_ = result.model;
}

namespace {

ClassifierConfig seeded(const ClassifierConfig& c, uint64_t run_seed) {
  ClassifierConfig out = c;
  out.seed = derive_seed(run_seed, c.seed, salt::kInit);
  return out;
}

void write_run_dir(const fs::path& model_path, const Classifier& clf, const nlohmann::json& snapshot) {
  fs::create_directories(model_path.parent_path());
  clf.save(model_path);
  write_curve_csv(model_path.parent_path() / "curve.csv", clf.curve());
  write_json_file(model_path.parent_path() / "config.json", snapshot);
}

}  // namespace

void Experiment::baseline() {
  const auto cc = seeded(config_.classifier, config_.seed);
  log("training baseline classifier");
  Classifier clf = train_classifier(split("train"), cc, config_.world.num_classes, config_.world.image_size);
  clf.metadata()["run_hash"] = hash_;
  write_run_dir(baseline_path(), clf, {{"classifier", cc}, {"experiment", config_}});
}

void Experiment::scan() {
  const Classifier base = Classifier::load(baseline_path());
  const auto gen = load_gen();
  log("sensitivity scan over " + std::to_string(gen->info().d_c) + " codes");
  const auto entries = sensitivity_scan(base, *gen, test_label_dist(), config_.test_size,
                                        derive_seed(config_.seed, 1, salt::kSynthetic), config_.n_bins,
                                        config_.min_count, config_.eval_multiplier);
  write_json_file(out_ / "scan" / "sensitivity.json", entries);
}

std::vector<SensitivityEntry> Experiment::load_scan() const {
  return read_json_file(out_ / "scan" / "sensitivity.json").get<std::vector<SensitivityEntry>>();
}

std::vector<int> Experiment::examined_codes() const {
  if (!config_.codes.empty()) return config_.codes;
  const auto ranking = load_scan();
  std::vector<int> out;
  for (size_t k = 0; k < ranking.size() && static_cast<int>(out.size()) < config_.top_codes; ++k)
    out.push_back(ranking[k].code);
  return out;
}

void Experiment::interventions() {
  const auto codes = examined_codes();
  const auto gen = load_gen();
  const auto& train = split("train");
  const auto dist = test_label_dist();
  struct Job {
    int code;
    InterventionKind kind;
  };
  std::vector<Job> jobs;
  for (int c : codes)
    for (auto k : config_.kinds) jobs.push_back({c, k});

  InterventionContext ctx;
  ctx.train = train;
  ctx.test_size = config_.test_size;
  ctx.generator = gen;
  ctx.label_dist = dist;
  ctx.classifier = seeded(config_.classifier, config_.seed);
  ctx.num_classes = config_.world.num_classes;
  ctx.image_size = config_.world.image_size;

  std::mutex log_mu;
  parallel_for(jobs.size(), config_.jobs, [&](size_t k) {
    const auto path = intervention_path(jobs[k].kind, jobs[k].code);
    if (fs::exists(path) && read_checkpoint_metadata(path).value("run_hash", "") == hash_) return;
    {
      std::lock_guard lock(log_mu);
      log("training " + intervention_name(jobs[k].kind, jobs[k].code));
    }
    InterventionConfig ic = config_.intervention;
    ic.kind = jobs[k].kind;
    ic.factor_index = jobs[k].code;
    ic.seed = derive_seed(config_.seed, config_.intervention.seed, salt::kSynthetic);
    Classifier clf = apply_intervention(ic, ctx);
    clf.metadata()["run_hash"] = hash_;
    write_run_dir(path, clf, {{"intervention", ic}, {"classifier", ctx.classifier}});
  });
}

EvalReport Experiment::evaluate() {
  EvalReport report;
  report.config = config_;
  report.sensitivity = load_scan();
  report.examined_codes = examined_codes();
  const auto gen = load_gen();

  std::vector<Classifier> models;
  std::vector<std::string> names{"Base"};
  std::vector<AcaiCandidate> grid_shape;
  models.push_back(Classifier::load(baseline_path()));
  for (int c : report.examined_codes)
    for (auto k : config_.kinds) {
      models.push_back(Classifier::load(intervention_path(k, c)));
      names.push_back(intervention_name(k, c));
      grid_shape.push_back({c, k, {}});
    }
  std::vector<const Classifier*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);

  // Unsupervised: one synthetic set, binned by each examined code.
  log("evaluating on the synthetic set");
  const auto codes = synthetic_eval_codes(gen->info(), test_label_dist(), config_.test_size,
                                          derive_seed(config_.seed, 1, salt::kSynthetic), config_.eval_multiplier);
  const auto syn_preds = predict_synthetic(ptrs, *gen, codes);
  std::vector<int> syn_labels;
  for (const auto& c : codes) syn_labels.push_back(c.y);
  for (int i : report.examined_codes) {
    std::vector<std::string> sub_names{"Base"};
    std::vector<std::vector<int>> sub_preds{syn_preds[0]};
    for (size_t m = 1; m < names.size(); ++m)
      if (grid_shape[m - 1].code == i) {
        sub_names.push_back(names[m]);
        sub_preds.push_back(syn_preds[m]);
      }
    auto rows = rows_from_predictions(kSettingUnsupervised, code_label(i), sub_names, sub_preds, syn_labels,
                                      code_partition(codes, i, config_.n_bins), config_.min_count);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }

  // Generalization and ACAI on real factors.
  log("evaluating on real factors");
  const auto& test = split("test");
  const auto& val = split("val");
  const auto test_images = images_of(test);
  const auto val_images = images_of(val);
  const auto test_labels = labels_of(test);
  const auto val_labels = labels_of(val);
  std::vector<std::vector<int>> test_preds, val_preds;
  for (const auto* m : ptrs) {
    test_preds.push_back(m->predict_labels(test_images));
    if (config_.acai) val_preds.push_back(m->predict_labels(val_images));
  }
  for (const auto& f : config_.real_factors) {
    const auto binning = real_factor_binning(config_.world, f, val, config_.n_bins);
    const auto test_part = real_factor_partition(test, config_.world, binning);
    auto rows = rows_from_predictions(kSettingGeneralization, f, names, test_preds, test_labels, test_part,
                                      config_.min_count);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    if (!config_.acai) continue;

    const auto val_part = real_factor_partition(val, config_.world, binning);
    const MetricBundle val_base = evaluate_predictions(val_preds[0], val_labels, val_part, config_.min_count);
    std::vector<AcaiCandidate> candidates = grid_shape;
    nlohmann::json grid = nlohmann::json::array();
    for (size_t k = 0; k < candidates.size(); ++k) {
      candidates[k].validation = evaluate_predictions(val_preds[k + 1], val_labels, val_part, config_.min_count);
      grid.push_back({{"code", candidates[k].code},
                      {"kind", to_string(candidates[k].kind)},
                      {"validation", candidates[k].validation}});
    }
    const auto sel = acai_select(candidates, val_base);
    ReportRow acai_row = rows[sel.index + 1];
    acai_row.setting = kSettingSemisupervised;
    acai_row.intervention = sel.label;
    report.rows.push_back(acai_row);
    report.acai[f] = sel;
    report.acai_grid[f] = {{"validation_baseline", val_base},
                           {"bin_range", {binning.range.lo, binning.range.hi}},
                           {"candidates", grid},
                           {"criterion", "max validation CAI_0.5; ties: higher validation Acc, lower code, "
                                         "kind order DA < AA < SC"}};
  }
  write_json_file(report_dir() / "report.json", report);
  return report;
}

void Experiment::report(const EvalReport& report) {
  const auto gen = load_gen();
  emit_report(report, report_dir(), gen.get(), config_.traversal_steps, config_.traversal_images,
              derive_seed(config_.seed, 0, salt::kTraversal));
}

EvalReport Experiment::run(const RunOptions& options) {
  log_ = options.log;
  EvalReport result;
  bool have_report = false;
  const Stage order[] = {Stage::kData, Stage::kGenerator, Stage::kBaseline, Stage::kScan,
                         Stage::kInterventions, Stage::kEvaluate, Stage::kReport};
  for (Stage stage : order) {
    if (static_cast<int>(stage) > static_cast<int>(options.until)) break;
    const bool done = stage_done(stage);
    try {
      if (stage == Stage::kEvaluate) {
        if (done) {
          result = read_json_file(report_dir() / "report.json").get<EvalReport>();
        } else {
          result = evaluate();
        }
        have_report = true;
      } else if (stage == Stage::kReport) {
        if (!have_report) result = read_json_file(report_dir() / "report.json").get<EvalReport>();
        report(result);
      } else if (!done) {
        switch (stage) {
          case Stage::kData: data(); break;
          case Stage::kGenerator: generator(); break;
          case Stage::kBaseline: baseline(); break;
          case Stage::kScan: scan(); break;
          case Stage::kInterventions: interventions(); break;
          default: break;
        }
      } else {
        log("stage " + to_string(stage) + " already complete; skipping");
      }
      if (!done) mark_done(stage);
    } catch (const std::exception& e) {
      const bool input = dynamic_cast<const InputError*>(&e) != nullptr;
      write_json_file(out_ / "failure.json", {{"stage", to_string(stage)}, {"error", e.what()}});
      throw StageError(stage, e.what(), input);
    }
  }
  if (fs::exists(out_ / "failure.json")) fs::remove(out_ / "failure.json");
  return result;
}

}  // namespace factorlab

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

#include "factorlab/interventions.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "factorlab/checkpoint.hpp"
#include "factorlab/error.hpp"
#include "factorlab/nn/image_tensor.hpp"
#include "factorlab/rng.hpp"

namespace factorlab {

namespace {

constexpr size_t kEvalChunk = 256;

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t j = 0; j < logits.size(); ++j) z += p[j] = std::exp(logits[j] - mx);
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> row_of(const nn::Tensor& t, int i) {
  const float* r = t.sample(i);
  return std::vector<double>(r, r + t.per_sample());
}

SyntheticBatch batch_of(std::span<const SyntheticRecord* const> records, int i, int n_bins,
                        int image_size) {
  SyntheticBatch batch;
  std::vector<const Image*> images;
  images.reserve(records.size());
  for (const auto* rec : records) {
    images.push_back(&rec->image);
    batch.labels.push_back(rec->label);
    batch.code_bins.push_back(code_bin(rec->code.c.at(static_cast<size_t>(i)), n_bins));
  }
  batch.images = nn::images_to_tensor(std::span<const Image* const>(images), image_size);
  return batch;
}

int argmax_row(const nn::Tensor& t, int i) {
  const float* r = t.sample(i);
  return static_cast<int>(std::max_element(r, r + t.per_sample()) - r);
}

}  // namespace

std::string to_string(InterventionKind kind) {
  switch (kind) {
    case InterventionKind::kDA: return "DA";
    case InterventionKind::kAA: return "AA";
    case InterventionKind::kSC: return "SC";
  }
  return "?";
}

InterventionKind parse_intervention_kind(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char ch) { return std::toupper(ch); });
  if (up == "DA") return InterventionKind::kDA;
  if (up == "AA") return InterventionKind::kAA;
  if (up == "SC") return InterventionKind::kSC;
  throw InputError("unknown intervention kind '" + name + "' (expected DA, AA or SC)");
}

std::string to_string(AaObjective objective) {
  switch (objective) {
    case AaObjective::kAscent: return "ascent";
    case AaObjective::kCapped: return "capped";
    case AaObjective::kConfusion: return "confusion";
  }
  return "?";
}

AaObjective parse_aa_objective(const std::string& name) {
  if (name == "ascent") return AaObjective::kAscent;
  if (name == "capped") return AaObjective::kCapped;
  if (name == "confusion") return AaObjective::kConfusion;
  throw InputError("unknown aa_objective '" + name + "' (expected ascent, capped or confusion)");
}

void InterventionConfig::validate(int d_c) const {
  if (factor_index < 0 || factor_index >= d_c)
    throw InputError("intervention: factor_index " + std::to_string(factor_index) + " outside [0, " +
                     std::to_string(d_c) + ")");
  if (!std::isfinite(da_multiplier) || da_multiplier <= 0) throw InputError("intervention: da_multiplier must be > 0");
  if (!std::isfinite(aa_weight) || aa_weight < 0) throw InputError("intervention: aa_weight must be finite and >= 0");
  if (!std::isfinite(sc_weight) || sc_weight < 0) throw InputError("intervention: sc_weight must be finite and >= 0");
  if (aa_bins < 2) throw InputError("intervention: aa_bins must be >= 2");
  if (aa_hidden < 1) throw InputError("intervention: aa_hidden must be >= 1");
}

void to_json(nlohmann::json& j, const InterventionConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},       {"factor_index", c.factor_index},
                     {"da_multiplier", c.da_multiplier}, {"aa_weight", c.aa_weight},
                     {"aa_bins", c.aa_bins},             {"aa_hidden", c.aa_hidden},
                     {"aa_objective", to_string(c.aa_objective)},
                     {"sc_weight", c.sc_weight},         {"sc_symmetric", c.sc_symmetric},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, InterventionConfig& c) {
  InterventionConfig d;
  c.kind = parse_intervention_kind(j.value("kind", to_string(d.kind)));
  c.factor_index = j.value("factor_index", d.factor_index);
  c.da_multiplier = j.value("da_multiplier", d.da_multiplier);
  c.aa_weight = j.value("aa_weight", d.aa_weight);
  c.aa_bins = j.value("aa_bins", d.aa_bins);
  c.aa_hidden = j.value("aa_hidden", d.aa_hidden);
  c.aa_objective = j.contains("aa_objective") ? parse_aa_objective(j.at("aa_objective").get<std::string>())
                                              : d.aa_objective;
  c.sc_weight = j.value("sc_weight", d.sc_weight);
  c.sc_symmetric = j.value("sc_symmetric", d.sc_symmetric);
  c.seed = j.value("seed", d.seed);
}

std::string intervention_name(InterventionKind kind, int factor_index) {
  return to_string(kind) + "-" + std::to_string(factor_index + 1);
}

// ---------------------------------------------------------------- DA

size_t synthetic_count(double multiplier, size_t test_size) {
  if (!(multiplier > 0) || !std::isfinite(multiplier)) throw InputError("da_multiplier must be > 0");
  // The guard keeps exact products such as 0.1 * 30 from rounding up.
  return static_cast<size_t>(std::ceil(multiplier * static_cast<double>(test_size) - 1e-9));
}

std::vector<Sample> augment_da(std::span<const Sample> train, const Generator& gen, int i,
                               size_t test_size, double multiplier,
                               std::span<const double> label_dist, uint64_t seed) {
  if (i < 0 || i >= gen.info().d_c) throw InputError("augment_da: code index out of range");
  const size_t n = synthetic_count(multiplier, test_size);
  auto records = sample_synthetic(gen, n, label_dist, CodeDistribution::kUniformEval,
                                  derive_seed(seed, static_cast<uint64_t>(i), salt::kSynthetic));
  std::vector<Sample> out(train.begin(), train.end());
  out.reserve(train.size() + n);
  for (auto& rec : records)
    out.push_back(Sample{std::move(rec.image), rec.label, rec.factors.value_or(std::vector<double>{})});
  return out;
}

// ---------------------------------------------------------------- AA

int code_bin(double value, int n_bins) {
  const double t = (value - kCodeLow) / (kCodeHigh - kCodeLow);
  return std::clamp(static_cast<int>(std::floor(t * n_bins)), 0, n_bins - 1);
}

SyntheticBatch make_synthetic_batch(std::span<const SyntheticRecord> pool, int i, int n_bins,
                                    size_t batch_size, uint64_t seed, int step) {
  if (pool.empty()) throw InputError("synthetic pool is empty");
  auto rng = stream_rng(seed, static_cast<uint64_t>(step), salt::kMixBatch);
  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  std::vector<const SyntheticRecord*> records;
  for (size_t k = 0; k < batch_size; ++k) records.push_back(&pool[pick(rng)]);
  return batch_of(records, i, n_bins, pool.front().image.height);
}

double capped_cross_entropy(const nn::Tensor& logits, std::span<const int> labels, nn::Tensor* d_logits,
                            double scale) {
  const auto probs = nn::softmax_rows(logits);
  const int k = static_cast<int>(logits.per_sample());
  const double cap = std::log(static_cast<double>(k));
  if (d_logits != nullptr) *d_logits = nn::Tensor(logits.n, k);
  double total = 0.0;
  for (int r = 0; r < logits.n; ++r) {
    const auto& p = probs[static_cast<size_t>(r)];
    const int y = labels[static_cast<size_t>(r)];
    const double ce = -std::log(std::max(p[static_cast<size_t>(y)], kProbEps));
    total += std::min(ce, cap);
    if (d_logits == nullptr || ce >= cap) continue;
    for (int j = 0; j < k; ++j)
      (*d_logits)(r, j) = static_cast<float>(scale * (p[static_cast<size_t>(j)] - (j == y ? 1.0 : 0.0)) / logits.n);
  }
  return total / logits.n;
}

double confusion_loss(const nn::Tensor& logits, nn::Tensor* d_logits, double scale) {
  const int k = static_cast<int>(logits.per_sample());
  if (logits.n == 0 || k == 0) throw InputError("confusion_loss: empty logits");
  if (d_logits != nullptr) *d_logits = nn::Tensor(logits.n, k);
  const auto probs = nn::softmax_rows(logits);
  double total = 0.0;
  for (int r = 0; r < logits.n; ++r) {
    const auto& p = probs[static_cast<size_t>(r)];
    // log-softmax from the logits keeps the value exact when p underflows.
    double mx = logits(r, 0);
    for (int j = 1; j < k; ++j) mx = std::max<double>(mx, logits(r, j));
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(logits(r, j) - mx);
    const double log_z = mx + std::log(z);
    for (int j = 0; j < k; ++j) total -= (logits(r, j) - log_z) / k;
    if (d_logits != nullptr)
      for (int j = 0; j < k; ++j)
        (*d_logits)(r, j) = static_cast<float>(scale * (p[static_cast<size_t>(j)] - 1.0 / k) / logits.n);
  }
  return total / logits.n;
}

AdversarialAlignment::AdversarialAlignment(int embedding_dim, int num_classes, int n_bins, int hidden,
                                           double lr, uint64_t seed)
    : embedding_dim_(embedding_dim),
      num_classes_(num_classes),
      n_bins_(n_bins),
      opt_({}, lr) {
  auto rng = stream_rng(seed, 0, salt::kAdversary);
  net_.add<nn::Linear>(embedding_dim + num_classes, hidden, rng);
  net_.add<nn::ReLU>();
  net_.add<nn::Linear>(hidden, n_bins, rng);
  opt_ = nn::Adam(net_.parameters(), lr);
}

nn::Tensor AdversarialAlignment::input(const nn::Tensor& embedding, std::span<const int> labels) const {
  if (static_cast<int>(embedding.per_sample()) != embedding_dim_)
    throw InputError("adversary: embedding width mismatch");
  nn::Tensor x(embedding.n, embedding_dim_ + num_classes_);
  for (int r = 0; r < embedding.n; ++r) {
    std::copy(embedding.sample(r), embedding.sample(r) + embedding_dim_, x.sample(r));
    x(r, embedding_dim_ + labels[static_cast<size_t>(r)]) = 1.0f;
  }
  return x;
}

AdversarialAlignment::StepStats AdversarialAlignment::adversary_step(const Classifier& clf,
                                                                     const SyntheticBatch& batch) {
  const nn::Tensor x = input(clf.embedding_of(batch.images), batch.labels);
  opt_.zero_grad();
  nn::Tape tape;
  const nn::Tensor out = net_.forward(x, tape);
  nn::Tensor d;
  StepStats stats;
  stats.loss = cross_entropy(out, batch.code_bins, &d);
  net_.backward(tape, d, false);
  opt_.step();
  int correct = 0;
  for (int r = 0; r < out.n; ++r) correct += argmax_row(out, r) == batch.code_bins[static_cast<size_t>(r)];
  stats.accuracy = 100.0 * correct / std::max(out.n, 1);
  return stats;
}

AdversarialAlignment::StepStats AdversarialAlignment::classifier_gradients(Classifier& clf,
                                                                           const SyntheticBatch& batch,
                                                                           double weight, AaObjective objective) {
  const auto pass = clf.forward_train(batch.images);
  nn::Tensor d_logits;
  const double task = cross_entropy(pass.logits, batch.labels, &d_logits);
  StepStats stats;
  if (weight == 0.0) {
    clf.backward(pass, d_logits);
    stats.loss = task;
    return stats;
  }
  const nn::Tensor x = input(pass.embedding, batch.labels);
  nn::Tape tape;
  const nn::Tensor out = net_.forward(x, tape);
  nn::Tensor d_out;
  double adv = 0.0;
  switch (objective) {
    case AaObjective::kAscent: adv = -cross_entropy(out, batch.code_bins, &d_out, -weight); break;
    case AaObjective::kCapped: adv = -capped_cross_entropy(out, batch.code_bins, &d_out, -weight); break;
    case AaObjective::kConfusion: adv = confusion_loss(out, &d_out, weight); break;
  }
  const nn::Tensor dx = net_.backward(tape, d_out, true);
  net_.zero_grad();
  nn::Tensor d_emb(pass.embedding.n, embedding_dim_);
  for (int r = 0; r < dx.n; ++r) std::copy(dx.sample(r), dx.sample(r) + embedding_dim_, d_emb.sample(r));
  clf.backward(pass, d_logits, &d_emb);
  stats.loss = task + weight * adv;
  int correct = 0;
  for (int r = 0; r < out.n; ++r) correct += argmax_row(out, r) == batch.code_bins[static_cast<size_t>(r)];
  stats.accuracy = 100.0 * correct / std::max(out.n, 1);
  return stats;
}

AdversarialAlignment::StepStats AdversarialAlignment::evaluate(const Classifier& clf,
                                                               const SyntheticBatch& batch) const {
  const nn::Tensor out = net_.forward(input(clf.embedding_of(batch.images), batch.labels));
  StepStats stats;
  stats.loss = cross_entropy(out, batch.code_bins, nullptr);
  int correct = 0;
  for (int r = 0; r < out.n; ++r) correct += argmax_row(out, r) == batch.code_bins[static_cast<size_t>(r)];
  stats.accuracy = 100.0 * correct / std::max(out.n, 1);
  return stats;
}

std::vector<float> AdversarialAlignment::snapshot() const {
  auto* self = const_cast<AdversarialAlignment*>(this);
  std::vector<float> out;
  for (auto* p : self->net_.parameters()) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

namespace {

double heldout_accuracy(const Classifier& clf, const AdversarialAlignment& adv,
                        std::span<const SyntheticRecord> heldout, int i, int n_bins) {
  double correct = 0.0;
  for (size_t start = 0; start < heldout.size(); start += kEvalChunk) {
    std::vector<const SyntheticRecord*> records;
    for (size_t k = start; k < std::min(heldout.size(), start + kEvalChunk); ++k) records.push_back(&heldout[k]);
    const auto stats = adv.evaluate(clf, batch_of(records, i, n_bins, clf.image_size()));
    correct += stats.accuracy * static_cast<double>(records.size()) / 100.0;
  }
  return heldout.empty() ? 0.0 : 100.0 * correct / static_cast<double>(heldout.size());
}

}  // namespace

Classifier train_mixed(std::span<const Sample> train, std::span<const SyntheticRecord> pool,
                       const ClassifierConfig& config, int num_classes, int image_size,
                       const MixedTrainingOptions& options, std::optional<double>* final_adversary_acc) {
  if (pool.empty()) throw InputError("train_mixed: synthetic pool is empty");
  std::optional<AdversarialAlignment> adv;
  if (options.adversarial)
    adv.emplace(config.widths.back(), num_classes, options.n_bins, options.hidden, config.learning_rate,
                options.seed);
  const uint64_t batch_seed = derive_seed(options.seed, 0, salt::kMixBatch);
  const auto batch_size = static_cast<size_t>(config.batch_size);

  StepHook hook = [&](Classifier& clf, int step, CurvePoint& point) {
    const auto batch = make_synthetic_batch(pool, options.factor_index, options.n_bins, batch_size,
                                            batch_seed, step);
    if (adv) {
      const auto a = adv->adversary_step(clf, batch);
      point.adversary_loss = a.loss;
      point.adversary_acc = a.accuracy;
      point.extra_loss = adv->classifier_gradients(clf, batch, options.weight, options.objective).loss;
    } else {
      const auto pass = clf.forward_train(batch.images);
      nn::Tensor d_logits;
      point.extra_loss = cross_entropy(pass.logits, batch.labels, &d_logits);
      clf.backward(pass, d_logits);
    }
  };
  Classifier clf = run_training(train, config, num_classes, image_size, hook,
                                options.adversarial ? "AA" : "mixed");
  clf.metadata()["pool_size"] = pool.size();
  if (adv && final_adversary_acc != nullptr) {
    // Tail of the pool stands in for held-out records when no split is given.
    const size_t tail = std::min<size_t>(pool.size(), 1000);
    *final_adversary_acc = heldout_accuracy(clf, *adv, pool.subspan(pool.size() - tail), options.factor_index,
                                            options.n_bins);
  }
  return clf;
}

Classifier train_aa(std::span<const Sample> train, const Generator& gen, int i, size_t pool_size,
                    std::span<const double> label_dist, const ClassifierConfig& config,
                    const InterventionConfig& intervention) {
  intervention.validate(gen.info().d_c);
  if (i < 0 || i >= gen.info().d_c) throw InputError("train_aa: code index out of range");
  const auto pool = sample_synthetic(gen, pool_size, label_dist, CodeDistribution::kUniformEval,
                                     derive_seed(intervention.seed, static_cast<uint64_t>(i), salt::kSynthetic));
  MixedTrainingOptions options;
  options.factor_index = i;
  options.n_bins = intervention.aa_bins;
  options.hidden = intervention.aa_hidden;
  options.weight = intervention.aa_weight;
  options.objective = intervention.aa_objective;
  options.adversarial = true;
  options.seed = derive_seed(intervention.seed, static_cast<uint64_t>(i), salt::kAdversary);
  return train_mixed(train, pool, config, gen.info().num_classes, gen.info().image_size, options);
}

double adversary_probe(const Classifier& clf, std::span<const SyntheticRecord> train_pool,
                       std::span<const SyntheticRecord> heldout, int i, int n_bins, int hidden, int steps,
                       size_t batch_size, double lr, uint64_t seed) {
  AdversarialAlignment adv(clf.embedding_dim(), clf.num_classes(), n_bins, hidden, lr,
                           derive_seed(seed, 0, salt::kProbe));
  const uint64_t batch_seed = derive_seed(seed, 1, salt::kProbe);
  for (int step = 0; step < steps; ++step)
    adv.adversary_step(clf, make_synthetic_batch(train_pool, i, n_bins, batch_size, batch_seed, step));
  return heldout_accuracy(clf, adv, heldout, i, n_bins);
}

// ---------------------------------------------------------------- SC

double kl_probs(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw InputError("kl: distributions differ in length");
  double kl = 0.0;
  for (size_t j = 0; j < p.size(); ++j)
    kl += p[j] * (std::log(std::max(p[j], kProbEps)) - std::log(std::max(q[j], kProbEps)));
  return kl;
}

double kl_divergence(std::span<const double> p_logits, std::span<const double> q_logits,
                     std::vector<double>* grad_p, std::vector<double>* grad_q) {
  if (p_logits.size() != q_logits.size() || p_logits.empty()) throw InputError("kl: logits differ in length");
  const auto p = softmax(p_logits);
  const auto q = softmax(q_logits);
  const size_t k = p.size();
  const double kl = kl_probs(p, q);
  if (grad_q != nullptr) {
    // Clamped entries are constant in the loss.
    double mass = 0.0;
    for (size_t j = 0; j < k; ++j)
      if (q[j] > kProbEps) mass += p[j];
    grad_q->assign(k, 0.0);
    for (size_t j = 0; j < k; ++j) (*grad_q)[j] = q[j] * mass - (q[j] > kProbEps ? p[j] : 0.0);
  }
  if (grad_p != nullptr) {
    double mass = 0.0;
    for (size_t j = 0; j < k; ++j)
      if (p[j] > kProbEps) mass += p[j];
    grad_p->assign(k, 0.0);
    for (size_t j = 0; j < k; ++j) {
      const double l = std::log(std::max(p[j], kProbEps)) - std::log(std::max(q[j], kProbEps));
      (*grad_p)[j] = p[j] * (l - kl) + (p[j] > kProbEps ? p[j] : 0.0) - p[j] * mass;
    }
  }
  return kl;
}

double consistency_loss(const nn::Tensor& ref_logits, const nn::Tensor& cf_logits, bool symmetric,
                        nn::Tensor* d_ref, nn::Tensor* d_cf) {
  if (!ref_logits.same_shape(cf_logits) || ref_logits.n == 0)
    throw InputError("consistency_loss: logits must be non-empty and equal in shape");
  const double n = ref_logits.n;
  if (d_ref != nullptr) *d_ref = nn::Tensor(ref_logits.n, static_cast<int>(ref_logits.per_sample()));
  if (d_cf != nullptr) *d_cf = nn::Tensor(cf_logits.n, static_cast<int>(cf_logits.per_sample()));
  double total = 0.0;
  std::vector<double> gp, gq, gp2, gq2;
  for (int r = 0; r < ref_logits.n; ++r) {
    const auto a = row_of(ref_logits, r);
    const auto b = row_of(cf_logits, r);
    if (!symmetric) {
      total += kl_divergence(a, b, nullptr, d_cf != nullptr ? &gq : nullptr);
      if (d_cf != nullptr)
        for (size_t j = 0; j < gq.size(); ++j) (*d_cf)(r, static_cast<int>(j)) = static_cast<float>(gq[j] / n);
      continue;
    }
    const bool grads = d_ref != nullptr || d_cf != nullptr;
    total += 0.5 * kl_divergence(a, b, grads ? &gp : nullptr, grads ? &gq : nullptr);
    total += 0.5 * kl_divergence(b, a, grads ? &gq2 : nullptr, grads ? &gp2 : nullptr);
    for (size_t j = 0; grads && j < gp.size(); ++j) {
      if (d_ref != nullptr) (*d_ref)(r, static_cast<int>(j)) = static_cast<float>(0.5 * (gp[j] + gp2[j]) / n);
      if (d_cf != nullptr) (*d_cf)(r, static_cast<int>(j)) = static_cast<float>(0.5 * (gq[j] + gq2[j]) / n);
    }
  }
  return total / n;
}

double sc_loss(const Classifier& clf, const Generator& gen, std::span<const LatentCode> codes, int i,
               std::span<const double> c_prime, bool symmetric) {
  if (codes.empty()) throw InputError("sc_loss: empty code batch");
  if (c_prime.size() != codes.size()) throw InputError("sc_loss: one replacement value per code required");
  double total = 0.0;
  for (size_t start = 0; start < codes.size(); start += kEvalChunk) {
    const size_t len = std::min(kEvalChunk, codes.size() - start);
    const auto chunk = codes.subspan(start, len);
    std::vector<LatentCode> edited;
    edited.reserve(len);
    for (size_t k = 0; k < len; ++k) edited.push_back(replace_code(chunk[k], i, c_prime[start + k]));
    const auto ref = gen.generate_batch(chunk);
    const auto cf = gen.generate_batch(edited);
    const int size = gen.info().image_size;
    total += static_cast<double>(len) *
             consistency_loss(clf.logits_of(nn::images_to_tensor(ref, size)),
                              clf.logits_of(nn::images_to_tensor(cf, size)), symmetric, nullptr, nullptr);
  }
  return total / static_cast<double>(codes.size());
}

namespace {

std::vector<double> draw_replacements(size_t n, uint64_t seed) {
  std::vector<double> out(n);
  for (size_t k = 0; k < n; ++k) {
    auto rng = stream_rng(seed, k, salt::kConsistency);
    out[k] = std::uniform_real_distribution<double>(kCodeLow, kCodeHigh)(rng);
  }
  return out;
}

}  // namespace

double sc_loss(const Classifier& clf, const Generator& gen, std::span<const LatentCode> codes, int i,
               uint64_t seed, bool symmetric) {
  return sc_loss(clf, gen, codes, i, draw_replacements(codes.size(), seed), symmetric);
}

Classifier train_sc(std::span<const Sample> train, const Generator& gen, int i,
                    std::span<const double> label_dist, const ClassifierConfig& config,
                    const InterventionConfig& intervention) {
  intervention.validate(gen.info().d_c);
  if (i < 0 || i >= gen.info().d_c) throw InputError("train_sc: code index out of range");
  const GeneratorInfo& info = gen.info();
  if (intervention.sc_weight == 0.0)
    return run_training(train, config, info.num_classes, info.image_size, {}, "SC");

  const uint64_t base = derive_seed(intervention.seed, static_cast<uint64_t>(i), salt::kConsistency);
  const auto batch_size = static_cast<size_t>(config.batch_size);
  const std::vector<double> dist(label_dist.begin(), label_dist.end());
  StepHook hook = [&](Classifier& clf, int step, CurvePoint& point) {
    const uint64_t s = derive_seed(base, static_cast<uint64_t>(step), salt::kConsistency);
    const auto codes = sample_codes(info, batch_size, dist, CodeDistribution::kUniformEval, s);
    const auto c_prime = draw_replacements(codes.size(), s);
    std::vector<LatentCode> edited;
    edited.reserve(codes.size());
    for (size_t k = 0; k < codes.size(); ++k) edited.push_back(replace_code(codes[k], i, c_prime[k]));
    const nn::Tensor x_ref = nn::images_to_tensor(gen.generate_batch(codes), info.image_size);
    const nn::Tensor x_cf = nn::images_to_tensor(gen.generate_batch(edited), info.image_size);
    const auto cf = clf.forward_train(x_cf);
    nn::Tensor d_ref, d_cf;
    if (intervention.sc_symmetric) {
      const auto ref = clf.forward_train(x_ref);
      point.extra_loss = consistency_loss(ref.logits, cf.logits, true, &d_ref, &d_cf);
      for (auto& v : d_ref.data) v *= static_cast<float>(intervention.sc_weight);
      clf.backward(ref, d_ref);
    } else {
      point.extra_loss = consistency_loss(clf.logits_of(x_ref), cf.logits, false, nullptr, &d_cf);
    }
    for (auto& v : d_cf.data) v *= static_cast<float>(intervention.sc_weight);
    clf.backward(cf, d_cf);
  };
  return run_training(train, config, info.num_classes, info.image_size, hook, "SC");
}

// ---------------------------------------------------------------- dispatch

Classifier apply_intervention(const InterventionConfig& config, const InterventionContext& ctx) {
  if (!ctx.generator) throw InputError("apply_intervention: no generator supplied");
  const Generator& gen = *ctx.generator;
  config.validate(gen.info().d_c);
  if (ctx.label_dist.size() != static_cast<size_t>(ctx.num_classes))
    throw InputError("apply_intervention: label distribution length differs from class count");
  const int i = config.factor_index;
  const size_t n_syn = synthetic_count(config.da_multiplier, ctx.test_size);

  auto build = [&]() -> Classifier {
    switch (config.kind) {
      case InterventionKind::kDA: {
        const auto augmented = augment_da(ctx.train, gen, i, ctx.test_size, config.da_multiplier, ctx.label_dist,
                                          config.seed);
        Classifier clf = run_training(augmented, ctx.classifier, ctx.num_classes, ctx.image_size, {}, "DA");
        clf.metadata()["augmented_size"] = augmented.size();
        clf.metadata()["synthetic_size"] = n_syn;
        return clf;
      }
      case InterventionKind::kAA:
        return train_aa(ctx.train, gen, i, n_syn, ctx.label_dist, ctx.classifier, config);
      case InterventionKind::kSC:
        return train_sc(ctx.train, gen, i, ctx.label_dist, ctx.classifier, config);
    }
    throw InputError("apply_intervention: unknown kind");
  };
  Classifier clf = build();
  nlohmann::json record{{"intervention", config}, {"classifier", ctx.classifier}};
  clf.metadata()["intervention"] = config;
  clf.metadata()["intervention_name"] = intervention_name(config.kind, i);
  clf.metadata()["config_hash"] = config_hash(record);
  clf.metadata()["generator_kind"] = gen.info().kind;
  return clf;
}

}  // namespace factorlab

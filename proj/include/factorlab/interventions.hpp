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

// Mitigation strategies that retrain a classifier for invariance to one
// generator code c_i: data augmentation (DA), adversarial alignment (AA) and
// semantic consistency (SC). Every run starts from a fresh initialization.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "factorlab/factorworld.hpp"
#include "factorlab/generative.hpp"
#include "factorlab/nn/nn.hpp"
#include "factorlab/task.hpp"

namespace factorlab {

enum class InterventionKind { kDA, kAA, kSC };

std::string to_string(InterventionKind kind);
// Accepts "DA", "AA", "SC" in any case.
InterventionKind parse_intervention_kind(const std::string& name);

// What the classifier does to the adversary. kAscent maximizes its
// cross-entropy outright; kCapped stops pushing a sample once its
// cross-entropy reaches chance (log bins); kConfusion pulls the adversary's
// output toward uniform.
enum class AaObjective { kAscent, kCapped, kConfusion };

std::string to_string(AaObjective objective);
// Accepts "ascent", "capped", "confusion".
AaObjective parse_aa_objective(const std::string& name);

struct InterventionConfig {
  InterventionKind kind = InterventionKind::kDA;
  int factor_index = 0;
  double da_multiplier = 10.0;
  double aa_weight = 1.0;
  int aa_bins = 10;
  int aa_hidden = 64;
  AaObjective aa_objective = AaObjective::kCapped;
  double sc_weight = 5.0;
  bool sc_symmetric = false;
  uint64_t seed = 0;

  void validate(int d_c) const;
};

void to_json(nlohmann::json& j, const InterventionConfig& c);
void from_json(const nlohmann::json& j, InterventionConfig& c);

// "DA-3" style row label; codes are printed 1-based.
std::string intervention_name(InterventionKind kind, int factor_index);

// ---------------------------------------------------------------- DA

// Number of synthetic samples appended: ceil(multiplier * test_size).
size_t synthetic_count(double multiplier, size_t test_size);

// Original samples followed by ceil(multiplier * test_size) generator
// samples with every code ~ U(-2, 2) and stratified labels. The synthetic
// stream depends on (seed, i).
std::vector<Sample> augment_da(std::span<const Sample> train, const Generator& gen, int i,
                               size_t test_size, double multiplier,
                               std::span<const double> label_dist, uint64_t seed);

// ---------------------------------------------------------------- AA

// Equal-width bin of a code value over [-2, 2]; values outside clamp.
int code_bin(double value, int n_bins);

struct SyntheticBatch {
  nn::Tensor images;
  std::vector<int> labels;
  std::vector<int> code_bins;
};

// Batch `step` drawn with replacement from a synthetic pool.
SyntheticBatch make_synthetic_batch(std::span<const SyntheticRecord> pool, int i, int n_bins,
                                    size_t batch_size, uint64_t seed, int step);

// Cross-entropy of softmax(logits) against the uniform distribution, mean
// over rows; minimal (log k) when every row is uniform. d_logits is scaled.
double confusion_loss(const nn::Tensor& logits, nn::Tensor* d_logits, double scale = 1.0);

// Mean over rows of min(CE_r, log k). Rows at or past the cap get no
// gradient; the rest get scale * d CE_r / n.
double capped_cross_entropy(const nn::Tensor& logits, std::span<const int> labels, nn::Tensor* d_logits,
                            double scale = 1.0);

// Adversary head on (pooled embedding, one-hot label) predicting the bin of
// c_i, plus the two alternating phases. The adversary step never touches
// classifier parameters; the classifier phase never updates the adversary.
class AdversarialAlignment {
 public:
  AdversarialAlignment(int embedding_dim, int num_classes, int n_bins, int hidden, double lr,
                       uint64_t seed);

  struct StepStats {
    double loss = 0.0;
    double accuracy = 0.0;  // percent
  };

  // Updates the adversary on the frozen classifier's embeddings.
  StepStats adversary_step(const Classifier& clf, const SyntheticBatch& batch);
  // Accumulates classifier gradients of task CE on the synthetic batch plus
  // weight * the adversarial term chosen by `objective`: -CE, -capped CE or
  // confusion_loss. Adversary gradients are discarded.
  StepStats classifier_gradients(Classifier& clf, const SyntheticBatch& batch, double weight,
                                 AaObjective objective = AaObjective::kAscent);

  StepStats evaluate(const Classifier& clf, const SyntheticBatch& batch) const;

  std::vector<nn::Parameter*> parameters() { return net_.parameters(); }
  std::vector<float> snapshot() const;

 private:
  nn::Tensor input(const nn::Tensor& embedding, std::span<const int> labels) const;

  int embedding_dim_, num_classes_, n_bins_;
  nn::Sequential net_;
  nn::Adam opt_;
};

struct MixedTrainingOptions {
  int factor_index = 0;
  int n_bins = 10;
  int hidden = 64;
  double weight = 0.0;
  AaObjective objective = AaObjective::kAscent;
  // false: plain task training on the real + synthetic mix, no adversary.
  bool adversarial = true;
  uint64_t seed = 0;
};

// Real minibatches (task CE) alternated with synthetic minibatches of the
// same size (task CE and, when adversarial, the AA phases).
Classifier train_mixed(std::span<const Sample> train, std::span<const SyntheticRecord> pool,
                       const ClassifierConfig& config, int num_classes, int image_size,
                       const MixedTrainingOptions& options,
                       std::optional<double>* final_adversary_acc = nullptr);

Classifier train_aa(std::span<const Sample> train, const Generator& gen, int i,
                    size_t pool_size, std::span<const double> label_dist,
                    const ClassifierConfig& config, const InterventionConfig& intervention);

// Held-out accuracy (percent) of a fresh adversary trained for `steps` steps
// against the frozen classifier.
double adversary_probe(const Classifier& clf, std::span<const SyntheticRecord> train_pool,
                       std::span<const SyntheticRecord> heldout, int i, int n_bins, int hidden,
                       int steps, size_t batch_size, double lr, uint64_t seed);

// ---------------------------------------------------------------- SC

// KL(softmax(p_logits) || softmax(q_logits)) for one row, each probability
// clamped at kProbEps inside the logs. Gradients are w.r.t. the logits.
double kl_divergence(std::span<const double> p_logits, std::span<const double> q_logits,
                     std::vector<double>* grad_p = nullptr, std::vector<double>* grad_q = nullptr);
// KL on probability vectors directly.
double kl_probs(std::span<const double> p, std::span<const double> q);

// Mean over rows; forward mode treats the first argument as a constant
// reference, symmetric mode averages both directions with gradients to both.
double consistency_loss(const nn::Tensor& ref_logits, const nn::Tensor& cf_logits, bool symmetric,
                        nn::Tensor* d_ref, nn::Tensor* d_cf);

// For each code draws c_i' ~ U(-2, 2) from stream (seed, k) and returns the
// mean KL between predictions on the original and the edited image.
double sc_loss(const Classifier& clf, const Generator& gen, std::span<const LatentCode> codes, int i,
               uint64_t seed, bool symmetric = false);
double sc_loss(const Classifier& clf, const Generator& gen, std::span<const LatentCode> codes, int i,
               std::span<const double> c_prime, bool symmetric = false);

Classifier train_sc(std::span<const Sample> train, const Generator& gen, int i,
                    std::span<const double> label_dist, const ClassifierConfig& config,
                    const InterventionConfig& intervention);

// ---------------------------------------------------------------- dispatch

struct InterventionContext {
  std::span<const Sample> train;
  size_t test_size = 0;
  GeneratorHandle generator;
  std::vector<double> label_dist;
  ClassifierConfig classifier;
  int num_classes = 5;
  int image_size = 32;
};

// Retrains from scratch with the chosen intervention. Metadata records the
// intervention config, its hash and (DA) the augmented set size.
Classifier apply_intervention(const InterventionConfig& config, const InterventionContext& context);

}  // namespace factorlab

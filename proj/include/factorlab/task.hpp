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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "factorlab/factorworld.hpp"
#include "factorlab/image.hpp"
#include "factorlab/nn/nn.hpp"

namespace factorlab {

struct ClassifierConfig {
  // Four 3x3 conv blocks (strides 1, 2, 2, 2), ReLU, global average pool,
  // one linear layer. The last width is the embedding dimension.
  std::vector<int> widths{32, 64, 128, 128};
  int epochs = 5;
  int batch_size = 64;
  double learning_rate = 1e-3;
  uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

struct CurvePoint {
  int step = 0;
  int epoch = 0;
  double task_loss = 0.0;
  double extra_loss = 0.0;  // intervention term (SC consistency, AA adversarial)
  double adversary_loss = 0.0;
  double adversary_acc = 0.0;
};

class Classifier {
 public:
  Classifier(const ClassifierConfig& config, int num_classes, int image_size);

  Classifier(Classifier&&) = default;
  Classifier& operator=(Classifier&&) = default;

  // Rows of class probabilities.
  std::vector<std::vector<double>> predict(std::span<const Image> images) const;
  std::vector<int> predict_labels(std::span<const Image> images) const;
  // Post-pooling feature vectors.
  std::vector<std::vector<float>> embed(std::span<const Image> images) const;

  nn::Tensor embedding_of(const nn::Tensor& x) const { return trunk_.forward(x); }
  nn::Tensor logits_of_embedding(const nn::Tensor& e) const { return head_.forward(e); }
  nn::Tensor logits_of(const nn::Tensor& x) const { return head_.forward(trunk_.forward(x)); }

  const nn::Linear& head() const { return static_cast<const nn::Linear&>(head_.layer(0)); }
  int num_classes() const { return num_classes_; }
  int image_size() const { return image_size_; }
  int embedding_dim() const { return config_.widths.back(); }
  const ClassifierConfig& config() const { return config_; }

  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }
  std::vector<CurvePoint>& curve() { return curve_; }
  const std::vector<CurvePoint>& curve() const { return curve_; }

  std::vector<nn::Parameter*> parameters();
  // Flat copy of every parameter value, for equality checks.
  std::vector<float> snapshot() const;

  void save(const std::filesystem::path& path) const;
  static Classifier load(const std::filesystem::path& path);

  struct Pass {
    nn::Tape trunk, head;
    nn::Tensor embedding;
    nn::Tensor logits;
  };
  Pass forward_train(const nn::Tensor& x) const;
  // Accumulates parameter gradients for dL/dlogits plus an optional extra
  // dL/dembedding.
  void backward(const Pass& pass, const nn::Tensor& d_logits, const nn::Tensor* d_embedding = nullptr);

 private:
  ClassifierConfig config_;
  int num_classes_;
  int image_size_;
  nn::Sequential trunk_;
  nn::Sequential head_;
  nlohmann::json metadata_;
  std::vector<CurvePoint> curve_;
};

// Mean cross-entropy of logits against labels and its logit gradient.
double cross_entropy(const nn::Tensor& logits, std::span<const int> labels, nn::Tensor* d_logits,
                     double scale = 1.0);

// Called once per step after the real-batch backward pass and before the
// optimizer step; may accumulate further gradients into the classifier.
using StepHook = std::function<void(Classifier& clf, int step, CurvePoint& point)>;

// Seeded minibatch training with Adam for a fixed number of epochs over
// `train`. With no hook this is plain cross-entropy training.
Classifier run_training(std::span<const Sample> train, const ClassifierConfig& config,
                        int num_classes, int image_size, const StepHook& hook = {},
                        const std::string& recipe = "baseline");

Classifier train_classifier(std::span<const Sample> train, const ClassifierConfig& config,
                            int num_classes, int image_size);

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve);

std::vector<const Image*> image_pointers(std::span<const Sample> samples);
std::vector<int> labels_of(std::span<const Sample> samples);

}  // namespace factorlab

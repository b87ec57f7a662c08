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
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "factorlab/factorworld.hpp"
#include "factorlab/generative.hpp"
#include "factorlab/nn/nn.hpp"

namespace factorlab {

struct InfoGanConfig {
  int d_z = 16;
  int d_c = kDefaultCodeCount;
  int steps = 3000;
  int batch_size = 32;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double info_weight = 1.0;
  uint64_t seed = 0;
  std::vector<int> g_widths{64, 32, 16};
  std::vector<int> d_widths{16, 32, 64};
  int d_hidden = 128;
  // Where a checkpoint is dumped when training diverges; empty disables it.
  std::filesystem::path diagnostics_dir;

  void validate() const;
};

void to_json(nlohmann::json& j, const InfoGanConfig& c);
void from_json(const nlohmann::json& j, InfoGanConfig& c);

struct GanStepLog {
  int step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double info = 0.0;
  double neg_log_prior = 0.0;
};

// Class-conditional InfoGAN. G: linear -> three upsample+conv stages ->
// sigmoid. D: two strided convs, one-hot y broadcast-concatenated to the
// feature map, a third strided conv, a dense trunk layer; the D (real/fake)
// and Q (code) heads both read that trunk layer.
class InfoGan : public Generator {
 public:
  InfoGan(const InfoGanConfig& config, int num_classes, int image_size);

  const GeneratorInfo& info() const override { return info_; }
  Image generate(const LatentCode& code) const override;
  std::vector<Image> generate_batch(std::span<const LatentCode> codes) const override;
  void save(const std::filesystem::path& path) const override;
  static InfoGan load(const std::filesystem::path& path);

  // Q head: predicted code vector per image.
  std::vector<std::vector<double>> predict_codes(std::span<const Image> images,
                                                 std::span<const int> labels) const;
  // D head: probability that each image is real.
  std::vector<double> discriminate(std::span<const Image> images, std::span<const int> labels) const;

  const InfoGanConfig& config() const { return config_; }
  std::vector<nn::Parameter*> generator_parameters() { return g_.parameters(); }
  std::vector<nn::Parameter*> discriminator_parameters();

  // Training internals.
  struct DiscriminatorPass {
    nn::Tape lower, upper, d_head, q_head;
    nn::Tensor logits;  // [n, 1]
    nn::Tensor codes;   // [n, d_c]
  };
  nn::Tensor generator_input(std::span<const LatentCode> codes) const;
  nn::Tensor run_generator(const nn::Tensor& input) const { return g_.forward(input); }
  nn::Tensor run_generator(const nn::Tensor& input, nn::Tape& tape) const { return g_.forward(input, tape); }
  DiscriminatorPass run_discriminator(const nn::Tensor& images, std::span<const int> labels) const;
  // Backprop of (dlogits, dcodes); returns dL/dimages when requested.
  nn::Tensor backward_discriminator(const DiscriminatorPass& pass, const nn::Tensor& d_logits,
                                    const nn::Tensor& d_codes, bool need_dx);
  void backward_generator(const nn::Tape& tape, const nn::Tensor& d_images) {
    g_.backward(tape, d_images, false);
  }

 private:
  nn::Tensor label_planes(std::span<const int> labels, int n, int h, int w) const;

  InfoGanConfig config_;
  GeneratorInfo info_;
  nn::Sequential g_;
  nn::Sequential d_lower_;
  nn::Sequential d_upper_;
  nn::Sequential d_head_;
  nn::Sequential q_head_;
  int lower_channels_ = 0;
};

struct InfoGanResult {
  std::shared_ptr<InfoGan> model;
  std::vector<GanStepLog> log;
};

// Alternating D/Q and G updates. The info term enters both the D/Q update
// (through the Q head and shared trunk) and the G update.
InfoGanResult train_infogan(std::span<const Sample> dataset, int num_classes, int image_size,
                            const InfoGanConfig& config);

// Pearson correlation between c_i and Q_i(G(z, c, y)) over n fresh
// training-prior samples, one entry per code.
std::vector<double> code_reconstruction_correlation(const InfoGan& gan, size_t n, uint64_t seed);

double pearson_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace factorlab

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

// Controllable generators and the latent-code machinery around them.
//
// A generator maps a LatentCode (nuisance noise z, info codes c, class y) to
// an image. Two implementations exist: the learned conditional InfoGAN
// (infogan.hpp) and an oracle that renders factor-world images with chosen
// codes wired to ground-truth factors.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "factorlab/factorworld.hpp"
#include "factorlab/image.hpp"

namespace factorlab {

inline constexpr int kDefaultCodeCount = 10;
inline constexpr double kCodeLow = -2.0;
inline constexpr double kCodeHigh = 2.0;
// Lower clamp for probabilities inside every log term.
inline constexpr double kProbEps = 1e-6;

struct LatentCode {
  std::vector<double> z;
  std::vector<double> c;
  int y = 0;

  friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

struct GeneratorInfo {
  std::string kind;
  int d_z = 16;
  int d_c = kDefaultCodeCount;
  int num_classes = 5;
  int image_size = 32;
  uint64_t seed = 0;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual const GeneratorInfo& info() const = 0;
  virtual Image generate(const LatentCode& code) const = 0;
  virtual std::vector<Image> generate_batch(std::span<const LatentCode> codes) const;
  // Ground-truth factor vector behind a code, when the generator knows it.
  virtual std::optional<std::vector<double>> factors(const LatentCode&) const { return std::nullopt; }
  virtual void save(const std::filesystem::path& path) const = 0;
};

using GeneratorHandle = std::shared_ptr<const Generator>;

GeneratorHandle load_generator(const std::filesystem::path& path);

// ---------------------------------------------------------------- losses

// 0.5 * ||c - q||^2: unit-variance Gaussian NLL of the codes without its
// additive constant.
double info_loss(std::span<const double> c, std::span<const double> q);
std::vector<double> info_loss_grad(std::span<const double> c, std::span<const double> q);
// -log p(c) under the standard-normal code prior. Logged, never optimized.
double code_neg_log_prior(std::span<const double> c);

struct GanLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double info = 0.0;  // batch mean of info_loss
};

// Discriminator outputs are probabilities; each is clamped to
// [kProbEps, 1 - kProbEps] inside the logs. g_loss is the non-saturating
// generator term plus info_weight * info.
GanLosses gan_step_losses(std::span<const double> d_real, std::span<const double> d_fake,
                          std::span<const std::vector<double>> q_out,
                          std::span<const std::vector<double>> codes, double info_weight);

struct GanLossGradients {
  std::vector<double> d_loss_wrt_real;
  std::vector<double> d_loss_wrt_fake;
  std::vector<double> g_loss_wrt_fake;
  std::vector<std::vector<double>> g_loss_wrt_q;
};
GanLossGradients gan_step_loss_gradients(std::span<const double> d_real,
                                         std::span<const double> d_fake,
                                         std::span<const std::vector<double>> q_out,
                                         std::span<const std::vector<double>> codes,
                                         double info_weight);

// ---------------------------------------------------------------- sampling

enum class CodeDistribution {
  kUniformEval,    // each c_i ~ U(-2, 2); evaluation and augmentation
  kTrainingPrior,  // each c_i ~ N(0, 1)
};

// Exact class counts for n draws from `dist`, largest-remainder rounding
// (ties go to the lower class index).
std::vector<size_t> stratified_counts(size_t n, std::span<const double> dist);

LatentCode sample_code(const GeneratorInfo& info, CodeDistribution c_dist, int label,
                       std::mt19937_64& rng);

// Stratified labels in a seeded random order; record k's z and c come from
// stream (seed, k).
std::vector<LatentCode> sample_codes(const GeneratorInfo& info, size_t n,
                                     std::span<const double> label_dist, CodeDistribution c_dist,
                                     uint64_t seed);

struct SyntheticRecord {
  Image image;
  int label = 0;
  LatentCode code;
  std::optional<std::vector<double>> factors;
};

std::vector<SyntheticRecord> sample_synthetic(const Generator& gen, size_t n,
                                              std::span<const double> label_dist,
                                              CodeDistribution c_dist, uint64_t seed);

// ---------------------------------------------------------------- editing

LatentCode replace_code(const LatentCode& code, int i, double value);

// (G(z, c, y), G(z, c with c_i <- c_prime, y)).
std::pair<Image, Image> counterfactual(const Generator& gen, const LatentCode& code, int i,
                                       double c_prime);

// n_images rows (fixed z, y, other codes) by n_steps columns sweeping c_i
// linearly over [-2, 2].
Image traversal_grid(const Generator& gen, int i, int n_steps, int n_images, uint64_t seed);

// ---------------------------------------------------------------- oracle

struct CodeMapping {
  int code = 0;
  int factor = 0;
  double scale = 1.0;
  double offset = 0.0;

  double apply(double c) const { return scale * c + offset; }
};

// Affine map sending [-2, 2] onto the factor's range.
CodeMapping default_code_mapping(const WorldSpec& spec, int code, int factor);

// Renders factor-world images: mapped codes set their factors, unmapped
// factors come from z through the normal CDF, and the render noise seed is
// a hash of z. Unmapped codes have no effect.
class OracleGenerator : public Generator {
 public:
  OracleGenerator(WorldSpec spec, std::vector<CodeMapping> mapping, int d_z = 16,
                  int d_c = kDefaultCodeCount);

  const GeneratorInfo& info() const override { return info_; }
  Image generate(const LatentCode& code) const override;
  std::optional<std::vector<double>> factors(const LatentCode& code) const override;
  void save(const std::filesystem::path& path) const override;

  const WorldSpec& spec() const { return spec_; }
  const std::vector<CodeMapping>& mapping() const { return mapping_; }

 private:
  uint64_t render_seed(const LatentCode& code) const;

  WorldSpec spec_;
  std::vector<CodeMapping> mapping_;
  GeneratorInfo info_;
};

GeneratorHandle oracle_generator(const WorldSpec& spec, std::vector<CodeMapping> mapping,
                                 int d_z = 16, int d_c = kDefaultCodeCount);

}  // namespace factorlab

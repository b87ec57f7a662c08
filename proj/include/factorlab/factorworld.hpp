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

// Procedural glyph images with known, controllable factors of variation.
//
// Every image shows one of K class glyphs on a gray background. Each factor
// drives one render rule; a factor with sensitivity s > 0 also attenuates the
// glyph contrast by (1 - s * t), t being the factor's normalized position in
// its range, which gives a known source of accuracy gaps.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "factorlab/image.hpp"

namespace factorlab {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double normalize(double v) const { return (v - lo) / (hi - lo); }
  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

enum class RenderEffect { kScale, kBrightness, kHue, kPositionX, kBackgroundLevel };

std::string to_string(RenderEffect effect);
RenderEffect render_effect_from_string(const std::string& name);

struct FactorSpec {
  std::string name;
  Interval range;
  RenderEffect effect = RenderEffect::kScale;
  double sensitivity = 0.0;
};

struct WorldSpec {
  int image_size = 32;
  int num_classes = 5;
  std::vector<FactorSpec> factors;
  // Per-pixel Gaussian noise added before the brightness gain.
  double noise_sigma = 0.1;
  // Glyph opacity before any sensitivity attenuation.
  double base_contrast = 1.0;

  // Five factors (size, brightness, hue, position_x, background), 32x32, K=5.
  static WorldSpec standard();

  void validate() const;
  int num_factors() const { return static_cast<int>(factors.size()); }
  // Index of the factor named `name`; throws InputError when absent.
  int factor_index(const std::string& name) const;
};

void to_json(nlohmann::json& j, const WorldSpec& spec);
void from_json(const nlohmann::json& j, WorldSpec& spec);

struct Sample {
  Image image;
  int label = 0;
  std::vector<double> factors;
};

struct BinPartition {
  std::string factor_id;
  std::vector<double> edges;
  std::vector<int> assignment;

  int num_bins() const { return static_cast<int>(edges.size()) - 1; }
  std::vector<size_t> counts() const;
};

// Product of (1 - s_f * t_f) over all factors, times base_contrast.
double contrast_factor(std::span<const double> factors, const WorldSpec& spec);

Sample render(std::span<const double> factors, int label, const WorldSpec& spec,
              uint64_t seed);

// Factors uniform over each range; labels uniform unless `label_dist` given.
// Sample k depends only on (spec, seed, k, label_dist).
std::vector<Sample> generate_dataset(const WorldSpec& spec, size_t n, uint64_t seed,
                                     const std::optional<std::vector<double>>& label_dist = {});

// Equal-width bins over `range`; out-of-range values clamp to the end bins.
BinPartition bin_assign(std::span<const double> values, int n_bins, Interval range,
                        std::string factor_id = {});

// CIE L* (D65) of one sRGB pixel and the image mean, in [0, 100].
double srgb_lightness(double r, double g, double b);
double compute_brightness(const Image& image);

// Column `factor` of the sample factor matrix.
std::vector<double> factor_column(std::span<const Sample> samples, int factor);

// Directory layout: {index:08d}.png, manifest.csv, spec.json.
void save_dataset(const std::filesystem::path& dir, std::span<const Sample> samples,
                  const WorldSpec& spec, uint64_t seed);

struct LoadedDataset {
  WorldSpec spec;
  uint64_t seed = 0;
  std::vector<Sample> samples;
};
LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace factorlab

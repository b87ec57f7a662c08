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

#include <cmath>
#include <filesystem>
#include <random>

#include "factorlab/error.hpp"
#include "factorlab/factorworld.hpp"

namespace factorlab {
namespace {

namespace fs = std::filesystem;

std::vector<double> midpoints(const WorldSpec& spec) {
  std::vector<double> out;
  for (const auto& f : spec.factors) out.push_back(0.5 * (f.range.lo + f.range.hi));
  return out;
}

// Independent CIE L* from the textbook piecewise definitions.
double reference_lightness(double v) {
  const double lin = v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
  const double eps = 216.0 / 24389.0;
  const double kappa = 24389.0 / 27.0;
  return lin > eps ? 116.0 * std::cbrt(lin) - 16.0 : kappa * lin;
}

// P(X <= k) for X ~ Binomial(n, p), summed in log space.
double binomial_cdf(int n, double p, int k) {
  double total = 0.0;
  for (int i = 0; i <= k; ++i) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) +
                            i * std::log(p) + (n - i) * std::log1p(-p);
    total += std::exp(log_term);
  }
  return total;
}

TEST(Render, MidpointContrastFollowsAttenuationRule) {
  WorldSpec spec = WorldSpec::standard();
  for (double s : {0.0, 0.3, 0.8, 1.0}) {
    spec.factors[1].sensitivity = s;
    EXPECT_DOUBLE_EQ(contrast_factor(midpoints(spec), spec), 1.0 - 0.5 * s);
  }
}

TEST(Render, SameInputsAreBitIdentical) {
  const WorldSpec spec = WorldSpec::standard();
  const auto f = midpoints(spec);
  const Sample a = render(f, 2, spec, 0);
  const Sample b = render(f, 2, spec, 0);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.factors, f);
  EXPECT_EQ(a.label, 2);
}

TEST(Render, PixelsStayInUnitRange) {
  WorldSpec spec = WorldSpec::standard();
  spec.noise_sigma = 0.5;
  const Sample s = render(midpoints(spec), 1, spec, 3);
  for (float v : s.image.pixels) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Render, BrightnessIsStrictlyMonotoneInFactor) {
  WorldSpec spec = WorldSpec::standard();
  spec.factors[1].sensitivity = 0.8;
  auto f = midpoints(spec);
  double previous = -1.0;
  for (int step = 0; step <= 10; ++step) {
    f[1] = step / 10.0;
    const double l = compute_brightness(render(f, 0, spec, 11).image);
    EXPECT_GT(l, previous) << "step " << step;
    previous = l;
  }
}

TEST(Render, OutOfRangeFactorIsInputError) {
  const WorldSpec spec = WorldSpec::standard();
  auto f = midpoints(spec);
  f[0] = 1.5;
  EXPECT_THROW(render(f, 0, spec, 0), InputError);
  EXPECT_THROW(render(std::vector<double>{0.5}, 0, spec, 0), InputError);
  EXPECT_THROW(render(midpoints(spec), 9, spec, 0), InputError);
}

TEST(Render, ClassesProduceDistinctGlyphs) {
  WorldSpec spec = WorldSpec::standard();
  spec.noise_sigma = 0.0;
  const auto f = midpoints(spec);
  for (int a = 0; a < spec.num_classes; ++a)
    for (int b = a + 1; b < spec.num_classes; ++b)
      EXPECT_FALSE(render(f, a, spec, 0).image == render(f, b, spec, 0).image) << a << " vs " << b;
}

TEST(Render, SensitivityLowersContrastAcrossBins) {
  WorldSpec spec = WorldSpec::standard();
  spec.factors[1].sensitivity = 0.8;
  auto f = midpoints(spec);
  double previous = 2.0;
  for (int bin = 0; bin < 10; ++bin) {
    f[1] = (bin + 0.5) / 10.0;
    const double c = contrast_factor(f, spec);
    EXPECT_LT(c, previous);
    previous = c;
  }
  spec.factors[1].sensitivity = 0.0;
  for (int bin = 0; bin < 10; ++bin) {
    f[1] = (bin + 0.5) / 10.0;
    EXPECT_DOUBLE_EQ(contrast_factor(f, spec), 1.0);
  }
}

TEST(GenerateDataset, ClassCountsWithinBinomialBounds) {
  // Probability that any of the five classes leaves [140, 260] at n = 1000.
  const double lower = binomial_cdf(1000, 0.2, 139);
  const double upper = 1.0 - binomial_cdf(1000, 0.2, 260);
  EXPECT_LE(5.0 * (lower + upper), 1e-3);

  WorldSpec spec = WorldSpec::standard();
  spec.image_size = 8;
  const auto data = generate_dataset(spec, 1000, 5);
  std::vector<int> counts(5, 0);
  for (const auto& s : data) ++counts[static_cast<size_t>(s.label)];
  for (int c : counts) {
    EXPECT_GE(c, 140);
    EXPECT_LE(c, 260);
  }
}

TEST(GenerateDataset, DeterministicAndOrderIndependent) {
  WorldSpec spec = WorldSpec::standard();
  spec.image_size = 16;
  const auto a = generate_dataset(spec, 20, 9);
  const auto b = generate_dataset(spec, 20, 9);
  const auto prefix = generate_dataset(spec, 5, 9);
  for (size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].image, b[k].image);
    EXPECT_EQ(a[k].factors, b[k].factors);
    EXPECT_EQ(a[k].label, b[k].label);
  }
  for (size_t k = 0; k < prefix.size(); ++k) EXPECT_EQ(prefix[k].image, a[k].image);
}

TEST(GenerateDataset, FactorsUniformWithinRanges) {
  WorldSpec spec = WorldSpec::standard();
  spec.image_size = 8;
  const auto data = generate_dataset(spec, 2000, 1);
  for (int f = 0; f < spec.num_factors(); ++f) {
    const auto col = factor_column(data, f);
    const auto& r = spec.factors[static_cast<size_t>(f)].range;
    double mean = 0.0;
    for (double v : col) {
      EXPECT_TRUE(r.contains(v));
      mean += r.normalize(v);
    }
    mean /= static_cast<double>(col.size());
    // Normalized mean of U(0,1) has sd 0.0065 at n = 2000.
    EXPECT_NEAR(mean, 0.5, 0.03);
  }
}

TEST(GenerateDataset, ZeroCountIsInputError) {
  EXPECT_THROW(generate_dataset(WorldSpec::standard(), 0, 1), InputError);
}

TEST(GenerateDataset, LabelDistributionIsRespected) {
  WorldSpec spec = WorldSpec::standard();
  spec.image_size = 8;
  const auto data = generate_dataset(spec, 500, 2, std::vector<double>{1, 0, 0, 0, 0});
  for (const auto& s : data) EXPECT_EQ(s.label, 0);
}

TEST(BinAssign, EqualWidthArithmetic) {
  const std::vector<double> v{-2.0, 0.0, 1.99};
  const auto p = bin_assign(v, 10, {-2.0, 2.0});
  EXPECT_EQ(p.assignment, (std::vector<int>{0, 5, 9}));
  ASSERT_EQ(p.edges.size(), 11u);
  EXPECT_DOUBLE_EQ(p.edges.front(), -2.0);
  EXPECT_DOUBLE_EQ(p.edges.back(), 2.0);
  for (size_t k = 1; k < p.edges.size(); ++k) EXPECT_LT(p.edges[k - 1], p.edges[k]);
}

TEST(BinAssign, UpperEdgeAndClamping) {
  const std::vector<double> v{2.0, 3.5, -7.0};
  EXPECT_EQ(bin_assign(v, 10, {-2.0, 2.0}).assignment, (std::vector<int>{9, 9, 0}));
}

TEST(BinAssign, InvalidInputs) {
  const std::vector<double> empty;
  const std::vector<double> one{0.0};
  EXPECT_THROW(bin_assign(empty, 10, {0, 1}), InputError);
  EXPECT_THROW(bin_assign(one, 1, {0, 1}), InputError);
  EXPECT_THROW(bin_assign(one, 10, {1, 1}), InputError);
}

TEST(BinAssign, PartitionProperty) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_bins = 2 + static_cast<int>(rng() % 15);
    std::vector<double> values(1 + rng() % 300);
    for (double& v : values) v = std::uniform_real_distribution<double>(-3, 3)(rng);
    const auto p = bin_assign(values, n_bins, {-2, 2});
    size_t total = 0;
    for (size_t c : p.counts()) total += c;
    EXPECT_EQ(total, values.size());
    for (int b : p.assignment) {
      EXPECT_GE(b, 0);
      EXPECT_LT(b, n_bins);
    }
  }
}

TEST(Brightness, BlackWhiteAndMidGray) {
  Image black(4, 4), white(4, 4), gray(4, 4);
  std::fill(white.pixels.begin(), white.pixels.end(), 1.0f);
  std::fill(gray.pixels.begin(), gray.pixels.end(), 0.5f);
  EXPECT_EQ(compute_brightness(black), 0.0);
  EXPECT_EQ(compute_brightness(white), 100.0);
  EXPECT_NEAR(compute_brightness(gray), reference_lightness(0.5), 1e-9);
  EXPECT_NEAR(compute_brightness(gray), 53.38896474111432, 1e-6);
}

TEST(Brightness, MatchesReferenceOnGrayRamp) {
  for (int k = 0; k <= 255; ++k) {
    const double v = k / 255.0;
    EXPECT_NEAR(srgb_lightness(v, v, v), reference_lightness(v), 1e-9) << k;
  }
}

TEST(Persistence, RoundTripKeepsFactorsExactlyAndPixelsTo8Bit) {
  WorldSpec spec = WorldSpec::standard();
  spec.image_size = 12;
  spec.factors[1].sensitivity = 0.4;
  const auto data = generate_dataset(spec, 6, 3);
  const fs::path dir = fs::temp_directory_path() / "factorlab_fw_roundtrip";
  fs::remove_all(dir);
  save_dataset(dir, data, spec, 3);
  EXPECT_TRUE(fs::exists(dir / "00000005.png"));
  EXPECT_TRUE(fs::exists(dir / "manifest.csv"));
  EXPECT_TRUE(fs::exists(dir / "spec.json"));
  const auto loaded = load_dataset(dir);
  EXPECT_EQ(loaded.seed, 3u);
  EXPECT_EQ(loaded.spec.factors[1].sensitivity, 0.4);
  ASSERT_EQ(loaded.samples.size(), data.size());
  for (size_t k = 0; k < data.size(); ++k) {
    EXPECT_EQ(loaded.samples[k].label, data[k].label);
    EXPECT_EQ(loaded.samples[k].factors, data[k].factors);
    for (size_t p = 0; p < data[k].image.pixels.size(); ++p)
      EXPECT_NEAR(loaded.samples[k].image.pixels[p], data[k].image.pixels[p], 0.5 / 255.0 + 1e-6);
  }
  fs::remove_all(dir);
}

TEST(WorldSpecJson, RoundTripAndValidation) {
  WorldSpec spec = WorldSpec::standard();
  spec.factors[2].sensitivity = 0.25;
  const nlohmann::json j = spec;
  const auto back = j.get<WorldSpec>();
  EXPECT_EQ(back.factors.size(), spec.factors.size());
  EXPECT_EQ(back.factors[2].sensitivity, 0.25);
  EXPECT_EQ(back.factors[3].effect, RenderEffect::kPositionX);
  EXPECT_EQ(j["factors"][1]["render_effect"], "brightness");

  WorldSpec bad = spec;
  bad.factors[0].range = {1.0, 1.0};
  EXPECT_THROW(bad.validate(), InputError);
  EXPECT_THROW(render_effect_from_string("sparkle"), InputError);
  EXPECT_THROW(spec.factor_index("missing"), InputError);
}

}  // namespace
}  // namespace factorlab

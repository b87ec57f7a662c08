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

#include "factorlab/factorworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "factorlab/error.hpp"
#include "factorlab/rng.hpp"

namespace factorlab {

namespace {

constexpr int kSupersample = 4;
constexpr int kMaxClasses = 6;

struct RenderParams {
  double radius = 0.6;       // glyph half-extent, normalized image units
  double center_x = 0.0;
  double hue = 0.0;
  double background = 0.7;
  double gain = 0.7;
};

double lerp(double a, double b, double t) { return a + (b - a) * t; }

RenderParams render_params(std::span<const double> factors, const WorldSpec& spec) {
  // Each render rule reads the normalized position of the factor driving it;
  // a rule without a driving factor sits at its midpoint.
  std::array<double, 5> t{0.5, 0.5, 0.5, 0.5, 0.5};
  for (size_t f = 0; f < spec.factors.size(); ++f) {
    const auto& fs = spec.factors[f];
    t[static_cast<size_t>(fs.effect)] = std::clamp(fs.range.normalize(factors[f]), 0.0, 1.0);
  }
  RenderParams p;
  p.radius = lerp(0.35, 0.75, t[static_cast<size_t>(RenderEffect::kScale)]);
  p.gain = lerp(0.35, 1.0, t[static_cast<size_t>(RenderEffect::kBrightness)]);
  p.hue = t[static_cast<size_t>(RenderEffect::kHue)];
  p.center_x = lerp(-0.2, 0.2, t[static_cast<size_t>(RenderEffect::kPositionX)]);
  p.background = lerp(0.55, 0.9, t[static_cast<size_t>(RenderEffect::kBackgroundLevel)]);
  return p;
}

// Point-in-glyph test in glyph-local coordinates (unit half-extent).
bool inside_glyph(int label, double px, double py) {
  switch (label) {
    case 0:  // disk
      return px * px + py * py <= 1.0;
    case 1:  // square
      return std::max(std::abs(px), std::abs(py)) <= 0.85;
    case 2: {  // triangle, apex up
      const double top = -0.9, base = 0.75, half_base = 0.9;
      if (py < top || py > base) return false;
      return std::abs(px) <= half_base * (py - top) / (base - top);
    }
    case 3:  // plus
      return (std::abs(px) <= 0.3 && std::abs(py) <= 0.95) ||
             (std::abs(py) <= 0.3 && std::abs(px) <= 0.95);
    case 4: {  // ring
      const double r2 = px * px + py * py;
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    default:  // diamond
      return std::abs(px) + std::abs(py) <= 1.0;
  }
}

std::array<double, 3> glyph_color(double hue) {
  // HSV with fixed saturation and low value: always darker than the
  // background, so attenuating contrast can only raise pixel values.
  const double s = 0.8, v = 0.3;
  const double h6 = std::fmod(hue, 1.0) * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  constexpr double kappa = 24389.0 / 27.0;  // (29/3)^3
  if (t > delta * delta * delta) return 116.0 * std::cbrt(t) - 16.0;
  return kappa * t;
}

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

}  // namespace

std::string to_string(RenderEffect effect) {
  switch (effect) {
    case RenderEffect::kScale: return "scale";
    case RenderEffect::kBrightness: return "brightness";
    case RenderEffect::kHue: return "hue";
    case RenderEffect::kPositionX: return "position_x";
    case RenderEffect::kBackgroundLevel: return "background_level";
  }
  return "unknown";
}

RenderEffect render_effect_from_string(const std::string& name) {
  for (auto e : {RenderEffect::kScale, RenderEffect::kBrightness, RenderEffect::kHue,
                 RenderEffect::kPositionX, RenderEffect::kBackgroundLevel})
    if (to_string(e) == name) return e;
  throw InputError("unknown render effect '" + name + "'");
}

WorldSpec WorldSpec::standard() {
  WorldSpec spec;
  spec.factors = {
      {"size", {0.5, 1.0}, RenderEffect::kScale, 0.0},
      {"brightness", {0.0, 1.0}, RenderEffect::kBrightness, 0.0},
      {"hue", {0.0, 1.0}, RenderEffect::kHue, 0.0},
      {"position_x", {-0.2, 0.2}, RenderEffect::kPositionX, 0.0},
      {"background", {0.55, 0.9}, RenderEffect::kBackgroundLevel, 0.0},
  };
  return spec;
}

void WorldSpec::validate() const {
  if (image_size < 8) throw InputError("image_size must be at least 8");
  if (num_classes < 2 || num_classes > kMaxClasses)
    throw InputError("num_classes must lie in [2, " + std::to_string(kMaxClasses) + "]");
  if (factors.empty()) throw InputError("world needs at least one factor");
  if (!(noise_sigma >= 0.0)) throw InputError("noise_sigma must be >= 0");
  if (!(base_contrast > 0.0 && base_contrast <= 1.0))
    throw InputError("base_contrast must lie in (0, 1]");
  for (const auto& f : factors) {
    if (!(f.range.lo < f.range.hi)) throw InputError("factor '" + f.name + "' has a degenerate range");
    if (!(f.sensitivity >= 0.0 && f.sensitivity <= 1.0))
      throw InputError("factor '" + f.name + "' sensitivity must lie in [0, 1]");
  }
}

int WorldSpec::factor_index(const std::string& name) const {
  for (size_t i = 0; i < factors.size(); ++i)
    if (factors[i].name == name) return static_cast<int>(i);
  throw InputError("unknown factor '" + name + "'");
}

void to_json(nlohmann::json& j, const WorldSpec& spec) {
  j = nlohmann::json{{"image_size", spec.image_size},
                     {"num_classes", spec.num_classes},
                     {"noise_sigma", spec.noise_sigma},
                     {"base_contrast", spec.base_contrast},
                     {"factors", nlohmann::json::array()}};
  for (const auto& f : spec.factors)
    j["factors"].push_back({{"name", f.name},
                            {"range", {f.range.lo, f.range.hi}},
                            {"render_effect", to_string(f.effect)},
                            {"sensitivity_strength", f.sensitivity}});
}

void from_json(const nlohmann::json& j, WorldSpec& spec) {
  WorldSpec defaults = WorldSpec::standard();
  spec.image_size = j.value("image_size", defaults.image_size);
  spec.num_classes = j.value("num_classes", defaults.num_classes);
  spec.noise_sigma = j.value("noise_sigma", defaults.noise_sigma);
  spec.base_contrast = j.value("base_contrast", defaults.base_contrast);
  if (j.contains("factors")) {
    spec.factors.clear();
    for (const auto& jf : j.at("factors")) {
      FactorSpec f;
      f.name = jf.at("name").get<std::string>();
      const auto& r = jf.at("range");
      f.range = {r.at(0).get<double>(), r.at(1).get<double>()};
      f.effect = render_effect_from_string(jf.at("render_effect").get<std::string>());
      f.sensitivity = jf.value("sensitivity_strength", 0.0);
      spec.factors.push_back(std::move(f));
    }
  } else {
    spec.factors = defaults.factors;
  }
}

std::vector<size_t> BinPartition::counts() const {
  std::vector<size_t> out(static_cast<size_t>(std::max(num_bins(), 0)), 0);
  for (int b : assignment) ++out[static_cast<size_t>(b)];
  return out;
}

double contrast_factor(std::span<const double> factors, const WorldSpec& spec) {
  double c = spec.base_contrast;
  for (size_t f = 0; f < spec.factors.size(); ++f) {
    const auto& fs = spec.factors[f];
    if (fs.sensitivity > 0.0)
      c *= 1.0 - fs.sensitivity * std::clamp(fs.range.normalize(factors[f]), 0.0, 1.0);
  }
  return c;
}

Sample render(std::span<const double> factors, int label, const WorldSpec& spec, uint64_t seed) {
  if (factors.size() != spec.factors.size())
    throw InputError("render: expected " + std::to_string(spec.factors.size()) + " factors, got " +
                     std::to_string(factors.size()));
  if (label < 0 || label >= spec.num_classes) throw InputError("render: label out of range");
  for (size_t f = 0; f < factors.size(); ++f)
    if (!std::isfinite(factors[f]) || !spec.factors[f].range.contains(factors[f]))
      throw InputError("render: factor '" + spec.factors[f].name + "' out of range");

  const RenderParams p = render_params(factors, spec);
  const double alpha = contrast_factor(factors, spec);
  const auto ink = glyph_color(p.hue);
  const int size = spec.image_size;

  std::mt19937_64 noise_rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Sample out;
  out.label = label;
  out.factors.assign(factors.begin(), factors.end());
  out.image = Image(size, size);
  const double sub = 1.0 / kSupersample;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        const double v = ((y + (sy + 0.5) * sub) / size) * 2.0 - 1.0;
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double u = ((x + (sx + 0.5) * sub) / size) * 2.0 - 1.0;
          if (inside_glyph(label, (u - p.center_x) / p.radius, v / p.radius)) ++hits;
        }
      }
      const double coverage = alpha * hits / double(kSupersample * kSupersample);
      for (int c = 0; c < 3; ++c) {
        double value = p.background * (1.0 - coverage) + ink[c] * coverage;
        if (spec.noise_sigma > 0.0) value += spec.noise_sigma * noise(noise_rng);
        value = std::clamp(value, 0.0, 1.0) * p.gain;
        out.image.at(y, x, c) = static_cast<float>(value);
      }
    }
  }
  return out;
}

std::vector<Sample> generate_dataset(const WorldSpec& spec, size_t n, uint64_t seed,
                                     const std::optional<std::vector<double>>& label_dist) {
  spec.validate();
  if (n == 0) throw InputError("generate_dataset: n must be positive");
  std::optional<std::discrete_distribution<int>> labels;
  if (label_dist) {
    if (label_dist->size() != static_cast<size_t>(spec.num_classes))
      throw InputError("generate_dataset: label distribution has wrong length");
    for (double w : *label_dist)
      if (!(w >= 0.0)) throw InputError("generate_dataset: negative label weight");
    labels.emplace(label_dist->begin(), label_dist->end());
  }

  std::vector<Sample> out;
  out.reserve(n);
  std::vector<double> factors(spec.factors.size());
  for (size_t k = 0; k < n; ++k) {
    auto rng = stream_rng(seed, k, salt::kDataset);
    for (size_t f = 0; f < factors.size(); ++f) {
      const auto& r = spec.factors[f].range;
      factors[f] = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    }
    int label = 0;
    if (labels) {
      auto dist = *labels;
      label = dist(rng);
    } else {
      label = std::uniform_int_distribution<int>(0, spec.num_classes - 1)(rng);
    }
    out.push_back(render(factors, label, spec, rng()));
  }
  return out;
}

BinPartition bin_assign(std::span<const double> values, int n_bins, Interval range,
                        std::string factor_id) {
  if (values.empty()) throw InputError("bin_assign: empty value vector");
  if (n_bins < 2) throw InputError("bin_assign: need at least two bins");
  if (!(range.lo < range.hi)) throw InputError("bin_assign: degenerate range");
  BinPartition part;
  part.factor_id = std::move(factor_id);
  part.edges.resize(static_cast<size_t>(n_bins) + 1);
  for (int b = 0; b <= n_bins; ++b) part.edges[b] = range.lo + range.width() * b / n_bins;
  part.edges.back() = range.hi;
  part.assignment.reserve(values.size());
  for (double v : values) {
    const double pos = std::floor(range.normalize(v) * n_bins);
    int bin = std::isnan(pos) ? 0 : static_cast<int>(std::clamp(pos, 0.0, double(n_bins - 1)));
    part.assignment.push_back(bin);
  }
  return part;
}

double srgb_lightness(double r, double g, double b) {
  // Y row of the sRGB -> XYZ (D65) matrix; dividing by the white-point Y
  // evaluated with the same coefficients keeps white at exactly L* = 100.
  constexpr double kr = 0.2126729, kg = 0.7151522, kb = 0.0721750;
  constexpr double white = kr + kg + kb;
  const double y = kr * srgb_to_linear(r) + kg * srgb_to_linear(g) + kb * srgb_to_linear(b);
  return lab_f(y / white);
}

double compute_brightness(const Image& image) {
  const size_t n = static_cast<size_t>(image.height) * image.width;
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const float* px = &image.pixels[i * 3];
    sum += srgb_lightness(std::clamp<double>(px[0], 0, 1), std::clamp<double>(px[1], 0, 1),
                          std::clamp<double>(px[2], 0, 1));
  }
  return sum / static_cast<double>(n);
}

std::vector<double> factor_column(std::span<const Sample> samples, int factor) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (factor < 0 || static_cast<size_t>(factor) >= s.factors.size())
      throw InputError("factor_column: sample lacks factor " + std::to_string(factor));
    out.push_back(s.factors[static_cast<size_t>(factor)]);
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, std::span<const Sample> samples,
                  const WorldSpec& spec, uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  manifest << "index,label";
  for (int f = 0; f < spec.num_factors(); ++f) manifest << ",factor_" << f;
  manifest << "\n";
  char name[32];
  char num[40];
  for (size_t k = 0; k < samples.size(); ++k) {
    std::snprintf(name, sizeof(name), "%08zu.png", k);
    write_png(samples[k].image, dir / name);
    manifest << k << "," << samples[k].label;
    for (double v : samples[k].factors) {
      std::snprintf(num, sizeof(num), "%.17g", v);
      manifest << "," << num;
    }
    manifest << "\n";
  }
  nlohmann::json meta{{"world", spec},
                      {"seed", seed},
                      {"num_classes", spec.num_classes},
                      {"image_size", spec.image_size},
                      {"count", samples.size()}};
  std::ofstream(dir / "spec.json") << meta.dump(2) << "\n";
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "spec.json");
  if (!meta_in) throw InputError("no spec.json in " + dir.string());
  const auto meta = nlohmann::json::parse(meta_in);
  LoadedDataset out;
  out.spec = meta.at("world").get<WorldSpec>();
  out.seed = meta.at("seed").get<uint64_t>();

  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw InputError("no manifest.csv in " + dir.string());
  std::string line;
  std::getline(manifest, line);
  char name[32];
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    const size_t index = std::stoull(cell);
    Sample s;
    std::getline(row, cell, ',');
    s.label = std::stoi(cell);
    while (std::getline(row, cell, ',')) s.factors.push_back(std::stod(cell));
    std::snprintf(name, sizeof(name), "%08zu.png", index);
    s.image = read_png(dir / name);
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace factorlab

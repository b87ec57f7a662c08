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

#include "factorlab/generative.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <set>
#include <string_view>

#include "factorlab/checkpoint.hpp"
#include "factorlab/error.hpp"
#include "factorlab/infogan.hpp"
#include "factorlab/rng.hpp"

namespace factorlab {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

// d/dp of -log(clamp(p)); zero where the clamp is active.
double neg_log_grad(double p) {
  if (p < kProbEps || p > 1.0 - kProbEps) return 0.0;
  return -1.0 / p;
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite ") + what);
}

void check_batch(std::span<const double> d_real, std::span<const double> d_fake,
                 std::span<const std::vector<double>> q_out,
                 std::span<const std::vector<double>> codes) {
  if (d_real.empty() || d_fake.empty()) throw InputError("gan_step_losses: empty batch");
  if (q_out.size() != d_fake.size() || codes.size() != d_fake.size())
    throw InputError("gan_step_losses: q/code batch does not match fake batch");
  check_finite(d_real, "discriminator output on real batch");
  check_finite(d_fake, "discriminator output on fake batch");
  for (const auto& q : q_out) check_finite(q, "Q output");
}

}  // namespace

std::vector<Image> Generator::generate_batch(std::span<const LatentCode> codes) const {
  std::vector<Image> out;
  out.reserve(codes.size());
  for (const auto& code : codes) out.push_back(generate(code));
  return out;
}

// ---------------------------------------------------------------- losses

double info_loss(std::span<const double> c, std::span<const double> q) {
  if (c.size() != q.size()) throw InputError("info_loss: length mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < c.size(); ++i) sum += (c[i] - q[i]) * (c[i] - q[i]);
  return 0.5 * sum;
}

std::vector<double> info_loss_grad(std::span<const double> c, std::span<const double> q) {
  if (c.size() != q.size()) throw InputError("info_loss_grad: length mismatch");
  std::vector<double> g(c.size());
  for (size_t i = 0; i < c.size(); ++i) g[i] = q[i] - c[i];
  return g;
}

double code_neg_log_prior(std::span<const double> c) {
  double sum = 0.0;
  for (double v : c) sum += v * v;
  return 0.5 * sum + 0.5 * static_cast<double>(c.size()) * std::log(2.0 * std::numbers::pi);
}

GanLosses gan_step_losses(std::span<const double> d_real, std::span<const double> d_fake,
                          std::span<const std::vector<double>> q_out,
                          std::span<const std::vector<double>> codes, double info_weight) {
  check_batch(d_real, d_fake, q_out, codes);
  GanLosses out;
  double real_term = 0.0, fake_term = 0.0, gen_term = 0.0, info = 0.0;
  for (double p : d_real) real_term -= std::log(clamp_prob(p));
  for (double p : d_fake) {
    fake_term -= std::log(1.0 - clamp_prob(p));
    gen_term -= std::log(clamp_prob(p));
  }
  for (size_t k = 0; k < codes.size(); ++k) info += info_loss(codes[k], q_out[k]);
  const double n_real = static_cast<double>(d_real.size());
  const double n_fake = static_cast<double>(d_fake.size());
  out.d_loss = real_term / n_real + fake_term / n_fake;
  out.info = info / n_fake;
  out.g_loss = gen_term / n_fake + info_weight * out.info;
  return out;
}

GanLossGradients gan_step_loss_gradients(std::span<const double> d_real,
                                         std::span<const double> d_fake,
                                         std::span<const std::vector<double>> q_out,
                                         std::span<const std::vector<double>> codes,
                                         double info_weight) {
  check_batch(d_real, d_fake, q_out, codes);
  const double n_real = static_cast<double>(d_real.size());
  const double n_fake = static_cast<double>(d_fake.size());
  GanLossGradients g;
  for (double p : d_real) g.d_loss_wrt_real.push_back(neg_log_grad(p) / n_real);
  for (double p : d_fake) {
    // -log(1 - clamp(p)) differentiates like -log(u) at u = 1 - p, negated.
    g.d_loss_wrt_fake.push_back(-neg_log_grad(1.0 - p) / n_fake);
    g.g_loss_wrt_fake.push_back(neg_log_grad(p) / n_fake);
  }
  for (size_t k = 0; k < codes.size(); ++k) {
    auto gq = info_loss_grad(codes[k], q_out[k]);
    for (auto& v : gq) v *= info_weight / n_fake;
    g.g_loss_wrt_q.push_back(std::move(gq));
  }
  return g;
}

// ---------------------------------------------------------------- sampling

std::vector<size_t> stratified_counts(size_t n, std::span<const double> dist) {
  if (dist.empty()) throw InputError("stratified_counts: empty distribution");
  double total = 0.0;
  for (double w : dist) {
    if (!(w >= 0.0)) throw InputError("stratified_counts: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) throw InputError("stratified_counts: weights must sum to 1");
  std::vector<size_t> counts(dist.size());
  std::vector<double> remainder(dist.size());
  size_t assigned = 0;
  for (size_t k = 0; k < dist.size(); ++k) {
    const double exact = static_cast<double>(n) * dist[k] / total;
    // Guard products like 100 * 0.7 = 70.00000000000001 before flooring.
    counts[k] = static_cast<size_t>(std::floor(exact + 1e-9));
    remainder[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::vector<size_t> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return remainder[a] > remainder[b]; });
  for (size_t k = 0; assigned < n; k = (k + 1) % order.size(), ++assigned) ++counts[order[k]];
  return counts;
}

LatentCode sample_code(const GeneratorInfo& info, CodeDistribution c_dist, int label,
                       std::mt19937_64& rng) {
  LatentCode code;
  code.y = label;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(kCodeLow, kCodeHigh);
  code.z.resize(static_cast<size_t>(info.d_z));
  for (auto& v : code.z) v = normal(rng);
  code.c.resize(static_cast<size_t>(info.d_c));
  for (auto& v : code.c) v = c_dist == CodeDistribution::kUniformEval ? uniform(rng) : normal(rng);
  return code;
}

std::vector<LatentCode> sample_codes(const GeneratorInfo& info, size_t n,
                                     std::span<const double> label_dist, CodeDistribution c_dist,
                                     uint64_t seed) {
  if (label_dist.size() != static_cast<size_t>(info.num_classes))
    throw InputError("sample_codes: label distribution length differs from class count");
  const auto counts = stratified_counts(n, label_dist);
  std::vector<int> labels;
  labels.reserve(n);
  for (size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], static_cast<int>(k));
  auto order_rng = stream_rng(seed, n, salt::kSynthetic);
  std::shuffle(labels.begin(), labels.end(), order_rng);

  std::vector<LatentCode> codes;
  codes.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    auto rng = stream_rng(seed, k, salt::kSynthetic);
    codes.push_back(sample_code(info, c_dist, labels[k], rng));
  }
  return codes;
}

std::vector<SyntheticRecord> sample_synthetic(const Generator& gen, size_t n,
                                              std::span<const double> label_dist,
                                              CodeDistribution c_dist, uint64_t seed) {
  auto codes = sample_codes(gen.info(), n, label_dist, c_dist, seed);
  std::vector<SyntheticRecord> out;
  out.reserve(n);
  constexpr size_t kChunk = 256;
  for (size_t start = 0; start < n; start += kChunk) {
    const size_t len = std::min(kChunk, n - start);
    auto images = gen.generate_batch(std::span<const LatentCode>(codes).subspan(start, len));
    for (size_t k = 0; k < len; ++k) {
      SyntheticRecord rec;
      rec.image = std::move(images[k]);
      rec.label = codes[start + k].y;
      rec.factors = gen.factors(codes[start + k]);
      rec.code = std::move(codes[start + k]);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

// ---------------------------------------------------------------- editing

LatentCode replace_code(const LatentCode& code, int i, double value) {
  if (i < 0 || static_cast<size_t>(i) >= code.c.size())
    throw InputError("code index " + std::to_string(i) + " out of range");
  LatentCode out = code;
  out.c[static_cast<size_t>(i)] = value;
  return out;
}

std::pair<Image, Image> counterfactual(const Generator& gen, const LatentCode& code, int i,
                                       double c_prime) {
  if (i < 0 || i >= gen.info().d_c) throw InputError("counterfactual: code index out of range");
  const LatentCode edited = replace_code(code, i, c_prime);
  return {gen.generate(code), gen.generate(edited)};
}

Image traversal_grid(const Generator& gen, int i, int n_steps, int n_images, uint64_t seed) {
  if (n_steps < 2) throw InputError("traversal_grid: need at least two steps");
  if (n_images < 1) throw InputError("traversal_grid: need at least one row");
  if (i < 0 || i >= gen.info().d_c) throw InputError("traversal_grid: code index out of range");
  std::vector<LatentCode> codes;
  for (int r = 0; r < n_images; ++r) {
    auto rng = stream_rng(seed, static_cast<uint64_t>(r), salt::kTraversal);
    const int label = r % gen.info().num_classes;
    const LatentCode base = sample_code(gen.info(), CodeDistribution::kUniformEval, label, rng);
    for (int s = 0; s < n_steps; ++s) {
      const double value = kCodeLow + (kCodeHigh - kCodeLow) * s / (n_steps - 1);
      codes.push_back(replace_code(base, i, value));
    }
  }
  const auto tiles = gen.generate_batch(codes);
  return montage(tiles, n_images, n_steps);
}

// ---------------------------------------------------------------- oracle

CodeMapping default_code_mapping(const WorldSpec& spec, int code, int factor) {
  if (factor < 0 || factor >= spec.num_factors()) throw InputError("mapping: factor out of range");
  const auto& r = spec.factors[static_cast<size_t>(factor)].range;
  CodeMapping m;
  m.code = code;
  m.factor = factor;
  m.scale = r.width() / (kCodeHigh - kCodeLow);
  m.offset = r.lo - m.scale * kCodeLow;
  return m;
}

OracleGenerator::OracleGenerator(WorldSpec spec, std::vector<CodeMapping> mapping, int d_z, int d_c)
    : spec_(std::move(spec)), mapping_(std::move(mapping)) {
  spec_.validate();
  if (d_c < 1) throw InputError("oracle: d_c must be positive");
  if (d_z < spec_.num_factors())
    throw InputError("oracle: d_z must be at least the factor count");
  std::set<int> codes, factors;
  for (const auto& m : mapping_) {
    if (m.code < 0 || m.code >= d_c) throw InputError("oracle: mapped code index out of range");
    if (m.factor < 0 || m.factor >= spec_.num_factors())
      throw InputError("oracle: mapped factor index out of range");
    if (!codes.insert(m.code).second || !factors.insert(m.factor).second)
      throw InputError("oracle: code-to-factor mapping must be injective");
    const auto& r = spec_.factors[static_cast<size_t>(m.factor)].range;
    const double a = m.apply(kCodeLow), b = m.apply(kCodeHigh);
    const double tol = 1e-9 * r.width();
    if (std::abs(std::min(a, b) - r.lo) > tol || std::abs(std::max(a, b) - r.hi) > tol)
      throw InputError("oracle: affine map must send [-2, 2] onto the factor range");
  }
  info_.kind = "oracle";
  info_.d_z = d_z;
  info_.d_c = d_c;
  info_.num_classes = spec_.num_classes;
  info_.image_size = spec_.image_size;
}

std::optional<std::vector<double>> OracleGenerator::factors(const LatentCode& code) const {
  if (code.z.size() != static_cast<size_t>(info_.d_z) || code.c.size() != static_cast<size_t>(info_.d_c))
    throw InputError("oracle: latent code has wrong dimensions");
  std::vector<double> out(spec_.factors.size());
  for (size_t f = 0; f < out.size(); ++f) {
    const auto& r = spec_.factors[f].range;
    const double u = 0.5 * std::erfc(-code.z[f] / std::numbers::sqrt2);
    out[f] = std::clamp(r.lo + u * r.width(), r.lo, r.hi);
  }
  for (const auto& m : mapping_) {
    const auto& r = spec_.factors[static_cast<size_t>(m.factor)].range;
    out[static_cast<size_t>(m.factor)] = std::clamp(m.apply(code.c[static_cast<size_t>(m.code)]), r.lo, r.hi);
  }
  return out;
}

uint64_t OracleGenerator::render_seed(const LatentCode& code) const {
  const std::string_view bytes(reinterpret_cast<const char*>(code.z.data()),
                               code.z.size() * sizeof(double));
  return std::hash<std::string_view>{}(bytes);
}

Image OracleGenerator::generate(const LatentCode& code) const {
  const auto f = *factors(code);
  return render(f, code.y, spec_, render_seed(code)).image;
}

void OracleGenerator::save(const std::filesystem::path& path) const {
  nlohmann::json meta{{"kind", "oracle"}, {"world", spec_}, {"d_z", info_.d_z}, {"d_c", info_.d_c}};
  meta["mapping"] = nlohmann::json::array();
  for (const auto& m : mapping_)
    meta["mapping"].push_back({{"code", m.code}, {"factor", m.factor}, {"scale", m.scale}, {"offset", m.offset}});
  write_checkpoint(path, meta, {});
}

GeneratorHandle oracle_generator(const WorldSpec& spec, std::vector<CodeMapping> mapping, int d_z,
                                 int d_c) {
  return std::make_shared<OracleGenerator>(spec, std::move(mapping), d_z, d_c);
}

GeneratorHandle load_generator(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_metadata(path);
  const std::string kind = meta.value("kind", "");
  if (kind == "oracle") {
    std::vector<CodeMapping> mapping;
    for (const auto& m : meta.at("mapping"))
      mapping.push_back({m.at("code").get<int>(), m.at("factor").get<int>(),
                         m.at("scale").get<double>(), m.at("offset").get<double>()});
    return oracle_generator(meta.at("world").get<WorldSpec>(), std::move(mapping),
                            meta.at("d_z").get<int>(), meta.at("d_c").get<int>());
  }
  if (kind == "infogan") return std::make_shared<InfoGan>(InfoGan::load(path));
  throw InputError(path.string() + ": unknown generator kind '" + kind + "'");
}

}  // namespace factorlab

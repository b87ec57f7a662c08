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

#include "factorlab/infogan.hpp"

#include <cmath>

#include "factorlab/checkpoint.hpp"
#include "factorlab/error.hpp"
#include "factorlab/nn/image_tensor.hpp"
#include "factorlab/rng.hpp"

namespace factorlab {

void InfoGanConfig::validate() const {
  if (d_z < 1 || d_c < 1) throw InputError("infogan: d_z and d_c must be positive");
  if (steps < 0 || batch_size < 1) throw InputError("infogan: steps >= 0 and batch_size >= 1 required");
  if (!(lr_g > 0) || !(lr_d > 0)) throw InputError("infogan: learning rates must be positive");
  if (!(info_weight >= 0)) throw InputError("infogan: info_weight must be >= 0");
  if (g_widths.size() != 3 || d_widths.size() != 3)
    throw InputError("infogan: g_widths and d_widths need three entries");
  for (int w : g_widths)
    if (w < 1) throw InputError("infogan: widths must be positive");
  for (int w : d_widths)
    if (w < 1) throw InputError("infogan: widths must be positive");
  if (d_hidden < 1) throw InputError("infogan: d_hidden must be positive");
}

void to_json(nlohmann::json& j, const InfoGanConfig& c) {
  j = nlohmann::json{{"d_z", c.d_z},           {"d_c", c.d_c},
                     {"steps", c.steps},       {"batch_size", c.batch_size},
                     {"lr_g", c.lr_g},         {"lr_d", c.lr_d},
                     {"beta1", c.beta1},       {"info_weight", c.info_weight},
                     {"seed", c.seed},         {"g_widths", c.g_widths},
                     {"d_widths", c.d_widths}, {"d_hidden", c.d_hidden}};
}

void from_json(const nlohmann::json& j, InfoGanConfig& c) {
  InfoGanConfig d;
  c.d_z = j.value("d_z", d.d_z);
  c.d_c = j.value("d_c", d.d_c);
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr_g = j.value("lr_g", d.lr_g);
  c.lr_d = j.value("lr_d", d.lr_d);
  c.beta1 = j.value("beta1", d.beta1);
  c.info_weight = j.value("info_weight", d.info_weight);
  c.seed = j.value("seed", d.seed);
  c.g_widths = j.value("g_widths", d.g_widths);
  c.d_widths = j.value("d_widths", d.d_widths);
  c.d_hidden = j.value("d_hidden", d.d_hidden);
}

InfoGan::InfoGan(const InfoGanConfig& config, int num_classes, int image_size) : config_(config) {
  config_.validate();
  if (image_size % 8 != 0 || image_size < 8) throw InputError("infogan: image size must be a multiple of 8");
  info_.kind = "infogan";
  info_.d_z = config.d_z;
  info_.d_c = config.d_c;
  info_.num_classes = num_classes;
  info_.image_size = image_size;
  info_.seed = config.seed;

  auto rng = stream_rng(config.seed, 0, salt::kInit);
  const int base = image_size / 8;
  const auto& gw = config.g_widths;
  const auto& dw = config.d_widths;
  const int in_dim = config.d_z + config.d_c + num_classes;

  g_.add<nn::Linear>(in_dim, gw[0] * base * base, rng);
  g_.add<nn::ReLU>();
  g_.add<nn::Reshape>(gw[0], base, base);
  g_.add<nn::Upsample2x>();
  g_.add<nn::Conv2d>(gw[0], gw[1], 3, 1, 1, rng);
  g_.add<nn::ReLU>();
  g_.add<nn::Upsample2x>();
  g_.add<nn::Conv2d>(gw[1], gw[2], 3, 1, 1, rng);
  g_.add<nn::ReLU>();
  g_.add<nn::Upsample2x>();
  g_.add<nn::Conv2d>(gw[2], 3, 3, 1, 1, rng);
  g_.add<nn::Sigmoid>();

  d_lower_.add<nn::Conv2d>(3, dw[0], 3, 2, 1, rng);
  d_lower_.add<nn::LeakyReLU>();
  d_lower_.add<nn::Conv2d>(dw[0], dw[1], 3, 2, 1, rng);
  d_lower_.add<nn::LeakyReLU>();
  lower_channels_ = dw[1];

  d_upper_.add<nn::Conv2d>(dw[1] + num_classes, dw[2], 3, 2, 1, rng);
  d_upper_.add<nn::LeakyReLU>();
  d_upper_.add<nn::Reshape>(dw[2] * base * base, 1, 1);
  d_upper_.add<nn::Linear>(dw[2] * base * base, config.d_hidden, rng);
  d_upper_.add<nn::LeakyReLU>();

  d_head_.add<nn::Linear>(config.d_hidden, 1, rng);
  q_head_.add<nn::Linear>(config.d_hidden, config.d_c, rng);
}

std::vector<nn::Parameter*> InfoGan::discriminator_parameters() {
  std::vector<nn::Parameter*> out;
  for (auto* seq : {&d_lower_, &d_upper_, &d_head_, &q_head_})
    for (auto* p : seq->parameters()) out.push_back(p);
  return out;
}

nn::Tensor InfoGan::generator_input(std::span<const LatentCode> codes) const {
  const int dim = info_.d_z + info_.d_c + info_.num_classes;
  nn::Tensor x(static_cast<int>(codes.size()), dim);
  for (size_t k = 0; k < codes.size(); ++k) {
    const auto& code = codes[k];
    if (code.z.size() != static_cast<size_t>(info_.d_z) || code.c.size() != static_cast<size_t>(info_.d_c))
      throw InputError("infogan: latent code has wrong dimensions");
    if (code.y < 0 || code.y >= info_.num_classes) throw InputError("infogan: label out of range");
    float* row = x.sample(static_cast<int>(k));
    int j = 0;
    for (double v : code.z) row[j++] = static_cast<float>(v);
    for (double v : code.c) row[j++] = static_cast<float>(v);
    row[j + code.y] = 1.0f;
  }
  return x;
}

Image InfoGan::generate(const LatentCode& code) const {
  return generate_batch(std::span<const LatentCode>(&code, 1)).front();
}

std::vector<Image> InfoGan::generate_batch(std::span<const LatentCode> codes) const {
  std::vector<Image> out;
  out.reserve(codes.size());
  if (codes.empty()) return out;
  const nn::Tensor images = g_.forward(generator_input(codes));
  for (int i = 0; i < images.n; ++i) out.push_back(nn::tensor_to_image(images, i));
  return out;
}

nn::Tensor InfoGan::label_planes(std::span<const int> labels, int n, int h, int w) const {
  if (labels.size() != static_cast<size_t>(n)) throw InputError("infogan: label count mismatch");
  nn::Tensor planes(n, info_.num_classes, h, w);
  const size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= info_.num_classes) throw InputError("infogan: label out of range");
    float* dst = planes.sample(i) + plane * static_cast<size_t>(y);
    std::fill(dst, dst + plane, 1.0f);
  }
  return planes;
}

InfoGan::DiscriminatorPass InfoGan::run_discriminator(const nn::Tensor& images,
                                                      std::span<const int> labels) const {
  DiscriminatorPass pass;
  const nn::Tensor lower = d_lower_.forward(images, pass.lower);
  const nn::Tensor joined = nn::concat_channels(lower, label_planes(labels, lower.n, lower.h, lower.w));
  const nn::Tensor features = d_upper_.forward(joined, pass.upper);
  pass.logits = d_head_.forward(features, pass.d_head);
  pass.codes = q_head_.forward(features, pass.q_head);
  return pass;
}

nn::Tensor InfoGan::backward_discriminator(const DiscriminatorPass& pass, const nn::Tensor& d_logits,
                                           const nn::Tensor& d_codes, bool need_dx) {
  nn::Tensor d_features = d_head_.backward(pass.d_head, d_logits, true);
  const nn::Tensor dq = q_head_.backward(pass.q_head, d_codes, true);
  for (size_t k = 0; k < d_features.size(); ++k) d_features.data[k] += dq.data[k];
  const nn::Tensor d_joined = d_upper_.backward(pass.upper, d_features, true);
  nn::Tensor d_lower, d_labels;
  nn::split_channels(d_joined, lower_channels_, d_lower, d_labels);
  return d_lower_.backward(pass.lower, d_lower, need_dx);
}

std::vector<std::vector<double>> InfoGan::predict_codes(std::span<const Image> images,
                                                        std::span<const int> labels) const {
  const auto pass = run_discriminator(nn::images_to_tensor(images, info_.image_size), labels);
  std::vector<std::vector<double>> out(static_cast<size_t>(pass.codes.n));
  for (int i = 0; i < pass.codes.n; ++i)
    out[static_cast<size_t>(i)].assign(pass.codes.sample(i), pass.codes.sample(i) + info_.d_c);
  return out;
}

std::vector<double> InfoGan::discriminate(std::span<const Image> images, std::span<const int> labels) const {
  const auto pass = run_discriminator(nn::images_to_tensor(images, info_.image_size), labels);
  std::vector<double> out;
  for (float l : pass.logits.data) out.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(l))));
  return out;
}

void InfoGan::save(const std::filesystem::path& path) const {
  auto* self = const_cast<InfoGan*>(this);
  std::vector<nn::Parameter*> params = self->g_.parameters();
  for (auto* p : self->discriminator_parameters()) params.push_back(p);
  nlohmann::json meta{{"kind", "infogan"},
                      {"config", config_},
                      {"num_classes", info_.num_classes},
                      {"image_size", info_.image_size}};
  write_checkpoint(path, meta, params);
}

InfoGan InfoGan::load(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_metadata(path);
  if (meta.value("kind", "") != "infogan") throw InputError(path.string() + " is not an InfoGAN checkpoint");
  InfoGan gan(meta.at("config").get<InfoGanConfig>(), meta.at("num_classes").get<int>(),
              meta.at("image_size").get<int>());
  std::vector<nn::Parameter*> params = gan.g_.parameters();
  for (auto* p : gan.discriminator_parameters()) params.push_back(p);
  read_checkpoint(path, params);
  return gan;
}

// ---------------------------------------------------------------- training

namespace {

std::vector<double> sigmoid_column(const nn::Tensor& logits) {
  std::vector<double> out;
  out.reserve(logits.size());
  for (float l : logits.data) out.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(l))));
  return out;
}

std::vector<std::vector<double>> rows_of(const nn::Tensor& t) {
  std::vector<std::vector<double>> out(static_cast<size_t>(t.n));
  for (int i = 0; i < t.n; ++i) out[static_cast<size_t>(i)].assign(t.sample(i), t.sample(i) + t.per_sample());
  return out;
}

void check_tensor(const nn::Tensor& t, const char* what) {
  for (float v : t.data)
    if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite ") + what);
}

}  // namespace

InfoGanResult train_infogan(std::span<const Sample> dataset, int num_classes, int image_size,
                            const InfoGanConfig& config) {
  if (dataset.empty()) throw InputError("train_infogan: empty dataset");
  for (const auto& s : dataset)
    if (s.label < 0 || s.label >= num_classes) throw InputError("train_infogan: label out of range");

  InfoGanResult result;
  result.model = std::make_shared<InfoGan>(config, num_classes, image_size);
  InfoGan& gan = *result.model;
  nn::Adam opt_g(gan.generator_parameters(), config.lr_g, config.beta1);
  nn::Adam opt_d(gan.discriminator_parameters(), config.lr_d, config.beta1);

  auto rng = stream_rng(config.seed, 0, salt::kGanBatch);
  std::uniform_int_distribution<size_t> pick(0, dataset.size() - 1);
  const int batch = config.batch_size;
  const double inv_b = 1.0 / batch;
  const float w = static_cast<float>(config.info_weight);

  std::vector<const Image*> real_images(static_cast<size_t>(batch));
  std::vector<int> labels(static_cast<size_t>(batch));
  std::vector<LatentCode> codes(static_cast<size_t>(batch));
  std::vector<std::vector<double>> code_rows(static_cast<size_t>(batch));

  for (int step = 0; step < config.steps; ++step) {
    try {
      for (int k = 0; k < batch; ++k) {
        const Sample& s = dataset[pick(rng)];
        real_images[static_cast<size_t>(k)] = &s.image;
        labels[static_cast<size_t>(k)] = s.label;
      }
      for (int k = 0; k < batch; ++k) {
        codes[static_cast<size_t>(k)] =
            sample_code(gan.info(), CodeDistribution::kTrainingPrior, labels[static_cast<size_t>(k)], rng);
        code_rows[static_cast<size_t>(k)] = codes[static_cast<size_t>(k)].c;
      }
      const nn::Tensor real = nn::images_to_tensor(std::span<const Image* const>(real_images), image_size);
      const nn::Tensor g_in = gan.generator_input(codes);

      // D/Q update.
      opt_d.zero_grad();
      const nn::Tensor fake = gan.run_generator(g_in);
      const auto pass_real = gan.run_discriminator(real, labels);
      const auto pass_fake = gan.run_discriminator(fake, labels);
      check_tensor(pass_real.logits, "discriminator logits");
      check_tensor(pass_fake.logits, "discriminator logits");
      check_tensor(pass_fake.codes, "Q output");
      const auto p_real = sigmoid_column(pass_real.logits);
      const auto p_fake = sigmoid_column(pass_fake.logits);
      const auto q_rows = rows_of(pass_fake.codes);
      const GanLosses losses = gan_step_losses(p_real, p_fake, q_rows, code_rows, config.info_weight);

      nn::Tensor d_real(batch, 1), d_fake(batch, 1), d_q(batch, config.d_c);
      for (int k = 0; k < batch; ++k) {
        // Logit-space gradients of the two BCE terms.
        d_real.data[static_cast<size_t>(k)] = static_cast<float>((p_real[static_cast<size_t>(k)] - 1.0) * inv_b);
        d_fake.data[static_cast<size_t>(k)] = static_cast<float>(p_fake[static_cast<size_t>(k)] * inv_b);
        for (int j = 0; j < config.d_c; ++j)
          d_q(k, j) = static_cast<float>(w * (pass_fake.codes(k, j) - code_rows[static_cast<size_t>(k)][static_cast<size_t>(j)]) * inv_b);
      }
      gan.backward_discriminator(pass_real, d_real, nn::Tensor(batch, config.d_c), false);
      gan.backward_discriminator(pass_fake, d_fake, d_q, false);
      opt_d.step();

      // G update through the (now fixed) discriminator.
      opt_g.zero_grad();
      nn::Tape g_tape;
      const nn::Tensor fake_g = gan.run_generator(g_in, g_tape);
      const auto pass_g = gan.run_discriminator(fake_g, labels);
      check_tensor(pass_g.logits, "discriminator logits");
      const auto p_g = sigmoid_column(pass_g.logits);
      nn::Tensor d_logit_g(batch, 1), d_q_g(batch, config.d_c);
      for (int k = 0; k < batch; ++k) {
        d_logit_g.data[static_cast<size_t>(k)] = static_cast<float>((p_g[static_cast<size_t>(k)] - 1.0) * inv_b);
        for (int j = 0; j < config.d_c; ++j)
          d_q_g(k, j) = static_cast<float>(w * (pass_g.codes(k, j) - code_rows[static_cast<size_t>(k)][static_cast<size_t>(j)]) * inv_b);
      }
      const nn::Tensor d_images = gan.backward_discriminator(pass_g, d_logit_g, d_q_g, true);
      gan.backward_generator(g_tape, d_images);
      opt_g.step();

      GanStepLog entry;
      entry.step = step;
      entry.d_loss = losses.d_loss;
      entry.g_loss = losses.g_loss;
      entry.info = losses.info;
      double prior = 0.0;
      for (const auto& c : code_rows) prior += code_neg_log_prior(c);
      entry.neg_log_prior = prior * inv_b;
      if (!std::isfinite(entry.d_loss) || !std::isfinite(entry.g_loss) || !std::isfinite(entry.info))
        throw DivergenceError("non-finite GAN loss");
      result.log.push_back(entry);
    } catch (const DivergenceError& e) {
      std::string where = "infogan diverged at step " + std::to_string(step) + ": " + e.what();
      if (!config.diagnostics_dir.empty()) {
        const auto path = config.diagnostics_dir / "diverged_infogan.ckpt";
        gan.save(path);
        where += " (checkpoint: " + path.string() + ")";
      }
      throw DivergenceError(where);
    }
  }
  return result;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InputError("pearson: need two equal-length series");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> code_reconstruction_correlation(const InfoGan& gan, size_t n, uint64_t seed) {
  const auto& info = gan.info();
  std::vector<double> uniform(static_cast<size_t>(info.num_classes), 1.0 / info.num_classes);
  const auto codes = sample_codes(info, n, uniform, CodeDistribution::kTrainingPrior, seed);
  const auto images = gan.generate_batch(codes);
  std::vector<int> labels;
  for (const auto& c : codes) labels.push_back(c.y);
  const auto q = gan.predict_codes(images, labels);
  std::vector<double> out;
  for (int i = 0; i < info.d_c; ++i) {
    std::vector<double> truth, pred;
    for (size_t k = 0; k < n; ++k) {
      truth.push_back(codes[k].c[static_cast<size_t>(i)]);
      pred.push_back(q[k][static_cast<size_t>(i)]);
    }
    out.push_back(pearson_correlation(truth, pred));
  }
  return out;
}

}  // namespace factorlab

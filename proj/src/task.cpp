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

#include "factorlab/task.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "factorlab/checkpoint.hpp"
#include "factorlab/error.hpp"
#include "factorlab/nn/image_tensor.hpp"
#include "factorlab/rng.hpp"

namespace factorlab {

namespace {

constexpr size_t kInferenceChunk = 256;

}  // namespace

void ClassifierConfig::validate() const {
  if (widths.size() != 4) throw InputError("classifier: widths needs four entries");
  for (int w : widths)
    if (w < 1) throw InputError("classifier: widths must be positive");
  if (epochs < 0 || batch_size < 1) throw InputError("classifier: epochs >= 0 and batch_size >= 1 required");
  if (!(learning_rate > 0)) throw InputError("classifier: learning_rate must be positive");
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = nlohmann::json{{"widths", c.widths},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  ClassifierConfig d;
  c.widths = j.value("widths", d.widths);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.seed = j.value("seed", d.seed);
}

Classifier::Classifier(const ClassifierConfig& config, int num_classes, int image_size)
    : config_(config), num_classes_(num_classes), image_size_(image_size) {
  config_.validate();
  if (num_classes < 2) throw InputError("classifier: need at least two classes");
  auto rng = stream_rng(config.seed, 0, salt::kInit);
  const auto& w = config.widths;
  int in = 3;
  for (size_t b = 0; b < w.size(); ++b) {
    trunk_.add<nn::Conv2d>(in, w[b], 3, b == 0 ? 1 : 2, 1, rng);
    trunk_.add<nn::ReLU>();
    in = w[b];
  }
  trunk_.add<nn::GlobalAvgPool>();
  head_.add<nn::Linear>(in, num_classes, rng);
  metadata_ = {{"num_classes", num_classes},
               {"image_size", image_size},
               {"seed", config.seed},
               {"classifier_config", config},
               {"recipe", "baseline"}};
}

std::vector<std::vector<double>> Classifier::predict(std::span<const Image> images) const {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (size_t start = 0; start < images.size(); start += kInferenceChunk) {
    const auto chunk = images.subspan(start, std::min(kInferenceChunk, images.size() - start));
    auto probs = nn::softmax_rows(logits_of(nn::images_to_tensor(chunk, image_size_)));
    for (auto& row : probs) out.push_back(std::move(row));
  }
  return out;
}

std::vector<int> Classifier::predict_labels(std::span<const Image> images) const {
  std::vector<int> out;
  out.reserve(images.size());
  for (const auto& row : predict(images))
    out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  return out;
}

std::vector<std::vector<float>> Classifier::embed(std::span<const Image> images) const {
  std::vector<std::vector<float>> out;
  out.reserve(images.size());
  for (size_t start = 0; start < images.size(); start += kInferenceChunk) {
    const auto chunk = images.subspan(start, std::min(kInferenceChunk, images.size() - start));
    const nn::Tensor e = embedding_of(nn::images_to_tensor(chunk, image_size_));
    for (int i = 0; i < e.n; ++i) out.emplace_back(e.sample(i), e.sample(i) + e.per_sample());
  }
  return out;
}

std::vector<nn::Parameter*> Classifier::parameters() {
  auto out = trunk_.parameters();
  for (auto* p : head_.parameters()) out.push_back(p);
  return out;
}

std::vector<float> Classifier::snapshot() const {
  auto* self = const_cast<Classifier*>(this);
  std::vector<float> out;
  for (auto* p : self->parameters()) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

void Classifier::save(const std::filesystem::path& path) const {
  auto* self = const_cast<Classifier*>(this);
  nlohmann::json meta = metadata_;
  meta["kind"] = "classifier";
  meta["num_classes"] = num_classes_;
  meta["image_size"] = image_size_;
  meta["classifier_config"] = config_;
  if (!meta.contains("config_hash")) meta["config_hash"] = config_hash(meta["classifier_config"]);
  write_checkpoint(path, meta, self->parameters());
}

Classifier Classifier::load(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_metadata(path);
  if (meta.value("kind", "") != "classifier") throw InputError(path.string() + " is not a classifier checkpoint");
  Classifier clf(meta.at("classifier_config").get<ClassifierConfig>(), meta.at("num_classes").get<int>(),
                 meta.at("image_size").get<int>());
  read_checkpoint(path, clf.parameters());
  clf.metadata_ = meta;
  clf.metadata_.erase("kind");
  clf.metadata_.erase("format_version");
  return clf;
}

Classifier::Pass Classifier::forward_train(const nn::Tensor& x) const {
  Pass pass;
  pass.embedding = trunk_.forward(x, pass.trunk);
  pass.logits = head_.forward(pass.embedding, pass.head);
  return pass;
}

void Classifier::backward(const Pass& pass, const nn::Tensor& d_logits, const nn::Tensor* d_embedding) {
  nn::Tensor d_emb = head_.backward(pass.head, d_logits, true);
  if (d_embedding != nullptr) {
    if (!d_embedding->same_shape(d_emb)) throw InputError("classifier backward: embedding gradient shape");
    for (size_t k = 0; k < d_emb.size(); ++k) d_emb.data[k] += d_embedding->data[k];
  }
  trunk_.backward(pass.trunk, d_emb, false);
}

double cross_entropy(const nn::Tensor& logits, std::span<const int> labels, nn::Tensor* d_logits,
                     double scale) {
  const auto probs = nn::softmax_rows(logits);
  const int k = static_cast<int>(logits.per_sample());
  const double n = static_cast<double>(logits.n);
  if (d_logits != nullptr) *d_logits = nn::Tensor(logits.n, k);
  double loss = 0.0;
  for (int i = 0; i < logits.n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    loss -= std::log(std::max(probs[static_cast<size_t>(i)][static_cast<size_t>(y)], 1e-12));
    if (d_logits != nullptr)
      for (int j = 0; j < k; ++j)
        (*d_logits)(i, j) = static_cast<float>(scale * (probs[static_cast<size_t>(i)][static_cast<size_t>(j)] - (j == y ? 1.0 : 0.0)) / n);
  }
  return loss / n;
}

Classifier run_training(std::span<const Sample> train, const ClassifierConfig& config, int num_classes,
                        int image_size, const StepHook& hook, const std::string& recipe) {
  if (train.empty()) throw InputError("train_classifier: empty training set");
  for (const auto& s : train)
    if (s.label < 0 || s.label >= num_classes) throw InputError("train_classifier: label out of range");

  Classifier clf(config, num_classes, image_size);
  clf.metadata()["recipe"] = recipe;
  clf.metadata()["train_size"] = train.size();
  nn::Adam opt(clf.parameters(), config.learning_rate);

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = static_cast<size_t>(config.batch_size);
  std::vector<const Image*> images;
  std::vector<int> labels;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto shuffle_rng = stream_rng(config.seed, static_cast<uint64_t>(epoch), salt::kShuffle);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (size_t start = 0; start < order.size(); start += batch, ++step) {
      const size_t len = std::min(batch, order.size() - start);
      images.clear();
      labels.clear();
      for (size_t k = 0; k < len; ++k) {
        images.push_back(&train[order[start + k]].image);
        labels.push_back(train[order[start + k]].label);
      }
      opt.zero_grad();
      const auto pass = clf.forward_train(nn::images_to_tensor(std::span<const Image* const>(images), image_size));
      nn::Tensor d_logits;
      CurvePoint point;
      point.step = step;
      point.epoch = epoch;
      point.task_loss = cross_entropy(pass.logits, labels, &d_logits);
      clf.backward(pass, d_logits);
      if (hook) hook(clf, step, point);
      if (!std::isfinite(point.task_loss) || !std::isfinite(point.extra_loss))
        throw DivergenceError("classifier training diverged at step " + std::to_string(step) +
                              " (epoch " + std::to_string(epoch) + ", recipe " + recipe + ")");
      opt.step();
      clf.curve().push_back(point);
    }
  }
  clf.metadata()["steps"] = step;
  return clf;
}

Classifier train_classifier(std::span<const Sample> train, const ClassifierConfig& config, int num_classes,
                            int image_size) {
  return run_training(train, config, num_classes, image_size);
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "step,epoch,task_loss,extra_loss,adversary_loss,adversary_acc\n";
  for (const auto& p : curve)
    out << p.step << "," << p.epoch << "," << p.task_loss << "," << p.extra_loss << "," << p.adversary_loss
        << "," << p.adversary_acc << "\n";
}

std::vector<const Image*> image_pointers(std::span<const Sample> samples) {
  std::vector<const Image*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(&s.image);
  return out;
}

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

}  // namespace factorlab

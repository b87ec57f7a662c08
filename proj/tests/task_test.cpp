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

#include "factorlab/error.hpp"
#include "factorlab/metrics.hpp"
#include "factorlab/nn/image_tensor.hpp"
#include "factorlab/task.hpp"

namespace factorlab {
namespace {

namespace fs = std::filesystem;

ClassifierConfig tiny_config() {
  ClassifierConfig c;
  c.widths = {4, 8, 8, 8};
  c.epochs = 1;
  c.batch_size = 16;
  c.seed = 3;
  return c;
}

ClassifierConfig desk_config() {
  ClassifierConfig c;
  c.widths = {8, 16, 32, 32};
  c.epochs = 10;
  c.batch_size = 64;
  c.learning_rate = 1e-3;
  c.seed = 1;
  return c;
}

std::vector<Image> images_of(const std::vector<Sample>& samples) {
  std::vector<Image> out;
  for (const auto& s : samples) out.push_back(s.image);
  return out;
}

double accuracy(const Classifier& clf, const std::vector<Sample>& data) {
  const auto preds = clf.predict_labels(images_of(data));
  size_t correct = 0;
  for (size_t k = 0; k < data.size(); ++k) correct += preds[k] == data[k].label;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

WorldSpec small_world() {
  WorldSpec spec = WorldSpec::standard();
  spec.image_size = 16;
  return spec;
}

TEST(Predict, RowsAreProbabilityVectors) {
  const auto data = generate_dataset(small_world(), 12, 1);
  const Classifier clf(tiny_config(), 5, 16);
  const auto probs = clf.predict(images_of(data));
  ASSERT_EQ(probs.size(), data.size());
  for (const auto& row : probs) {
    ASSERT_EQ(row.size(), 5u);
    double s = 0.0;
    for (double p : row) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(Predict, DuplicatedInputsGiveIdenticalRows) {
  const auto data = generate_dataset(small_world(), 1, 2);
  const std::vector<Image> twice{data[0].image, data[0].image};
  const Classifier clf(tiny_config(), 5, 16);
  const auto probs = clf.predict(twice);
  EXPECT_EQ(probs[0], probs[1]);
  const auto emb = clf.embed(twice);
  EXPECT_EQ(emb[0], emb[1]);
}

TEST(Predict, WrongImageShapeIsInputError) {
  const Classifier clf(tiny_config(), 5, 16);
  const std::vector<Image> wrong{Image(8, 8)};
  EXPECT_THROW(clf.predict(wrong), InputError);
  EXPECT_THROW(clf.embed(wrong), InputError);
}

TEST(Embed, DimensionAndHeadIdentity) {
  const auto data = generate_dataset(small_world(), 6, 3);
  const Classifier clf(tiny_config(), 5, 16);
  const auto images = images_of(data);
  const auto emb = clf.embed(images);
  const auto probs = clf.predict(images);
  const auto& head = clf.head();
  for (size_t r = 0; r < emb.size(); ++r) {
    ASSERT_EQ(emb[r].size(), 8u);
    std::vector<double> logits(5);
    for (int j = 0; j < 5; ++j) {
      double v = head.bias().value[static_cast<size_t>(j)];
      for (int k = 0; k < 8; ++k) v += static_cast<double>(head.weight().value[static_cast<size_t>(j * 8 + k)]) * emb[r][static_cast<size_t>(k)];
      logits[static_cast<size_t>(j)] = v;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (int j = 0; j < 5; ++j)
      EXPECT_NEAR(logits[static_cast<size_t>(j)] / z, probs[r][static_cast<size_t>(j)],
                  1e-5 * std::max(1e-3, probs[r][static_cast<size_t>(j)]));
  }
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  nn::Tensor logits(3, 4);
  for (size_t k = 0; k < logits.size(); ++k) logits.data[k] = static_cast<float>(std::sin(1.7 * k));
  const std::vector<int> labels{0, 3, 1};
  nn::Tensor grad;
  cross_entropy(logits, labels, &grad);
  const float h = 1e-3f;
  for (size_t k = 0; k < logits.size(); ++k) {
    nn::Tensor up = logits, down = logits;
    up.data[k] += h;
    down.data[k] -= h;
    const double fd = (cross_entropy(up, labels, nullptr) - cross_entropy(down, labels, nullptr)) / (2.0 * h);
    EXPECT_NEAR(grad.data[k], fd, 1e-3);
  }
}

TEST(Training, SeededRunsAreBitIdentical) {
  const auto data = generate_dataset(small_world(), 64, 4);
  const auto a = train_classifier(data, tiny_config(), 5, 16);
  const auto b = train_classifier(data, tiny_config(), 5, 16);
  EXPECT_EQ(a.snapshot(), b.snapshot());
  ASSERT_EQ(a.curve().size(), 4u);
  EXPECT_EQ(a.metadata()["recipe"], "baseline");
  ClassifierConfig other = tiny_config();
  other.seed = 4;
  EXPECT_NE(train_classifier(data, other, 5, 16).snapshot(), a.snapshot());
}

TEST(Training, ZeroEpochsIsChanceLevel) {
  WorldSpec spec = WorldSpec::standard();
  const auto train = generate_dataset(spec, 10, 5);
  const auto test = generate_dataset(spec, 1000, 6);
  ClassifierConfig cfg = desk_config();
  cfg.epochs = 0;
  const auto clf = train_classifier(train, cfg, 5, 32);
  EXPECT_TRUE(clf.curve().empty());
  // An untrained network can collapse onto one class, which on balanced
  // labels is still 20% accurate.
  EXPECT_NEAR(accuracy(clf, test), 20.0, 5.0);
}

TEST(Training, InvalidInputs) {
  std::vector<Sample> empty;
  EXPECT_THROW(train_classifier(empty, tiny_config(), 5, 16), InputError);
  auto data = generate_dataset(small_world(), 4, 7);
  data[2].label = 5;
  EXPECT_THROW(train_classifier(data, tiny_config(), 5, 16), InputError);
  ClassifierConfig bad = tiny_config();
  bad.widths = {4, 8};
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(Checkpoint, SaveLoadPreservesPredictionsAndMetadata) {
  const auto data = generate_dataset(small_world(), 32, 8);
  auto clf = train_classifier(data, tiny_config(), 5, 16);
  clf.metadata()["note"] = "kept";
  const fs::path path = fs::temp_directory_path() / "factorlab_task.ckpt";
  clf.save(path);
  const auto back = Classifier::load(path);
  EXPECT_EQ(back.snapshot(), clf.snapshot());
  EXPECT_EQ(back.metadata()["note"], "kept");
  EXPECT_TRUE(back.metadata().contains("config_hash"));
  EXPECT_EQ(back.predict(images_of(data)), clf.predict(images_of(data)));
  fs::remove(path);
}

TEST(Training, CleanWorldIsLearned) {
  WorldSpec spec = WorldSpec::standard();
  const auto train = generate_dataset(spec, 5000, 11);
  const auto test = generate_dataset(spec, 1000, 12);
  ClassifierConfig cfg = desk_config();
  cfg.epochs = 5;
  const auto clf = train_classifier(train, cfg, 5, 32);
  EXPECT_GE(accuracy(clf, test), 95.0);
}

TEST(Training, InjectedSensitivityOpensBrightnessGap) {
  WorldSpec spec = WorldSpec::standard();
  spec.factors[1].sensitivity = 0.8;
  const auto train = generate_dataset(spec, 2000, 13);
  const auto test = generate_dataset(spec, 2000, 14);
  const auto clf = train_classifier(train, desk_config(), 5, 32);
  const auto partition = bin_assign(factor_column(test, 1), 10, spec.factors[1].range);
  const auto m = evaluate(clf, images_of(test), labels_of(test), partition);
  EXPECT_GE(m.acc_gap, 10.0);
}

}  // namespace
}  // namespace factorlab

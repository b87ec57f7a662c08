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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "factorlab/error.hpp"
#include "factorlab/interventions.hpp"
#include "factorlab/rng.hpp"
#include "gradient_checks.hpp"

namespace factorlab {
namespace {

WorldSpec small_world() {
  WorldSpec spec = WorldSpec::standard();
  spec.image_size = 16;
  spec.factors[1].sensitivity = 0.8;
  return spec;
}

GeneratorHandle small_oracle() {
  const WorldSpec spec = small_world();
  return oracle_generator(spec, {default_code_mapping(spec, 0, 0), default_code_mapping(spec, 3, 1)});
}

ClassifierConfig tiny_config() {
  ClassifierConfig c;
  c.widths = {4, 8, 8, 8};
  c.epochs = 1;
  c.batch_size = 16;
  c.seed = 3;
  return c;
}

const std::vector<double> kUniformLabels(5, 0.2);

// Kolmogorov-Smirnov statistic of values against U(lo, hi).
double ks_uniform(std::vector<double> values, double lo, double hi) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (size_t k = 0; k < values.size(); ++k) {
    const double f = (values[k] - lo) / (hi - lo);
    d = std::max({d, (k + 1) / n - f, f - k / n});
  }
  return d;
}

TEST(InterventionKind, ParseAndName) {
  EXPECT_EQ(parse_intervention_kind("da"), InterventionKind::kDA);
  EXPECT_EQ(parse_intervention_kind("Aa"), InterventionKind::kAA);
  EXPECT_EQ(parse_intervention_kind("SC"), InterventionKind::kSC);
  EXPECT_THROW(parse_intervention_kind("XX"), InputError);
  EXPECT_EQ(intervention_name(InterventionKind::kDA, 3), "DA-4");
  nlohmann::json j = nlohmann::json::parse(R"({"kind": "ZZ"})");
  EXPECT_THROW(j.get<InterventionConfig>(), InputError);
}

TEST(InterventionConfig, AdversaryObjectiveRoundTrips) {
  for (auto o : {AaObjective::kAscent, AaObjective::kCapped, AaObjective::kConfusion}) {
    EXPECT_EQ(parse_aa_objective(to_string(o)), o);
    InterventionConfig c;
    c.aa_objective = o;
    EXPECT_EQ(nlohmann::json(c).get<InterventionConfig>().aa_objective, o);
  }
  EXPECT_THROW(parse_aa_objective("reverse"), InputError);
  EXPECT_THROW(nlohmann::json::parse(R"({"aa_objective": "reverse"})").get<InterventionConfig>(), InputError);
}

TEST(InterventionConfig, Validation) {
  InterventionConfig c;
  EXPECT_NO_THROW(c.validate(10));
  c.factor_index = 10;
  EXPECT_THROW(c.validate(10), InputError);
  c.factor_index = 0;
  c.aa_weight = -1.0;
  EXPECT_THROW(c.validate(10), InputError);
  c.aa_weight = 1.0;
  c.sc_weight = std::nan("");
  EXPECT_THROW(c.validate(10), InputError);
  c.sc_weight = 1.0;
  c.da_multiplier = 0.0;
  EXPECT_THROW(c.validate(10), InputError);
}

TEST(DataAugmentation, SyntheticCountFollowsCeiling) {
  EXPECT_EQ(synthetic_count(10.0, 1000), 10000u);
  EXPECT_EQ(synthetic_count(0.001, 100), 1u);
  EXPECT_EQ(synthetic_count(2.5, 3), 8u);
  EXPECT_THROW(synthetic_count(0.0, 10), InputError);
}

TEST(DataAugmentation, AppendsWithoutTouchingOriginals) {
  const auto gen = small_oracle();
  const auto train = generate_dataset(small_world(), 40, 1);
  const auto aug = augment_da(train, *gen, 3, 7, 2.0, kUniformLabels, 5);
  ASSERT_EQ(aug.size(), train.size() + 14);
  for (size_t k = 0; k < train.size(); ++k) {
    EXPECT_EQ(aug[k].image, train[k].image);
    EXPECT_EQ(aug[k].label, train[k].label);
    EXPECT_EQ(aug[k].factors, train[k].factors);
  }
  const auto one = augment_da(train, *gen, 3, 100, 0.001, kUniformLabels, 5);
  EXPECT_EQ(one.size(), train.size() + 1);
}

TEST(DataAugmentation, MultisetInclusionUnderShuffledInput) {
  const auto gen = small_oracle();
  auto train = generate_dataset(small_world(), 30, 2);
  std::reverse(train.begin(), train.end());
  const auto aug = augment_da(train, *gen, 0, 5, 1.0, kUniformLabels, 9);
  std::multimap<int, const Sample*> remaining;
  for (const auto& s : aug) remaining.emplace(s.label, &s);
  for (const auto& s : train) {
    auto range = remaining.equal_range(s.label);
    auto hit = std::find_if(range.first, range.second, [&](const auto& e) { return e.second->image == s.image; });
    ASSERT_NE(hit, range.second);
    remaining.erase(hit);
  }
}

TEST(DataAugmentation, MappedFactorCoversRangeUniformly) {
  WorldSpec spec = small_world();
  spec.image_size = 8;
  const auto gen = oracle_generator(spec, {default_code_mapping(spec, 3, 1)});
  const std::vector<Sample> train = generate_dataset(spec, 1, 3);
  const auto aug = augment_da(train, *gen, 3, 1000, 10.0, kUniformLabels, 4);
  std::vector<double> brightness;
  for (size_t k = train.size(); k < aug.size(); ++k) {
    EXPECT_EQ(aug[k].factors.size(), 5u);
    brightness.push_back(aug[k].factors[1]);
  }
  ASSERT_EQ(brightness.size(), 10000u);
  EXPECT_LT(ks_uniform(brightness, 0.0, 1.0), 0.05);
}

TEST(DataAugmentation, StreamDependsOnCodeIndex) {
  const auto gen = small_oracle();
  const auto train = generate_dataset(small_world(), 2, 3);
  const auto a = augment_da(train, *gen, 0, 4, 1.0, kUniformLabels, 4);
  const auto b = augment_da(train, *gen, 3, 4, 1.0, kUniformLabels, 4);
  const auto a2 = augment_da(train, *gen, 0, 4, 1.0, kUniformLabels, 4);
  EXPECT_NE(a.back().image, b.back().image);
  EXPECT_EQ(a.back().image, a2.back().image);
}

TEST(AdversarialAlignment, CodeBinEdges) {
  EXPECT_EQ(code_bin(-2.0, 10), 0);
  EXPECT_EQ(code_bin(0.0, 10), 5);
  EXPECT_EQ(code_bin(1.99, 10), 9);
  EXPECT_EQ(code_bin(2.0, 10), 9);
  EXPECT_EQ(code_bin(-7.0, 10), 0);
}

TEST(AdversarialAlignment, PhasesUpdateOnlyTheirOwnParameters) {
  const auto gen = small_oracle();
  const auto pool = sample_synthetic(*gen, 64, kUniformLabels, CodeDistribution::kUniformEval, 6);
  Classifier clf(tiny_config(), 5, 16);
  AdversarialAlignment adv(8, 5, 10, 16, 1e-2, 7);
  const auto batch = make_synthetic_batch(pool, 3, 10, 16, 8, 0);

  const auto clf_before = clf.snapshot();
  const auto adv_before = adv.snapshot();
  adv.adversary_step(clf, batch);
  EXPECT_EQ(clf.snapshot(), clf_before);
  EXPECT_NE(adv.snapshot(), adv_before);

  const auto adv_mid = adv.snapshot();
  for (auto* p : clf.parameters()) p->zero_grad();
  adv.classifier_gradients(clf, batch, 1.0);
  EXPECT_EQ(adv.snapshot(), adv_mid);
  for (auto* p : adv.parameters())
    for (float g : p->grad) EXPECT_EQ(g, 0.0f);
  double grad_norm = 0.0;
  for (auto* p : clf.parameters())
    for (float g : p->grad) grad_norm += std::abs(g);
  EXPECT_GT(grad_norm, 0.0);
  EXPECT_EQ(clf.snapshot(), clf_before);
}

TEST(AdversarialAlignment, AdversarialTermOpposesAdversary) {
  const auto gen = small_oracle();
  const auto pool = sample_synthetic(*gen, 64, kUniformLabels, CodeDistribution::kUniformEval, 6);
  Classifier clf(tiny_config(), 5, 16);
  AdversarialAlignment adv(8, 5, 10, 16, 1e-2, 7);
  const auto batch = make_synthetic_batch(pool, 3, 10, 32, 8, 0);
  for (int s = 0; s < 5; ++s) adv.adversary_step(clf, batch);

  auto grads = [&](double weight) {
    for (auto* p : clf.parameters()) p->zero_grad();
    adv.classifier_gradients(clf, batch, weight);
    std::vector<float> out;
    for (auto* p : clf.parameters()) out.insert(out.end(), p->grad.begin(), p->grad.end());
    return out;
  };
  const auto g0 = grads(0.0), g1 = grads(1.0), g2 = grads(2.0);
  EXPECT_NE(g0, g1);
  // Gradients are affine in the weight.
  for (size_t k = 0; k < g0.size(); k += 37)
    EXPECT_NEAR(g2[k] - g1[k], g1[k] - g0[k], 1e-5f + 1e-3f * std::abs(g1[k] - g0[k]));
}

TEST(AdversarialAlignment, CappedCrossEntropyStopsAtChance) {
  // Rows: confidently right, confidently wrong, uniform.
  nn::Tensor logits(3, 4);
  logits(0, 1) = 5.0f;
  logits(1, 2) = 5.0f;
  const std::vector<int> bins{1, 1, 1};
  nn::Tensor d;
  const double capped = capped_cross_entropy(logits, bins, &d, -2.0);

  nn::Tensor row0(1, 4);
  row0(0, 1) = 5.0f;
  nn::Tensor d_row0;
  const double ce0 = cross_entropy(row0, std::vector<int>{1}, &d_row0, -2.0);
  EXPECT_NEAR(capped, (ce0 + 2.0 * std::log(4.0)) / 3.0, 1e-6);
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(d(0, j), d_row0(0, j) / 3.0f, 1e-7);
    EXPECT_EQ(d(1, j), 0.0f);
    EXPECT_EQ(d(2, j), 0.0f);
  }
}

TEST(AdversarialAlignment, ConfusionLossIsMinimalAtUniform) {
  nn::Tensor uniform(2, 5);
  nn::Tensor d;
  EXPECT_NEAR(confusion_loss(uniform, &d), std::log(5.0), 1e-9);
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(d(0, j), 0.0f, 1e-9);
  nn::Tensor peaked(2, 5);
  peaked(0, 0) = 3.0f;
  EXPECT_GT(confusion_loss(peaked, nullptr), std::log(5.0));
}

TEST(AdversarialAlignment, ZeroWeightEqualsPlainMixedTraining) {
  const auto gen = small_oracle();
  const auto train = generate_dataset(small_world(), 48, 10);
  InterventionConfig iv;
  iv.kind = InterventionKind::kAA;
  iv.factor_index = 3;
  iv.aa_weight = 0.0;
  iv.seed = 11;
  const auto aa = train_aa(train, *gen, 3, 64, kUniformLabels, tiny_config(), iv);

  const auto pool = sample_synthetic(*gen, 64, kUniformLabels, CodeDistribution::kUniformEval,
                                     derive_seed(iv.seed, 3, salt::kSynthetic));
  MixedTrainingOptions plain;
  plain.factor_index = 3;
  plain.adversarial = false;
  plain.seed = derive_seed(iv.seed, 3, salt::kAdversary);
  const auto mixed = train_mixed(train, pool, tiny_config(), 5, 16, plain);
  EXPECT_EQ(aa.snapshot(), mixed.snapshot());
  EXPECT_EQ(aa.metadata()["recipe"], "AA");
}

TEST(SemanticConsistency, KlDirectEvaluation) {
  EXPECT_NEAR(kl_probs(std::vector<double>{0.9, 0.1}, std::vector<double>{0.1, 0.9}), 0.8 * std::log(9.0), 1e-12);
  EXPECT_NEAR(kl_probs(std::vector<double>{0.9, 0.1}, std::vector<double>{0.1, 0.9}), 1.7578, 1e-4);
  EXPECT_EQ(kl_probs(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}), 0.0);
  const std::vector<double> a{std::log(0.9), std::log(0.1)}, b{std::log(0.1), std::log(0.9)};
  EXPECT_NEAR(kl_divergence(a, b), 0.8 * std::log(9.0), 1e-12);
}

TEST(SemanticConsistency, KlGradientsIncludingClampedEntries) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> wide(-20.0, 20.0), narrow(-2.0, 2.0);
  const double h = 1e-6;
  for (int t = 0; t < 100; ++t) {
    const size_t k = 2 + rng() % 5;
    std::vector<double> p(k), q(k);
    // Wide logits push some probabilities under the clamp.
    auto& d = t % 2 == 0 ? narrow : wide;
    for (size_t j = 0; j < k; ++j) {
      p[j] = d(rng);
      q[j] = d(rng);
    }
    std::vector<double> gp, gq;
    kl_divergence(p, q, &gp, &gq);
    for (size_t j = 0; j < k; ++j) {
      auto pu = p, pd = p, qu = q, qd = q;
      pu[j] += h;
      pd[j] -= h;
      qu[j] += h;
      qd[j] -= h;
      const double fp = (kl_divergence(pu, q) - kl_divergence(pd, q)) / (2 * h);
      const double fq = (kl_divergence(p, qu) - kl_divergence(p, qd)) / (2 * h);
      EXPECT_NEAR(gp[j], fp, 1e-4 * std::max(1e-3, std::abs(fp))) << "t=" << t << " j=" << j;
      EXPECT_NEAR(gq[j], fq, 1e-4 * std::max(1e-3, std::abs(fq))) << "t=" << t << " j=" << j;
    }
  }
}

TEST(SemanticConsistency, ConsistencyGradientsMatchFiniteDifferences) {
  EXPECT_EQ(testing::check_consistency_gradients(100, 13), 0);
}

TEST(SemanticConsistency, ForwardModeStopsGradientAtReference) {
  nn::Tensor ref(2, 3), cf(2, 3);
  for (size_t k = 0; k < ref.size(); ++k) {
    ref.data[k] = static_cast<float>(k) * 0.3f;
    cf.data[k] = 1.0f - static_cast<float>(k) * 0.2f;
  }
  nn::Tensor d_ref, d_cf;
  const double fwd = consistency_loss(ref, cf, false, &d_ref, &d_cf);
  for (float g : d_ref.data) EXPECT_EQ(g, 0.0f);
  EXPECT_GT(fwd, 0.0);
  const double sym = consistency_loss(ref, cf, true, &d_ref, &d_cf);
  const double rev = consistency_loss(cf, ref, false, nullptr, nullptr);
  EXPECT_NEAR(sym, 0.5 * (fwd + rev), 1e-12);
}

TEST(SemanticConsistency, LossIsZeroForIdenticalImagesOrConstantClassifier) {
  const auto gen = small_oracle();
  const auto codes = sample_codes(gen->info(), 12, kUniformLabels, CodeDistribution::kUniformEval, 14);
  Classifier clf(tiny_config(), 5, 16);
  std::vector<double> same;
  for (const auto& c : codes) same.push_back(c.c[3]);
  EXPECT_EQ(sc_loss(clf, *gen, codes, 3, same), 0.0);

  // Zeroing the head weights leaves only the bias: a constant output.
  for (auto* p : clf.parameters()) std::fill(p->value.begin(), p->value.end(), 0.0f);
  EXPECT_EQ(sc_loss(clf, *gen, codes, 3, 99), 0.0);

  Classifier live(tiny_config(), 5, 16);
  const double v = sc_loss(live, *gen, codes, 3, 99);
  EXPECT_GE(v, 0.0);
  EXPECT_EQ(v, sc_loss(live, *gen, codes, 3, 99));
  EXPECT_THROW(sc_loss(live, *gen, std::span<const LatentCode>(), 3, 99), InputError);
}

TEST(SemanticConsistency, ZeroWeightEqualsBaselineTraining) {
  const auto gen = small_oracle();
  const auto train = generate_dataset(small_world(), 48, 15);
  InterventionConfig iv;
  iv.kind = InterventionKind::kSC;
  iv.factor_index = 3;
  iv.sc_weight = 0.0;
  const auto sc = train_sc(train, *gen, 3, kUniformLabels, tiny_config(), iv);
  const auto base = train_classifier(train, tiny_config(), 5, 16);
  EXPECT_EQ(sc.snapshot(), base.snapshot());
}

TEST(ApplyIntervention, DispatchRecordsMetadata) {
  const auto train = generate_dataset(small_world(), 32, 16);
  InterventionContext ctx;
  ctx.train = train;
  ctx.test_size = 8;
  ctx.generator = small_oracle();
  ctx.label_dist = kUniformLabels;
  ctx.classifier = tiny_config();
  ctx.image_size = 16;

  InterventionConfig iv;
  iv.factor_index = 3;
  iv.da_multiplier = 2.0;
  const auto da = apply_intervention(iv, ctx);
  EXPECT_EQ(da.metadata()["augmented_size"], 48);
  EXPECT_EQ(da.metadata()["intervention_name"], "DA-4");
  EXPECT_TRUE(da.metadata().contains("config_hash"));

  iv.kind = InterventionKind::kAA;
  iv.aa_weight = 0.0;
  const auto aa = apply_intervention(iv, ctx);
  EXPECT_EQ(aa.metadata()["recipe"], "AA");

  iv.kind = InterventionKind::kSC;
  iv.sc_weight = 0.0;
  const auto sc = apply_intervention(iv, ctx);
  EXPECT_EQ(sc.snapshot(), train_classifier(train, tiny_config(), 5, 16).snapshot());

  iv.factor_index = 12;
  EXPECT_THROW(apply_intervention(iv, ctx), InputError);
}

// Small oracle pipeline with injected sensitivity, shared by the training
// effect checks below.
struct Pipeline {
  WorldSpec spec;
  GeneratorHandle gen;
  std::vector<Sample> train;
  ClassifierConfig config;
};

Pipeline make_pipeline() {
  Pipeline p;
  p.spec = WorldSpec::standard();
  p.spec.factors[1].sensitivity = 0.8;
  p.gen = oracle_generator(p.spec, {default_code_mapping(p.spec, 3, 1)});
  p.train = generate_dataset(p.spec, 1000, 21);
  p.config.widths = {8, 16, 32, 32};
  p.config.epochs = 4;
  p.config.seed = 22;
  return p;
}

TEST(TrainingEffects, AdversaryIsWeakerAgainstAlignedClassifier) {
  const auto p = make_pipeline();
  InterventionConfig iv;
  iv.kind = InterventionKind::kAA;
  iv.factor_index = 3;
  iv.seed = 23;
  const auto base = train_classifier(p.train, p.config, 5, 32);
  const auto aa = train_aa(p.train, *p.gen, 3, 2000, kUniformLabels, p.config, iv);
  const auto probe_train = sample_synthetic(*p.gen, 2000, kUniformLabels, CodeDistribution::kUniformEval, 24);
  const auto heldout = sample_synthetic(*p.gen, 1000, kUniformLabels, CodeDistribution::kUniformEval, 25);
  const double against_base = adversary_probe(base, probe_train, heldout, 3, 10, 64, 300, 64, 1e-3, 26);
  const double against_aa = adversary_probe(aa, probe_train, heldout, 3, 10, 64, 300, 64, 1e-3, 26);
  EXPECT_LT(against_aa, against_base);
}

TEST(TrainingEffects, ConsistencyTrainingLowersConsistencyLoss) {
  const auto p = make_pipeline();
  InterventionConfig iv;
  iv.kind = InterventionKind::kSC;
  iv.factor_index = 3;
  iv.seed = 27;
  const auto base = train_classifier(p.train, p.config, 5, 32);
  const auto sc = train_sc(p.train, *p.gen, 3, kUniformLabels, p.config, iv);
  const auto codes = sample_codes(p.gen->info(), 1000, kUniformLabels, CodeDistribution::kUniformEval, 28);
  EXPECT_LT(sc_loss(sc, *p.gen, codes, 3, 29), sc_loss(base, *p.gen, codes, 3, 29));
}

}  // namespace
}  // namespace factorlab

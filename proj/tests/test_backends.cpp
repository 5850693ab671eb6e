// tests/test_backends.cpp

// Copyright 2026  The sasv-toolkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "sasv/backends.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

namespace sasv {
namespace {

AspAttention random_attention(std::size_t d, std::size_t a, Rng& rng) {
  return {synthetic::random_dense(d, a, rng), synthetic::random_dense(a, 1, rng)};
}

AspBackend random_asp(std::size_t d, std::size_t a, std::size_t e, Rng& rng) {
  AspBackend b;
  b.attention = random_attention(d, a, rng);
  b.projection = synthetic::random_dense(2 * d, e, rng, 0.3);
  b.classifier = synthetic::random_dense(e, 2, rng);
  return b;
}

MlpBackend random_mlp(std::size_t d, std::size_t h, Rng& rng) {
  MlpBackend b;
  b.layers = {synthetic::random_dense(d, h, rng), synthetic::random_dense(h, h, rng),
              synthetic::random_dense(h, h, rng)};
  b.classifier = synthetic::random_dense(h, 2, rng);
  b.slope = 0.1;
  return b;
}

Matrix permute_rows(const Matrix& m, Rng& rng) {
  std::vector<std::size_t> idx(m.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Matrix out(m.rows(), m.cols());
  for (std::size_t t = 0; t < m.rows(); ++t)
    std::copy(m.row(idx[t]).begin(), m.row(idx[t]).end(), out.row(t).begin());
  return out;
}

TEST(AspPool, SingleFrame) {
  Rng rng(1);
  const AspAttention att = random_attention(4, 5, rng);
  const Matrix h(1, 4, {0.5, -1, 2, 3});
  const Vector s = asp_pool(h, att);
  for (int j = 0; j < 4; ++j) {
    EXPECT_EQ(s[j], h(0, j));
    EXPECT_DOUBLE_EQ(s[4 + j], std::sqrt(kDefaultSigmaFloor));
  }
}

TEST(AspPool, IdenticalFramesHaveZeroSpread) {
  Rng rng(2);
  Matrix h(6, 3);
  for (std::size_t t = 0; t < 6; ++t) {
    h(t, 0) = 1.5;
    h(t, 1) = -2.0;
    h(t, 2) = 0.25;
  }
  for (int rep = 0; rep < 3; ++rep) {
    const Vector s = asp_pool(h, random_attention(3, 4, rng));
    EXPECT_NEAR(s[0], 1.5, 1e-12);
    EXPECT_NEAR(s[1], -2.0, 1e-12);
    EXPECT_NEAR(s[2], 0.25, 1e-12);
    for (int j = 3; j < 6; ++j) EXPECT_LT(s[j], 1e-4);
  }
}

TEST(AspPool, MatchesBruteForce) {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix h = synthetic::random_matrix(3, 4, rng);
    const AspAttention att = random_attention(4, 5, rng);
    const AspPoolTrace tr = asp_pool_forward(h, att);
    const auto ref = oracle::asp(h, att, kDefaultSigmaFloor);
    for (int t = 0; t < 3; ++t) EXPECT_NEAR(tr.weights[t], ref.weights[t], 1e-10);
    for (int j = 0; j < 4; ++j) {
      EXPECT_NEAR(tr.stats[j], ref.mean[j], 1e-10);
      EXPECT_NEAR(tr.stats[4 + j], ref.stddev[j], 1e-10);
    }
  }
}

TEST(AspPool, WeightsNormalizedAndFramePermutationInvariant) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix h = synthetic::random_matrix(7, 5, rng, 2.0);
    const AspAttention att = random_attention(5, 6, rng);
    const AspPoolTrace tr = asp_pool_forward(h, att);
    EXPECT_NEAR(std::accumulate(tr.weights.begin(), tr.weights.end(), 0.0), 1.0, 1e-10);
    for (double w : tr.weights) EXPECT_GT(w, 0.0);
    for (int j = 5; j < 10; ++j) EXPECT_GE(tr.stats[j], 0.0);
    const Vector permuted = asp_pool(permute_rows(h, rng), att);
    for (std::size_t j = 0; j < permuted.size(); ++j) EXPECT_NEAR(permuted[j], tr.stats[j], 1e-10);
  }
}

TEST(CmEmbed, AspZeroProjectionGivesZeroEmbedding) {
  Rng rng(5);
  AspBackend b = random_asp(4, 3, 6, rng);
  b.projection = b.projection.zeros_like();
  const FeatureMatrix f{"u", 0, synthetic::random_matrix(5, 4, rng)};
  const CmEmbedding e = cm_embed(b, f);
  EXPECT_EQ(e.utterance_id, "u");
  EXPECT_EQ(e.source, BackendKind::kAsp);
  for (double v : e.values) EXPECT_EQ(v, 0.0);
}

TEST(CmEmbed, AspIsCompositionOfPoolAndProjection) {
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const AspBackend b = random_asp(4, 3, 6, rng);
    const Matrix h = synthetic::random_matrix(5, 4, rng);
    const auto ref = oracle::asp(h, b.attention, b.sigma_floor);
    Vector stats = ref.mean;
    stats.insert(stats.end(), ref.stddev.begin(), ref.stddev.end());
    const Vector want = oracle::dense(b.projection, stats);
    const Vector got = embed(b, h);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10);
    EXPECT_EQ(embed(b, h), got);
  }
}

TEST(CmEmbed, ConstantFeaturesIgnoreAttention) {
  Rng rng(7);
  Matrix h(8, 3);
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t j = 0; j < 3; ++j) h(t, j) = 0.3 * static_cast<double>(j) - 1.0;
  AspBackend a = random_asp(3, 4, 5, rng);
  AspBackend b = a;
  b.attention = random_attention(3, 4, rng);
  const Vector ea = embed(a, h), eb = embed(b, h);
  for (std::size_t i = 0; i < ea.size(); ++i) EXPECT_NEAR(ea[i], eb[i], 1e-8);
}

TEST(CmEmbed, MlpMatchesOracleAndIgnoresFrameOrder) {
  Rng rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const MlpBackend b = random_mlp(4, 6, rng);
    const Matrix h = synthetic::random_matrix(9, 4, rng);
    Vector x(4, 0.0);
    for (std::size_t t = 0; t < 9; ++t)
      for (int j = 0; j < 4; ++j) x[j] += h(t, j) / 9.0;
    for (const auto& l : b.layers) x = oracle::lrelu(oracle::dense(l, x), b.slope);
    const Vector got = embed(b, h);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(got[i], x[i], 1e-12);
    const Vector permuted = embed(b, permute_rows(h, rng));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(permuted[i], got[i], 1e-10);
  }
}

TEST(CmEmbed, DimensionMismatchThrows) {
  Rng rng(9);
  const AspBackend a = random_asp(4, 3, 6, rng);
  const MlpBackend m = random_mlp(4, 6, rng);
  EXPECT_THROW(embed(a, Matrix(3, 5)), ShapeError);
  EXPECT_THROW(embed(m, Matrix(3, 5)), ShapeError);
  EXPECT_THROW(cm_score(a, Vector(5)), ShapeError);
}

TEST(CmScore, ZeroClassifierScoresZero) {
  Rng rng(10);
  AspBackend b = random_asp(4, 3, 6, rng);
  b.classifier = b.classifier.zeros_like();
  for (int rep = 0; rep < 5; ++rep) EXPECT_EQ(cm_score(b, synthetic::random_vector(6, rng)), 0.0);
}

TEST(CmScore, NegatedClassifierFlipsSignAndMatchesOracle) {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    AspBackend b = random_asp(4, 3, 6, rng);
    const Vector e = synthetic::random_vector(6, rng);
    const double s = cm_score(b, e);
    double want = b.classifier.bias[0] - b.classifier.bias[1];
    for (int i = 0; i < 6; ++i) want += (b.classifier.weight(0, i) - b.classifier.weight(1, i)) * e[i];
    EXPECT_NEAR(s, want, 1e-12);
    for (double& w : b.classifier.weight.data()) w = -w;
    for (double& v : b.classifier.bias) v = -v;
    EXPECT_NEAR(cm_score(b, e), -s, 1e-12);
  }
}

std::vector<CmExample> small_batch(std::size_t frames, std::size_t dim, Rng& rng) {
  std::vector<CmExample> xs;
  for (int i = 0; i < 3; ++i)
    xs.push_back({{"u" + std::to_string(i), 0, synthetic::random_matrix(frames, dim, rng, 1.0 + i)},
                  i == 1 ? Label::kBonafide : Label::kSpoof,
                  i == 1 ? std::nullopt : std::optional<std::string>("A07")});
  return xs;
}

template <class Backend>
double check_batch_gradient(Backend b, const std::vector<CmExample>& xs) {
  std::vector<const CmExample*> batch;
  for (const auto& x : xs) batch.push_back(&x);
  const CmClassWeights w{0.9, 0.1};
  Backend grad = b.zeros_like();
  cm_batch_loss<Backend>(b, batch, w, &grad);
  return grad_check([&] { return cm_batch_loss<Backend>(b, batch, w, nullptr); }, b.params(),
                    grad.params(), 1e-4);
}

TEST(CmLoss, AspGradientMatchesFiniteDifferences) {
  Rng rng(12);
  for (int rep = 0; rep < 3; ++rep)
    EXPECT_LT(check_batch_gradient(random_asp(4, 3, 5, rng), small_batch(3, 4, rng)), 1e-4);
}

TEST(CmLoss, MlpGradientMatchesFiniteDifferences) {
  Rng rng(13);
  for (int rep = 0; rep < 3; ++rep)
    EXPECT_LT(check_batch_gradient(random_mlp(4, 5, rng), small_batch(6, 4, rng)), 1e-4);
}

TEST(CmLoss, WeightedMeanOfPerExampleCrossEntropy) {
  Rng rng(14);
  const AspBackend b = random_asp(4, 3, 5, rng);
  const auto xs = small_batch(3, 4, rng);
  std::vector<const CmExample*> batch{&xs[0], &xs[1], &xs[2]};
  double num = 0, den = 0;
  for (const auto& x : xs) {
    const Vector logits = dense_apply(b.classifier, embed(b, x.features.values));
    const double p_bona = std::exp(logits[0]) / (std::exp(logits[0]) + std::exp(logits[1]));
    const double w = x.label == Label::kBonafide ? 0.9 : 0.1;
    num += w * -std::log(x.label == Label::kBonafide ? p_bona : 1.0 - p_bona);
    den += w;
  }
  EXPECT_NEAR(cm_batch_loss<AspBackend>(b, batch, {0.9, 0.1}, nullptr), num / den, 1e-12);
}

TEST(CropOrTile, CropsLongAndTilesShort) {
  Rng rng(15);
  const Matrix h = synthetic::random_matrix(10, 2, rng);
  const Matrix c = crop_or_tile(h, 4, rng);
  ASSERT_EQ(c.rows(), 4u);
  std::size_t start = 0;
  while (start < 7 && h(start, 0) != c(0, 0)) ++start;
  for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(c(t, 1), h(start + t, 1));
  const Matrix tiled = crop_or_tile(h, 25, rng);
  ASSERT_EQ(tiled.rows(), 25u);
  EXPECT_EQ(tiled(23, 0), h(3, 0));
  EXPECT_EQ(crop_or_tile(h, 0, rng), h);
}

CmTrainConfig quick_config() { return synthetic::cm_task_config(); }

TEST(TrainCm, SeparableVarianceTaskReachesLowDevEer) {
  synthetic::CmTaskSpec spec;
  const auto train = synthetic::cm_task(spec, 100);
  spec.prefix = "dev";
  const auto dev = synthetic::cm_task(spec, 200);
  Rng rng(1);
  const auto result = train_cm(AspBackend::init({8, 128, 160}, rng), train, dev, quick_config());
  ASSERT_EQ(result.history.size(), 20u);
  EXPECT_LT(result.history[result.best_epoch - 1].dev_eer, 5.0);
  EXPECT_NEAR(cm_pooled_eer(result.model, dev), result.history[result.best_epoch - 1].dev_eer, 1e-12);
}

TEST(TrainCm, ZeroLearningRateLeavesParametersUnchanged) {
  synthetic::CmTaskSpec spec;
  spec.bonafide = spec.spoof = 20;
  const auto train = synthetic::cm_task(spec, 1);
  const auto dev = synthetic::cm_task(spec, 2);
  Rng rng(3);
  const MlpBackend init = MlpBackend::init({8, 16}, rng);
  auto cfg = quick_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  EXPECT_EQ(train_cm(init, train, dev, cfg).model, init);
}

TEST(TrainCm, DeterministicPerSeed) {
  synthetic::CmTaskSpec spec;
  spec.bonafide = spec.spoof = 30;
  const auto train = synthetic::cm_task(spec, 1);
  const auto dev = synthetic::cm_task(spec, 2);
  auto cfg = quick_config();
  cfg.epochs = 4;
  cfg.crop_frames = 12;
  Rng r1(3), r2(3);
  const auto a = train_cm(AspBackend::init({8, 16, 12}, r1), train, dev, cfg);
  const auto b = train_cm(AspBackend::init({8, 16, 12}, r2), train, dev, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].dev_eer, b.history[i].dev_eer);
  }
  EXPECT_EQ(a.model, b.model);
}

TEST(TrainCm, RejectsEmptyOrSingleClassSets) {
  synthetic::CmTaskSpec spec;
  spec.bonafide = spec.spoof = 5;
  const auto data = synthetic::cm_task(spec, 1);
  Rng rng(3);
  const AspBackend b = AspBackend::init({8, 4, 4}, rng);
  EXPECT_THROW(train_cm(b, std::span<const CmExample>{}, data, quick_config()), DataError);
  const std::vector<CmExample> only_bona(data.begin(), data.begin() + 5);
  EXPECT_THROW(train_cm(b, data, only_bona, quick_config()), DataError);
}

TEST(TrainCm, NonFiniteLossAborts) {
  synthetic::CmTaskSpec spec;
  spec.bonafide = spec.spoof = 5;
  auto data = synthetic::cm_task(spec, 1);
  for (auto& x : data)
    for (double& v : x.features.values.data()) v *= 1e200;
  Rng rng(3);
  MlpBackend b = MlpBackend::init({8, 4}, rng);
  for (auto& l : b.layers)
    for (double& w : l.weight.data()) w *= 1e100;
  EXPECT_THROW(train_cm(b, data, data, quick_config()), TrainingError);
}

}  // namespace
}  // namespace sasv

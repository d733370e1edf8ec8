// Copyright 2026 The ShapeAdv Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "shapeadv/data.hpp"
#include "shapeadv/models.hpp"

namespace shapeadv {
namespace {

PointCloud random_cloud(std::size_t n, std::mt19937_64& rng) {
  return normalize_unit_ball(PointCloud(oracle::random_points(n, rng)));
}

PointCloud permuted(PointCloud pc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(pc.points().begin(), pc.points().end(), rng);
  return pc;
}

Dataset small_dataset(std::size_t classes, std::size_t train, std::size_t test, std::size_t points) {
  DatasetConfig cfg;
  cfg.categories.assign(kAllCategories.begin(), kAllCategories.begin() + static_cast<std::ptrdiff_t>(classes));
  cfg.train_per_class = train;
  cfg.test_per_class = test;
  cfg.points = points;
  cfg.seed = 99;
  return build_dataset(cfg);
}

TEST(Classifier, LogitShapeAndVariableCloudSize) {
  const ClassifierModel m = init_classifier(5, 3);
  std::mt19937_64 rng(1);
  for (std::size_t n : {1u, 7u, 1024u}) {
    const Tensor logits = pointnet_forward(m, n == 1 ? PointCloud{{0.1, 0.2, 0.3}} : random_cloud(n, rng));
    EXPECT_EQ(logits.shape(), (Shape{5}));
    EXPECT_TRUE(logits.all_finite());
  }
  EXPECT_THROW(pointnet_forward(m, PointCloud{}), GeometryError);
  EXPECT_THROW(init_classifier(1, 0), std::invalid_argument);
}

TEST(Classifier, PermutationInvariantBitwise) {
  const ClassifierModel m = init_classifier(8, 4);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const PointCloud pc = random_cloud(256, rng);
    const Tensor ref = pointnet_forward(m, pc);
    EXPECT_EQ(pointnet_forward(m, permuted(pc, static_cast<std::uint64_t>(trial))), ref);
  }
}

TEST(Classifier, ZeroWeightsGiveHeadBias) {
  ClassifierModel m = init_classifier(3, 5);
  for (Dense& d : m.point_mlp) {
    d.weight.fill(0.0);
    d.bias.fill(0.0);
  }
  for (Dense& d : m.head) {
    d.weight.fill(0.0);
    d.bias.fill(0.0);
  }
  m.head.back().bias = Tensor::vector({0.5, -1.0, 2.0});
  EXPECT_EQ(pointnet_forward(m, {{1, 2, 3}, {4, 5, 6}}), Tensor::vector({0.5, -1.0, 2.0}));
  EXPECT_EQ(predict(m, {{1, 2, 3}}), 2u);
}

TEST(Classifier, ArgmaxTiesGoToLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{1, 3, 3, 2}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{0, 0}), 0u);
}

TEST(Classifier, SeparableClassesReachFullTrainAccuracy) {
  // Two clusters far apart along x.
  std::mt19937_64 rng(6);
  std::vector<LabeledCloud> train;
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t label = 0; label < 2; ++label) {
      PointCloud pc(oracle::random_points(32, rng, 0.1));
      for (Point3& p : pc.points()) p[0] += label == 0 ? -1.0 : 1.0;
      train.push_back({pc, label});
    }
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.seed = 3;
  const auto trained = train_classifier(train, {}, 2, cfg, ClassifierArch{{16, 32}, {16}});
  EXPECT_EQ(accuracy(trained.model, train), 1.0);
  EXPECT_EQ(trained.history.size(), 5u);
}

TEST(Classifier, TrainingIsDeterministicPerSeed) {
  const Dataset ds = small_dataset(3, 8, 4, 64);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 11;
  const ClassifierArch arch{{16, 32}, {16}};
  const auto a = train_classifier(ds.train, ds.test, 3, cfg, arch);
  const auto b = train_classifier(ds.train, ds.test, 3, cfg, arch);
  EXPECT_EQ(encode_model(a.model), encode_model(b.model));
  for (const LabeledCloud& e : ds.test) EXPECT_EQ(predict(a.model, e.cloud), predict(b.model, e.cloud));
  cfg.seed = 12;
  const auto c = train_classifier(ds.train, ds.test, 3, cfg, arch);
  EXPECT_NE(encode_model(a.model), encode_model(c.model));
}

TEST(Classifier, RejectsEmptyClassAndBadConfig) {
  const Dataset ds = small_dataset(2, 2, 1, 16);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train_classifier(ds.train, {}, 3, cfg), std::invalid_argument);
  cfg.epochs = 0;
  EXPECT_THROW(train_classifier(ds.train, {}, 2, cfg), std::invalid_argument);
}

TEST(Autoencoder, CodeAndOutputShapes) {
  std::mt19937_64 rng(7);
  for (DecoderKind kind : {DecoderKind::Mlp, DecoderKind::Patch}) {
    const AutoencoderModel ae = init_autoencoder(kind, 256, 8);
    const LatentCode z = encode(ae, random_cloud(100, rng));
    EXPECT_EQ(z.shape(), (Shape{kLatentDim}));
    EXPECT_EQ(decode(ae, z).size(), 256u);
    Tensor other(Shape{kLatentDim});
    std::normal_distribution<double> g(0.0, 3.0);
    for (double& v : other.data()) v = g(rng);
    EXPECT_EQ(decode(ae, other).size(), 256u);
  }
  const AutoencoderModel ae = init_autoencoder(DecoderKind::Mlp, 64, 8);
  EXPECT_THROW(decode(ae, Tensor(Shape{127})), ShapeError);
  EXPECT_THROW(init_autoencoder(DecoderKind::Patch, 255, 1), std::invalid_argument);
}

TEST(Autoencoder, EncoderIsPermutationInvariantBitwise) {
  const AutoencoderModel ae = init_autoencoder(DecoderKind::Mlp, 64, 9);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const PointCloud pc = random_cloud(256, rng);
    EXPECT_EQ(encode(ae, permuted(pc, static_cast<std::uint64_t>(trial))), encode(ae, pc));
  }
}

TEST(Autoencoder, PatchDecoderPartitionsPoints) {
  // Each patch owns a contiguous block of P/Q rows; perturbing one patch's
  // weights moves only that block.
  AutoencoderModel ae = init_autoencoder(DecoderKind::Patch, 256, 10);
  ASSERT_EQ(ae.patches.size(), 4u);
  EXPECT_EQ(ae.grid.shape(), (Shape{64, 2}));
  Tensor z(Shape{kLatentDim}, 0.1);
  const PointCloud before = decode(ae, z);
  ae.patches[2].layers.back().bias[0] += 1.0;
  const PointCloud after = decode(ae, z);
  for (std::size_t i = 0; i < 256; ++i) {
    const bool owned = i >= 128 && i < 192;
    EXPECT_EQ(before[i] != after[i], owned) << i;
  }
}

TEST(Autoencoder, DecoderGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (DecoderKind kind : {DecoderKind::Mlp, DecoderKind::Patch}) {
    const AutoencoderModel ae = init_autoencoder(kind, 64, 13);
    Tape tape;
    const AutoencoderNodes nodes = bind(tape, ae, LeafKind::Constant);
    Tensor z(Shape{kLatentDim});
    std::normal_distribution<double> g(0.0, 0.5);
    for (double& v : z.data()) v = g(rng);
    const NodeId out = decoder_points(tape, nodes, tape.parameter(z));
    Tensor w(Shape{64, 3});
    for (double& v : w.data()) v = g(rng);
    const NodeId loss = tape.sum(tape.mul(out, tape.constant(w)));
    EXPECT_LT(finite_difference_check(tape, loss, 1e-6), 1e-5) << decoder_name(kind);
  }
}

TEST(Autoencoder, TrainingIsDeterministicAndReducesLoss) {
  const Dataset ds = small_dataset(2, 6, 2, 64);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 5;
  const AutoencoderArch arch{{16, 32}, {64}, 4, 32};
  const auto a = train_autoencoder(ds.train, ds.test, cfg, DecoderKind::Mlp, 64, arch);
  const auto b = train_autoencoder(ds.train, ds.test, cfg, DecoderKind::Mlp, 64, arch);
  EXPECT_EQ(encode_model(a.model), encode_model(b.model));
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_LT(a.history.back().loss, a.history.front().loss);
  EXPECT_GT(a.history.back().test_chamfer, 0.0);
  EXPECT_THROW(train_autoencoder({}, {}, cfg, DecoderKind::Mlp, 64), std::invalid_argument);
}

TEST(Autoencoder, LossStrictlyDecreasesOverFirstFiveEpochsOnDefaults) {
  const Dataset ds = build_dataset(DatasetConfig{});
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto trained = train_autoencoder(ds.train, {}, cfg, DecoderKind::Mlp, ds.points);
  for (std::size_t e = 1; e < trained.history.size(); ++e) {
    EXPECT_LT(trained.history[e].loss, trained.history[e - 1].loss) << "epoch " << e + 1;
  }
}

}  // namespace
}  // namespace shapeadv

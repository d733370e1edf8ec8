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

#include "rigs.hpp"
#include "shapeadv/attacks.hpp"

namespace shapeadv {
namespace {

// ---------------------------------------------------------------------------
// Losses

TEST(CwLoss, HandValues) {
  EXPECT_EQ(cw_targeted_loss(std::vector<double>{2, 5, 1}, 0), 3.0);
  EXPECT_EQ(cw_targeted_loss(std::vector<double>{5, 2, 1}, 0), 0.0);
  EXPECT_EQ(cw_targeted_loss(std::vector<double>{0, 0}, 1), 0.0);
  EXPECT_EQ(cw_untargeted_loss(std::vector<double>{2, 5, 1}, 1), 3.0);
  EXPECT_EQ(cw_untargeted_loss(std::vector<double>{5, 2, 1}, 1), 0.0);
  EXPECT_EQ(cw_untargeted_loss(std::vector<double>{3, 3}, 0), 0.0);
  EXPECT_THROW(cw_targeted_loss(std::vector<double>{1, 2}, 2), std::invalid_argument);
  EXPECT_THROW(cw_untargeted_loss(std::vector<double>{1}, 0), std::invalid_argument);
}

TEST(CwLoss, TapeMatchesPlainAndZeroIffGoal) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> coarse(-3, 3);  // coarse values make ties common
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(2 + static_cast<std::size_t>(trial) % 5);
    for (double& x : v) x = coarse(rng);
    const double top = *std::max_element(v.begin(), v.end());
    for (std::size_t c = 0; c < v.size(); ++c) {
      Tape t;
      const NodeId l = t.input(Tensor::vector(v));
      const double tl = cw_targeted_loss(v, c);
      const double ul = cw_untargeted_loss(v, c);
      EXPECT_EQ(t.value(cw_targeted_loss(t, l, c)).item(), tl);
      EXPECT_EQ(t.value(cw_untargeted_loss(t, l, c)).item(), ul);
      EXPECT_GE(tl, 0.0);
      EXPECT_GE(ul, 0.0);
      EXPECT_EQ(tl == 0.0, v[c] == top);
      bool other_top = false;
      for (std::size_t o = 0; o < v.size(); ++o) other_top |= o != c && v[o] == top;
      EXPECT_EQ(ul == 0.0, other_top);
    }
  }
}

TEST(AttackConfig, Validation) {
  AttackConfig cfg;
  cfg.mode = AttackMode::Targeted;
  cfg.target = 1;
  EXPECT_THROW(validate(cfg, 1, 3), std::invalid_argument);
  cfg.target = 3;
  EXPECT_THROW(validate(cfg, 1, 3), std::invalid_argument);
  cfg.target = 2;
  EXPECT_NO_THROW(validate(cfg, 1, 3));
  cfg.lambda_lo = 10.0;
  cfg.lambda_hi = 1.0;
  EXPECT_THROW(validate(cfg, 1, 3), std::invalid_argument);
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_THROW(parse_method("cluster"), std::invalid_argument);
  EXPECT_EQ(parse_mode("targeted"), AttackMode::Targeted);
}

// ---------------------------------------------------------------------------
// Toy rig: linear head on the first three latent coordinates.

struct Toy {
  ClassifierModel clf;
  AutoencoderModel ae;
  std::array<double, 3> w{};  // logit_0 - logit_1 = w . p + c
  double c = 0.0;
};

// Classifier on a single point p: [I, -I] ReLU layer, max-pool over one
// point, head [U; -U] + b, so logits = U^T p + b. The auto-encoder maps p
// to z = (p, 0, ...) and decodes z to the one point (z_0, z_1, z_2).
Toy make_toy() {
  Toy toy;
  const std::array<std::array<double, 2>, 3> u{{{1.5, -0.5}, {-0.25, 0.75}, {0.4, 0.1}}};
  const std::array<double, 2> b{0.3, -0.2};
  toy.clf = init_classifier(2, 1, ClassifierArch{{6}, {}});
  Tensor w1(Shape{3, 6}, 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    w1.at(k, k) = 1.0;
    w1.at(k, k + 3) = -1.0;
  }
  toy.clf.point_mlp[0] = {w1, Tensor(Shape{6}, 0.0)};
  Tensor head(Shape{6, 2}, 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 2; ++j) {
      head.at(k, j) = u[k][j];
      head.at(k + 3, j) = -u[k][j];
    }
    toy.w[k] = u[k][0] - u[k][1];
  }
  toy.clf.head[0] = {head, Tensor::vector({b[0], b[1]})};
  toy.c = b[0] - b[1];

  toy.ae = init_autoencoder(DecoderKind::Mlp, 1, 1, AutoencoderArch{{6}, {}, 4, 8});
  toy.ae.encoder_point_mlp[0] = {w1, Tensor(Shape{6}, 0.0)};
  Tensor enc(Shape{6, kLatentDim}, 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    enc.at(k, k) = 1.0;
    enc.at(k + 3, k) = -1.0;
  }
  toy.ae.encoder_out = {enc, Tensor(Shape{kLatentDim}, 0.0)};
  Tensor dec(Shape{kLatentDim, 3}, 0.0);
  for (std::size_t k = 0; k < 3; ++k) dec.at(k, k) = 1.0;
  toy.ae.mlp_decoder[0] = {dec, Tensor(Shape{3}, 0.0)};
  return toy;
}

TEST(LatentL2, ToyRigReachesHyperplaneDistance) {
  const Toy toy = make_toy();
  const double wn = std::sqrt(toy.w[0] * toy.w[0] + toy.w[1] * toy.w[1] + toy.w[2] * toy.w[2]);
  for (const PointCloud& x : {PointCloud{{0.8, -0.3, 0.5}}, PointCloud{{-0.6, 0.4, -0.2}}}) {
    const LatentCode z = encode(toy.ae, x);
    ASSERT_EQ(decode(toy.ae, z), x);
    const double margin = toy.w[0] * x[0][0] + toy.w[1] * x[0][1] + toy.w[2] * x[0][2] + toy.c;
    const std::size_t y = margin >= 0.0 ? 0 : 1;
    ASSERT_EQ(predict(toy.clf, x), y);
    AttackConfig cfg;
    cfg.steps = 1000;
    cfg.lambda_hi = 100.0;
    const AttackResult r = run_attack(Method::LatentL2, {&toy.clf, &toy.ae, {}}, x, y, cfg);
    ASSERT_TRUE(r.success);
    const double analytic = std::fabs(margin) / wn;
    EXPECT_NEAR(*r.latent_l2, analytic, 0.05 * analytic);
    EXPECT_GE(*r.latent_l2, analytic * (1.0 - 1e-9));
  }
}

// ---------------------------------------------------------------------------
// Trained small rig

const rigs::Small& rig() { return rigs::small(); }

// A test instance classified correctly through the auto-encoder, with the
// largest untargeted margin among the first few.
std::size_t robust_instance() {
  const auto& s = rig();
  std::size_t best = 0;
  double margin = -1.0;
  for (std::size_t i = 0; i < s.data.test.size(); ++i) {
    const auto& e = s.data.test[i];
    const Tensor l = pointnet_forward(s.classifier, reconstruct(s.autoencoder, e.cloud));
    const double m = cw_untargeted_loss(l.data(), e.label);
    if (m > margin && predict(s.classifier, e.cloud) == e.label) {
      margin = m;
      best = i;
    }
  }
  return best;
}

AttackConfig fixed(double lambda, std::size_t steps) {
  AttackConfig cfg;
  cfg.lambda = lambda;
  cfg.steps = steps;
  cfg.lambda_search = false;
  return cfg;
}

TEST(LatentAttacks, AlreadyMisclassifiedReturnsTheCode) {
  const auto& s = rig();
  const PointCloud& x = s.data.test[0].cloud;
  const LatentCode z = encode(s.autoencoder, x);
  const PointCloud recon = decode(s.autoencoder, z);
  const std::size_t wrong = (predict(s.classifier, recon) + 1) % 3;
  const AttackResult a = shapeadv_latent_l2(s.classifier, s.autoencoder, x, wrong, fixed(1.0, 50));
  EXPECT_TRUE(a.success);
  EXPECT_EQ(*a.latent, z);
  EXPECT_EQ(*a.latent_l2, 0.0);
  EXPECT_EQ(a.steps_run, 0u);
  const AttackResult c = shapeadv_chamfer(s.classifier, s.autoencoder, x, wrong, fixed(1.0, 50));
  EXPECT_TRUE(c.success);
  EXPECT_EQ(*c.latent, z);
  EXPECT_EQ(c.regularizer, chamfer_sq(x, recon));
}

TEST(LatentAttacks, HugeLambdaPinsTheCode) {
  const auto& s = rig();
  const std::size_t i = robust_instance();
  const auto& e = s.data.test[i];
  const LatentCode z = encode(s.autoencoder, e.cloud);
  const AttackResult a = shapeadv_latent_l2(s.classifier, s.autoencoder, e.cloud, e.label, fixed(1e9, 10));
  EXPECT_FALSE(a.success);
  EXPECT_LT(*a.latent_l2, 1e-6);
  const AttackResult c = shapeadv_chamfer(s.classifier, s.autoencoder, e.cloud, e.label, fixed(1e9, 10));
  EXPECT_FALSE(c.success);
  // The regularizer is anchored at x, so the code may only move to get closer to it.
  EXPECT_LE(c.regularizer, chamfer_sq(e.cloud, decode(s.autoencoder, z)));
}

TEST(LatentAttacks, ResultInvariants) {
  const auto& s = rig();
  const AttackContext ctx{&s.classifier, &s.autoencoder, s.data.train};
  AttackConfig cfg;
  cfg.steps = 60;
  cfg.rounds = 3;
  std::size_t successes = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& e = s.data.test[i * 3];
    for (AttackMode mode : {AttackMode::Untargeted, AttackMode::Targeted}) {
      cfg.mode = mode;
      cfg.target = (e.label + 1) % 3;
      for (Method m : kAllMethods) {
        const AttackResult r = run_attack(m, ctx, e.cloud, e.label, cfg);
        EXPECT_EQ(r.predicted, predict(s.classifier, r.adversary));
        if (r.success) {
          ++successes;
          EXPECT_TRUE(goal_met(cfg, e.label, predict(s.classifier, r.adversary))) << method_name(m);
        }
        if (is_latent(m)) {
          ASSERT_TRUE(r.latent.has_value());
          EXPECT_EQ(decode(s.autoencoder, *r.latent), r.adversary) << method_name(m);
        } else {
          EXPECT_FALSE(r.latent.has_value());
        }
        EXPECT_EQ(r.chamfer_to_input, chamfer_sq(e.cloud, r.adversary));
        EXPECT_FALSE(r.trace.empty());
      }
    }
  }
  EXPECT_GT(successes, 0u);
}

TEST(LatentAttacks, DeterministicPerSeed) {
  const auto& s = rig();
  const AttackContext ctx{&s.classifier, &s.autoencoder, s.data.train};
  AttackConfig cfg;
  cfg.steps = 40;
  cfg.rounds = 2;
  cfg.seed = 77;
  const auto& e = s.data.test[4];
  for (Method m : kAllMethods) {
    const AttackResult a = run_attack(m, ctx, e.cloud, e.label, cfg);
    const AttackResult b = run_attack(m, ctx, e.cloud, e.label, cfg);
    EXPECT_EQ(a.adversary, b.adversary) << method_name(m);
    EXPECT_EQ(a.lambda, b.lambda);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) EXPECT_EQ(a.trace[k].adversarial, b.trace[k].adversarial);
  }
}

void expect_same_trace(const AttackResult& a, const AttackResult& b) {
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    EXPECT_NEAR(a.trace[k].adversarial, b.trace[k].adversarial, 1e-12) << k;
    EXPECT_NEAR(a.trace[k].regularizer, b.trace[k].regularizer, 1e-12) << k;
  }
  EXPECT_EQ(a.adversary, b.adversary);
  EXPECT_EQ(a.success, b.success);
}

TEST(Auxiliary, ZeroNeighborsMatchesChamferAttack) {
  const auto& s = rig();
  const AttackContext ctx{&s.classifier, &s.autoencoder, s.data.train};
  AttackConfig cfg;
  cfg.steps = 80;
  cfg.rounds = 3;
  cfg.seed = 5;
  for (std::size_t i : {1u, 7u, 12u}) {
    const auto& e = s.data.test[i];
    AttackConfig k0 = cfg;
    k0.k = 0;
    const AttackResult aux = run_attack(Method::Auxiliary, ctx, e.cloud, e.label, k0);
    const AttackResult ch = run_attack(Method::Chamfer, ctx, e.cloud, e.label, cfg);
    expect_same_trace(aux, ch);
    EXPECT_EQ(aux.lambda, ch.lambda);
    EXPECT_TRUE(aux.auxiliary.empty());
  }
}

TEST(Auxiliary, DuplicateOfInputMatchesZeroNeighbors) {
  const auto& s = rig();
  const auto& e = s.data.test[2];
  // A training set whose only entry is a copy of x.
  const std::vector<LabeledCloud> copy{{e.cloud, e.label}};
  const std::vector<std::size_t> one{0};
  const AttackConfig cfg = fixed(0.5, 60);
  const AttackResult k1 = shapeadv_auxiliary(s.classifier, s.autoencoder, e.cloud, e.label, copy, one, cfg);
  const AttackResult k0 = shapeadv_auxiliary(s.classifier, s.autoencoder, e.cloud, e.label, copy, {}, cfg);
  // Same objective up to rounding: lambda/2 * (c + c) against lambda * c.
  ASSERT_EQ(k1.trace.size(), k0.trace.size());
  for (std::size_t k = 0; k < k1.trace.size(); ++k) {
    EXPECT_NEAR(k1.trace[k].adversarial, k0.trace[k].adversarial, 1e-12) << k;
    EXPECT_NEAR(k1.trace[k].regularizer, k0.trace[k].regularizer, 1e-12) << k;
  }
  EXPECT_LT(chamfer_sq(k1.adversary, k0.adversary), 1e-20);
  ASSERT_EQ(k1.auxiliary_chamfer.size(), 2u);
  EXPECT_EQ(k1.auxiliary_chamfer[0], k1.auxiliary_chamfer[1]);
}

TEST(Auxiliary, RecordsNeighborsAndDistances) {
  const auto& s = rig();
  const auto& e = s.data.test[3];
  AttackConfig cfg = fixed(1.0, 30);
  cfg.k = 2;
  const AttackResult r = shapeadv_auxiliary(s.classifier, s.autoencoder, e.cloud, e.label, s.data.train, cfg);
  const auto nn = knn_chamfer(e.cloud, s.data.train, 2, e.label);
  ASSERT_EQ(r.auxiliary.size(), 2u);
  EXPECT_EQ(r.auxiliary[0], nn[0].index);
  EXPECT_EQ(r.auxiliary[1], nn[1].index);
  ASSERT_EQ(r.auxiliary_chamfer.size(), 3u);
  EXPECT_EQ(r.auxiliary_chamfer[0], chamfer_sq(e.cloud, r.adversary));
  EXPECT_EQ(r.auxiliary_chamfer[2], chamfer_sq(s.data.train[r.auxiliary[1]].cloud, r.adversary));
  cfg.k = 100;
  EXPECT_THROW(shapeadv_auxiliary(s.classifier, s.autoencoder, e.cloud, e.label, s.data.train, cfg),
               GeometryError);
}

TEST(Convex, OneHotStartAndSimplexContract) {
  const auto& s = rig();
  const auto& e = s.data.test[5];
  Tensor codes(Shape{3, kLatentDim});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (double& v : codes.data()) v = g(rng);
  const std::vector<double> onehot{1.0, 0.0, 0.0};
  const LatentCode z = convex_latent(onehot, codes);
  EXPECT_TRUE(std::equal(z.data().begin(), z.data().end(), codes.data().begin()));

  AttackConfig cfg = fixed(1.0, 60);
  cfg.k = 2;
  const AttackResult r = shapeadv_convex(s.classifier, s.autoencoder, e.cloud, e.label, s.data.train, cfg);
  ASSERT_EQ(r.alpha.size(), 3u);
  EXPECT_NEAR(std::accumulate(r.alpha.begin(), r.alpha.end(), 0.0), 1.0, 1e-12);
  for (double a : r.alpha) EXPECT_GE(a, 0.0);
  cfg.k = 0;
  EXPECT_THROW(shapeadv_convex(s.classifier, s.autoencoder, e.cloud, e.label, s.data.train, cfg),
               std::invalid_argument);
}

TEST(Convex, ProjectionOntoSimplex) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + static_cast<std::size_t>(trial) % 6);
    for (double& x : v) x = g(rng);
    std::vector<double> p = v;
    project_to_simplex(p);
    EXPECT_NEAR(exact_sum(p), 1.0, 1e-12);
    for (double x : p) EXPECT_GE(x, 0.0);
    // Projection is idempotent and no other simplex point on a small grid
    // around it is closer to v.
    std::vector<double> again = p;
    project_to_simplex(again);
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(again[k], p[k], 1e-12);
    auto dist = [&](const std::vector<double>& q) {
      double d = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) d += (q[k] - v[k]) * (q[k] - v[k]);
      return d;
    };
    for (std::size_t a = 0; a < p.size(); ++a) {
      for (std::size_t b = 0; b < p.size(); ++b) {
        if (a == b || p[b] < 1e-3) continue;
        std::vector<double> q = p;
        q[a] += 1e-3;
        q[b] -= 1e-3;
        EXPECT_GE(dist(q), dist(p) - 1e-12);
      }
    }
  }
  std::vector<double> inside{0.2, 0.3, 0.5};
  project_to_simplex(inside);
  EXPECT_NEAR(inside[0], 0.2, 1e-15);
  EXPECT_NEAR(inside[2], 0.5, 1e-15);
}

TEST(ShiftPoint, AlreadyMisclassifiedAndSizePreserved) {
  const auto& s = rig();
  const auto& e = s.data.test[6];
  const std::size_t wrong = (predict(s.classifier, e.cloud) + 1) % 3;
  const AttackResult r = shift_point_attack(s.classifier, e.cloud, wrong, fixed(1.0, 20));
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.adversary, e.cloud);
  EXPECT_EQ(*r.perturbation, Tensor(Shape{e.cloud.size(), 3}, 0.0));
  EXPECT_EQ(r.regularizer, 0.0);
  const AttackResult run = shift_point_attack(s.classifier, e.cloud, e.label, fixed(1.0, 20));
  EXPECT_EQ(run.adversary.size(), e.cloud.size());
  EXPECT_EQ(run.perturbation->shape(), (Shape{e.cloud.size(), 3}));
}

TEST(AddPoint, KeepsOriginalsAndAppends) {
  const auto& s = rig();
  const auto& e = s.data.test[7];
  AttackConfig cfg = fixed(1.0, 30);
  cfg.n_aug = 8;
  const AttackResult r = add_point_attack(s.classifier, e.cloud, e.label, cfg);
  ASSERT_EQ(r.adversary.size(), e.cloud.size() + 8);
  for (std::size_t i = 0; i < e.cloud.size(); ++i) EXPECT_EQ(r.adversary[i], e.cloud[i]);
  cfg.n_aug = 0;
  EXPECT_THROW(add_point_attack(s.classifier, e.cloud, e.label, cfg), std::invalid_argument);
}

TEST(AddPoint, InitialPointsDuplicateInputPoints) {
  const auto& s = rig();
  const auto& e = s.data.test[8];
  // With the goal already met, the returned points are the initialization.
  const std::size_t wrong = (predict(s.classifier, e.cloud) + 1) % 3;
  AttackConfig cfg = fixed(1.0, 30);
  cfg.seed = 19;
  const AttackResult r = add_point_attack(s.classifier, e.cloud, wrong, cfg);
  ASSERT_EQ(r.steps_run, 0u);
  for (std::size_t i = e.cloud.size(); i < r.adversary.size(); ++i) {
    EXPECT_NE(std::find(e.cloud.begin(), e.cloud.end(), r.adversary[i]), e.cloud.end());
  }
  EXPECT_EQ(r.predicted, predict(s.classifier, r.adversary));
  // Duplicated points leave the max-pooled features and so the logits as is.
  EXPECT_EQ(pointnet_forward(s.classifier, r.adversary), pointnet_forward(s.classifier, e.cloud));
  EXPECT_EQ(r.chamfer_to_input, 0.0);
}

// ---------------------------------------------------------------------------
// Lambda search on scripted probes

AttackResult scripted(double lambda, bool success, double reg, std::size_t steps = 10) {
  AttackResult r;
  r.lambda = lambda;
  r.success = success;
  r.regularizer = reg;
  r.steps_run = steps;
  return r;
}

TEST(LambdaSearch, SuccessOnlyAtLowerEnd) {
  std::vector<double> probed;
  AttackConfig cfg;
  const AttackResult r = lambda_search(
      [&](double l) {
        probed.push_back(l);
        return scripted(l, l <= cfg.lambda_lo, 1.0);
      },
      cfg);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.lambda, cfg.lambda_lo);
  EXPECT_EQ(probed.size(), cfg.rounds + 1);
}

TEST(LambdaSearch, NoSuccessReturnsLowerEndFailure) {
  AttackConfig cfg;
  const AttackResult r = lambda_search([&](double l) { return scripted(l, false, 1.0); }, cfg);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.lambda, cfg.lambda_lo);
}

TEST(LambdaSearch, AllSuccessesPickSmallestRegularizer) {
  AttackConfig cfg;
  std::vector<AttackResult> seen;
  const AttackResult r = lambda_search(
      [&](double l) {
        // Regularizer not monotone in lambda on purpose.
        seen.push_back(scripted(l, true, std::fabs(std::log10(l) - 1.3)));
        return seen.back();
      },
      cfg);
  double smallest = INFINITY;
  for (const AttackResult& s : seen) smallest = std::min(smallest, s.regularizer);
  EXPECT_EQ(r.regularizer, smallest);
  EXPECT_EQ(seen.size(), cfg.rounds);
}

TEST(LambdaSearch, BracketedTransition) {
  AttackConfig cfg;
  for (double edge : {1.0, 3.7, 20.0, 99.0}) {
    const AttackResult r = lambda_search([&](double l) { return scripted(l, l <= edge, 1.0 / l); }, cfg);
    EXPECT_TRUE(r.success) << edge;
    EXPECT_GE(r.lambda, 1.0) << edge;
    EXPECT_LE(r.lambda, edge) << edge;
    EXPECT_LE(r.lambda, 100.0);
  }
}

TEST(LambdaSearch, TrivialSuccessStopsEarly) {
  AttackConfig cfg;
  std::size_t calls = 0;
  lambda_search(
      [&](double l) {
        ++calls;
        return scripted(l, true, 0.0, 0);
      },
      cfg);
  EXPECT_EQ(calls, 1u);
  cfg.rounds = 0;
  EXPECT_THROW(lambda_search([&](double l) { return scripted(l, true, 0.0); }, cfg), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Properties over the small rig

TEST(Properties, AuxiliaryMovesTowardItsNeighbor) {
  const auto& s = rig();
  const AttackContext ctx{&s.classifier, &s.autoencoder, s.data.train};
  AttackConfig cfg;
  cfg.steps = 100;
  cfg.rounds = 4;
  std::vector<double> before, after;
  for (std::size_t i = 0; i < s.data.test.size(); ++i) {
    const auto& e = s.data.test[i];
    if (predict(s.classifier, e.cloud) != e.label) continue;
    const AttackResult r = run_attack(Method::Auxiliary, ctx, e.cloud, e.label, cfg);
    if (!r.success) continue;
    const PointCloud& x1 = s.data.train[r.auxiliary[0]].cloud;
    before.push_back(chamfer_sq(e.cloud, x1));
    after.push_back(chamfer_sq(r.adversary, x1));
  }
  ASSERT_GE(after.size(), 5u);
  EXPECT_LT(exact_sum(after) / static_cast<double>(after.size()),
            exact_sum(before) / static_cast<double>(before.size()));
}

}  // namespace
}  // namespace shapeadv

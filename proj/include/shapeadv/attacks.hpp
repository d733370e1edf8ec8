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

// Adversarial attacks against a ClassifierModel.
//
// Latent attacks optimize a code z' fed through the auto-encoder decoder and
// regularize either ||z - z'||, chamfer_sq(x, x') or the mean chamfer_sq to x
// and K same-label training neighbors. Point-space baselines shift every
// point or append new ones. Every procedure minimizes
//
//   cw_loss(logits(x')) + lambda * regularizer
//
// with Adam and keeps the successful iterate with the smallest regularizer.

#pragma once

#include <optional>
#include <random>

#include "shapeadv/models.hpp"
#include "shapeadv/random.hpp"

namespace shapeadv {

// ---------------------------------------------------------------------------
// Losses

namespace detail {

inline void check_class(std::size_t c, std::size_t classes, const char* what) {
  if (classes < 2) throw std::invalid_argument(std::string(what) + ": need at least 2 logits");
  if (c >= classes) {
    throw std::invalid_argument(std::string(what) + ": class " + std::to_string(c) + " out of range for " +
                                std::to_string(classes) + " logits");
  }
}

inline double max_other(std::span<const double> logits, std::size_t skip) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (i != skip) best = std::max(best, logits[i]);
  }
  return best;
}

}  // namespace detail

/// (max_{y' != t} l_y' - l_t)^+
inline double cw_targeted_loss(std::span<const double> logits, std::size_t t) {
  detail::check_class(t, logits.size(), "cw_targeted_loss");
  return std::max(detail::max_other(logits, t) - logits[t], 0.0);
}

/// (l_y - max_{y' != y} l_y')^+
inline double cw_untargeted_loss(std::span<const double> logits, std::size_t y) {
  detail::check_class(y, logits.size(), "cw_untargeted_loss");
  return std::max(logits[y] - detail::max_other(logits, y), 0.0);
}

namespace detail {

// Returns (l_c, max over the other logits) as scalar nodes.
inline std::pair<NodeId, NodeId> split_logit(Tape& tape, NodeId logits, std::size_t c, const char* what) {
  const Tensor& v = tape.value(logits);
  if (v.rank() != 1) throw ShapeError(std::string(what) + ": logits must be rank 1");
  check_class(c, v.size(), what);
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != c) others.push_back(i);
  }
  const NodeId own = tape.reshape(tape.gather(logits, {c}), Shape{});
  const NodeId rest = tape.max_reduce(tape.gather(logits, std::move(others)), 0);
  return {own, rest};
}

}  // namespace detail

inline NodeId cw_targeted_loss(Tape& tape, NodeId logits, std::size_t t) {
  const auto [own, rest] = detail::split_logit(tape, logits, t, "cw_targeted_loss");
  return tape.hinge(tape.sub(rest, own));
}

inline NodeId cw_untargeted_loss(Tape& tape, NodeId logits, std::size_t y) {
  const auto [own, rest] = detail::split_logit(tape, logits, y, "cw_untargeted_loss");
  return tape.hinge(tape.sub(own, rest));
}

// ---------------------------------------------------------------------------
// Configuration and results

enum class AttackMode { Untargeted, Targeted };

inline std::string_view mode_name(AttackMode m) {
  return m == AttackMode::Targeted ? "targeted" : "untargeted";
}

inline AttackMode parse_mode(std::string_view s) {
  if (s == "targeted") return AttackMode::Targeted;
  if (s == "untargeted") return AttackMode::Untargeted;
  throw std::invalid_argument("unknown attack mode '" + std::string(s) + "'");
}

enum class Method { LatentL2, Chamfer, Auxiliary, Convex, ShiftPoint, AddPoint };

inline constexpr std::array<Method, 6> kAllMethods{Method::LatentL2,   Method::Chamfer,
                                                   Method::Auxiliary,  Method::Convex,
                                                   Method::ShiftPoint, Method::AddPoint};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::LatentL2: return "latent-l2";
    case Method::Chamfer: return "chamfer";
    case Method::Auxiliary: return "auxiliary";
    case Method::Convex: return "convex";
    case Method::ShiftPoint: return "shift-point";
    case Method::AddPoint: return "add-point";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : kAllMethods) {
    if (method_name(m) == s) return m;
  }
  throw std::invalid_argument("unknown attack method '" + std::string(s) + "'");
}

inline bool is_latent(Method m) { return m != Method::ShiftPoint && m != Method::AddPoint; }

struct AttackConfig {
  AttackMode mode = AttackMode::Untargeted;
  std::size_t target = 0;  // used in targeted mode only
  double lambda = 1.0;
  std::size_t steps = 200;
  double learning_rate = 0.01;
  std::size_t k = 1;  // auxiliary neighbors
  bool lambda_search = true;
  double lambda_lo = 0.1;
  double lambda_hi = 1000.0;
  std::size_t rounds = 6;
  std::size_t n_aug = 32;
  std::uint64_t seed = 0;
};

struct TraceEntry {
  std::size_t step = 0;
  double adversarial = 0.0;
  double regularizer = 0.0;
};

struct AttackResult {
  PointCloud adversary;
  std::optional<LatentCode> latent;
  bool success = false;
  std::size_t predicted = 0;
  double chamfer_to_input = 0.0;
  std::optional<double> latent_l2;
  double regularizer = 0.0;  // of the returned iterate, without the sqrt guard
  double lambda = 0.0;
  std::size_t best_step = 0;
  std::size_t steps_run = 0;
  std::vector<TraceEntry> trace;
  std::optional<Tensor> perturbation;  // shift-point: [N,3] offsets; add-point: [N_aug,3] points
  std::vector<std::size_t> auxiliary;  // training-set indices of x_1..x_K
  std::vector<double> auxiliary_chamfer;  // chamfer_sq(x_k, x') for k = 0..K
  std::vector<double> alpha;              // convex weights
};

/// Whether a predicted label satisfies the attack goal.
inline bool goal_met(const AttackConfig& cfg, std::size_t y, std::size_t predicted) {
  return cfg.mode == AttackMode::Targeted ? predicted == cfg.target : predicted != y;
}

inline void validate(const AttackConfig& cfg, std::size_t y, std::size_t classes) {
  if (y >= classes) throw std::invalid_argument("attack: label " + std::to_string(y) + " out of range");
  if (cfg.mode == AttackMode::Targeted) {
    if (cfg.target >= classes) throw std::invalid_argument("attack: target class out of range");
    if (cfg.target == y) throw std::invalid_argument("attack: target equals the true label");
  }
  if (cfg.steps == 0 || !(cfg.learning_rate > 0.0) || !(cfg.lambda > 0.0)) {
    throw std::invalid_argument("attack: steps, learning rate and lambda must be positive");
  }
  if (cfg.lambda_search && (!(cfg.lambda_lo > 0.0) || !(cfg.lambda_hi > cfg.lambda_lo) || cfg.rounds == 0)) {
    throw std::invalid_argument("attack: lambda search needs 0 < lo < hi and at least one round");
  }
}

// ---------------------------------------------------------------------------
// Optimization core

namespace detail {

// A recorded objective. `param` is the only parameter leaf; `lambda` is a
// constant leaf so the same tape serves every lambda probe.
struct Rig {
  Tape tape;
  NodeId param;
  NodeId lambda;
  NodeId logits;
  NodeId adversarial;
  NodeId regularizer;
  NodeId total;
};

inline NodeId cw_loss(Tape& tape, NodeId logits, const AttackConfig& cfg, std::size_t y) {
  return cfg.mode == AttackMode::Targeted ? cw_targeted_loss(tape, logits, cfg.target)
                                          : cw_untargeted_loss(tape, logits, y);
}

// Finishes a rig whose `param` and points node are already recorded.
inline void close_rig(Rig& r, const ClassifierNodes& clf, NodeId points, NodeId regularizer,
                      const AttackConfig& cfg, std::size_t y, bool weighted) {
  r.logits = classifier_logits(r.tape, clf, points);
  r.adversarial = cw_loss(r.tape, r.logits, cfg, y);
  r.regularizer = regularizer;
  r.lambda = r.tape.constant(Tensor::scalar(cfg.lambda));
  r.total = weighted ? r.tape.add(r.adversarial, r.tape.mul(r.lambda, r.regularizer)) : r.adversarial;
}

struct Probe {
  Tensor best;      // successful iterate with the lowest regularizer, if any
  Tensor fallback;  // iterate with the lowest total objective
  bool success = false;
  std::size_t best_step = 0;
  std::size_t steps_run = 0;
  std::vector<TraceEntry> trace;
};

using Projection = std::function<void(Tensor&)>;

// Adam on the rig parameter starting from `init`. Iterates 0..steps are
// scored; the run stops at iterate 0 if the goal already holds there.
// Adam moves every coordinate by about the learning rate per step whatever
// the gradient scale, so the last iterate can sit well away from the
// optimum; failures report the lowest-objective iterate instead.
inline Probe optimize(Rig& r, const Tensor& init, const AttackConfig& cfg, std::size_t y,
                      const Projection& project = {}) {
  Probe out;
  Tensor p = init;
  r.tape.set(r.param, p);
  r.tape.set(r.lambda, Tensor::scalar(cfg.lambda));
  r.tape.evaluate();
  AdamState adam(cfg.learning_rate);
  double best_reg = std::numeric_limits<double>::infinity();
  double best_total = std::numeric_limits<double>::infinity();
  out.trace.reserve(cfg.steps + 1);
  for (std::size_t s = 0;; ++s) {
    const double reg = r.tape.value(r.regularizer).item();
    out.trace.push_back({s, r.tape.value(r.adversarial).item(), reg});
    const bool ok = goal_met(cfg, y, argmax(r.tape.value(r.logits).data()));
    const double total = r.tape.value(r.total).item();
    if (total < best_total) {
      best_total = total;
      out.fallback = p;
    }
    if (ok && reg < best_reg) {
      best_reg = reg;
      out.best = p;
      out.best_step = s;
      out.success = true;
    }
    if ((ok && s == 0) || s == cfg.steps) break;
    Tape::Gradients g = r.tape.gradient(r.total);
    std::array<Tensor, 1> grad{std::move(g.at(r.param))};
    adam_step(adam, std::span<Tensor>(&p, 1), grad);
    if (project) project(p);
    r.tape.set(r.param, p);
    r.tape.evaluate();
    out.steps_run = s + 1;
  }
  return out;
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
  std::vector<double> sq(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sq[i] = (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(exact_sum(sq));
}

inline void fill_common(AttackResult& res, const Probe& probe, const ClassifierModel& m, const PointCloud& x,
                        const AttackConfig& cfg, std::size_t y) {
  res.predicted = predict(m, res.adversary);
  res.success = probe.success && goal_met(cfg, y, res.predicted);
  res.chamfer_to_input = chamfer_sq(x, res.adversary);
  res.lambda = cfg.lambda;
  res.best_step = probe.success ? probe.best_step : probe.steps_run;
  res.steps_run = probe.steps_run;
  res.trace = probe.trace;
}

inline void check_inputs(const ClassifierModel& m, const PointCloud& x, std::size_t y, const AttackConfig& cfg) {
  if (x.empty()) throw GeometryError("attack: empty input cloud");
  if (!x.all_finite()) throw GeometryError("attack: non-finite input cloud");
  validate(cfg, y, m.classes);
}

enum class LatentObjective { L2, Chamfer, Auxiliary };

// Shared driver for the three regularized latent attacks. `anchors` are the
// clouds x_0..x_K of the auxiliary objective (x_0 = x).
inline AttackResult latent_attack(const ClassifierModel& m, const AutoencoderModel& ae, const PointCloud& x,
                                  std::size_t y, const AttackConfig& cfg, LatentObjective objective,
                                  std::span<const PointCloud> anchors) {
  check_inputs(m, x, y, cfg);
  const LatentCode z = encode(ae, x);
  Rig r;
  const ClassifierNodes clf = bind(r.tape, m, LeafKind::Constant);
  const AutoencoderNodes dec = bind(r.tape, ae, LeafKind::Constant);
  r.param = r.tape.parameter(z);
  const NodeId points = decoder_points(r.tape, dec, r.param);
  NodeId reg;
  switch (objective) {
    case LatentObjective::L2:
      reg = r.tape.l2_norm(r.tape.sub(r.tape.constant(z), r.param));
      break;
    case LatentObjective::Chamfer:
      reg = chamfer_sq(r.tape, r.tape.constant(x.to_tensor()), points);
      break;
    case LatentObjective::Auxiliary: {
      NodeId sum = chamfer_sq(r.tape, r.tape.constant(anchors[0].to_tensor()), points);
      for (std::size_t k = 1; k < anchors.size(); ++k) {
        sum = r.tape.add(sum, chamfer_sq(r.tape, r.tape.constant(anchors[k].to_tensor()), points));
      }
      reg = r.tape.scale(sum, 1.0 / static_cast<double>(anchors.size()));
      break;
    }
  }
  close_rig(r, clf, points, reg, cfg, y, true);
  const Probe probe = optimize(r, z, cfg, y);

  AttackResult res;
  res.latent = probe.success ? probe.best : probe.fallback;
  res.adversary = decode(ae, *res.latent);
  res.latent_l2 = l2_distance(z.data(), res.latent->data());
  fill_common(res, probe, m, x, cfg, y);
  switch (objective) {
    case LatentObjective::L2:
      res.regularizer = *res.latent_l2;
      break;
    case LatentObjective::Chamfer:
      res.regularizer = res.chamfer_to_input;
      break;
    case LatentObjective::Auxiliary: {
      for (const PointCloud& a : anchors) res.auxiliary_chamfer.push_back(chamfer_sq(a, res.adversary));
      res.regularizer = exact_sum(res.auxiliary_chamfer) / static_cast<double>(anchors.size());
      break;
    }
  }
  return res;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Latent attacks

/// min_z' cw(M(G_dec(z'))) + lambda * ||z - z'||_2, z' starting at z = G_enc(x).
inline AttackResult shapeadv_latent_l2(const ClassifierModel& m, const AutoencoderModel& ae, const PointCloud& x,
                                       std::size_t y, const AttackConfig& cfg) {
  return detail::latent_attack(m, ae, x, y, cfg, detail::LatentObjective::L2, {});
}

/// min_z' cw(M(x')) + lambda * chamfer_sq(x, x'), x' = G_dec(z').
inline AttackResult shapeadv_chamfer(const ClassifierModel& m, const AutoencoderModel& ae, const PointCloud& x,
                                     std::size_t y, const AttackConfig& cfg) {
  return detail::latent_attack(m, ae, x, y, cfg, detail::LatentObjective::Chamfer, {});
}

/// Auxiliary attack with explicitly chosen neighbors (indices into `train`).
inline AttackResult shapeadv_auxiliary(const ClassifierModel& m, const AutoencoderModel& ae, const PointCloud& x,
                                       std::size_t y, std::span<const LabeledCloud> train,
                                       std::span<const std::size_t> neighbors, const AttackConfig& cfg) {
  std::vector<PointCloud> anchors{x};
  for (std::size_t i : neighbors) {
    if (i >= train.size()) throw std::invalid_argument("auxiliary: neighbor index out of range");
    anchors.push_back(train[i].cloud);
  }
  AttackResult res = detail::latent_attack(m, ae, x, y, cfg, detail::LatentObjective::Auxiliary, anchors);
  res.auxiliary.assign(neighbors.begin(), neighbors.end());
  return res;
}

/// min_z' cw(M(x')) + lambda / (K+1) * sum_k chamfer_sq(x_k, x'), where x_0 = x
/// and x_1..x_K are the K training clouds labeled y nearest to x in chamfer_sq.
inline AttackResult shapeadv_auxiliary(const ClassifierModel& m, const AutoencoderModel& ae, const PointCloud& x,
                                       std::size_t y, std::span<const LabeledCloud> train, const AttackConfig& cfg) {
  std::vector<std::size_t> idx;
  if (cfg.k > 0) {
    for (const Neighbor& n : knn_chamfer(x, train, cfg.k, y)) idx.push_back(n.index);
  }
  return shapeadv_auxiliary(m, ae, x, y, train, idx, cfg);
}

/// sum_k alpha_k z_k as a row-vector product, the same arithmetic the tape uses.
inline LatentCode convex_latent(std::span<const double> alpha, const Tensor& codes) {
  if (codes.rank() != 2 || codes.dim(0) != alpha.size()) {
    throw ShapeError("convex_latent: " + std::to_string(alpha.size()) + " weights for codes " +
                     to_string(codes.shape()));
  }
  Tensor out(Shape{codes.dim(1)});
  kernels::gemm(alpha, codes.data(), 1, alpha.size(), codes.dim(1), nullptr, out.data());
  return out;
}

/// Euclidean projection onto the probability simplex.
inline void project_to_simplex(std::span<double> v) {
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cumulative += u[i];
    const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  for (double& x : v) x = std::max(x - theta, 0.0);
  const double s = exact_sum(v);
  for (double& x : v) x /= s;
}

/// z' = sum_k alpha_k z_k over the codes of x and its K neighbors, alpha on
/// the simplex starting at (1, 0, ..., 0). Only the adversarial loss is
/// minimized; the best successful iterate is the one closest to x.
inline AttackResult shapeadv_convex(const ClassifierModel& m, const AutoencoderModel& ae, const PointCloud& x,
                                    std::size_t y, std::span<const LabeledCloud> train, const AttackConfig& cfg) {
  detail::check_inputs(m, x, y, cfg);
  if (cfg.k == 0) throw std::invalid_argument("convex: K must be at least 1");
  std::vector<std::size_t> idx;
  for (const Neighbor& n : knn_chamfer(x, train, cfg.k, y)) idx.push_back(n.index);

  Tensor codes(Shape{cfg.k + 1, kLatentDim});
  auto put = [&](std::size_t row, const LatentCode& z) {
    std::copy(z.data().begin(), z.data().end(), codes.data().begin() + static_cast<std::ptrdiff_t>(row * kLatentDim));
  };
  put(0, encode(ae, x));
  for (std::size_t k = 0; k < idx.size(); ++k) put(k + 1, encode(ae, train[idx[k]].cloud));

  detail::Rig r;
  const ClassifierNodes clf = bind(r.tape, m, LeafKind::Constant);
  const AutoencoderNodes dec = bind(r.tape, ae, LeafKind::Constant);
  Tensor alpha0(Shape{cfg.k + 1}, 0.0);
  alpha0[0] = 1.0;
  r.param = r.tape.parameter(alpha0);
  const NodeId points = decoder_points(r.tape, dec, r.tape.matmul(r.param, r.tape.constant(codes)));
  const NodeId reg = chamfer_sq(r.tape, r.tape.constant(x.to_tensor()), points);
  detail::close_rig(r, clf, points, reg, cfg, y, false);
  const detail::Probe probe =
      detail::optimize(r, alpha0, cfg, y, [](Tensor& a) { project_to_simplex(a.data()); });

  AttackResult res;
  const Tensor& alpha = probe.success ? probe.best : probe.fallback;
  res.alpha.assign(alpha.data().begin(), alpha.data().end());
  res.latent = convex_latent(res.alpha, codes);
  res.adversary = decode(ae, *res.latent);
  res.latent_l2 = detail::l2_distance(codes.data().first(kLatentDim), res.latent->data());
  detail::fill_common(res, probe, m, x, cfg, y);
  res.regularizer = res.chamfer_to_input;
  res.auxiliary = idx;
  return res;
}

// ---------------------------------------------------------------------------
// Point-space baselines

/// min_delta cw(M(x + delta)) + lambda * ||delta||_2, delta starting at 0.
inline AttackResult shift_point_attack(const ClassifierModel& m, const PointCloud& x, std::size_t y,
                                       const AttackConfig& cfg) {
  detail::check_inputs(m, x, y, cfg);
  const Tensor xt = x.to_tensor();
  const Tensor zero(xt.shape(), 0.0);
  detail::Rig r;
  const ClassifierNodes clf = bind(r.tape, m, LeafKind::Constant);
  r.param = r.tape.parameter(zero);
  const NodeId points = r.tape.add(r.tape.constant(xt), r.param);
  detail::close_rig(r, clf, points, r.tape.l2_norm(r.param), cfg, y, true);
  const detail::Probe probe = detail::optimize(r, zero, cfg, y);

  AttackResult res;
  Tensor delta = probe.success ? probe.best : probe.fallback;
  Tensor moved = xt;
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = xt[i] + delta[i];
  res.adversary = PointCloud::from_tensor(moved);
  res.regularizer = detail::l2_distance(delta.data(), zero.data());
  res.perturbation = std::move(delta);
  detail::fill_common(res, probe, m, x, cfg, y);
  return res;
}

/// Appends n_aug points, initialized on randomly chosen input points, and
/// optimizes only those: min cw(M(x u P)) + lambda * chamfer_sq(x, x u P).
/// The input points are returned unchanged, followed by the new ones.
inline AttackResult add_point_attack(const ClassifierModel& m, const PointCloud& x, std::size_t y,
                                     const AttackConfig& cfg) {
  detail::check_inputs(m, x, y, cfg);
  if (cfg.n_aug == 0) throw std::invalid_argument("add-point: n_aug must be positive");
  std::mt19937_64 rng(derive_seed(cfg.seed, {0x616464ULL}));
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  Tensor init(Shape{cfg.n_aug, 3});
  for (std::size_t i = 0; i < cfg.n_aug; ++i) {
    const Point3& p = x[pick(rng)];
    for (std::size_t d = 0; d < 3; ++d) init.at(i, d) = p[d];
  }

  detail::Rig r;
  const ClassifierNodes clf = bind(r.tape, m, LeafKind::Constant);
  const NodeId original = r.tape.constant(x.to_tensor());
  r.param = r.tape.parameter(init);
  // New points go first on the tape so that max-pool ties with the points
  // they were copied from route the adjoint to them. Order does not change
  // any value.
  const NodeId points = r.tape.concat({r.param, original});
  detail::close_rig(r, clf, points, chamfer_sq(r.tape, original, points), cfg, y, true);
  const detail::Probe probe = detail::optimize(r, init, cfg, y);

  AttackResult res;
  const Tensor& added = probe.success ? probe.best : probe.fallback;
  PointCloud adv = x;
  for (std::size_t i = 0; i < cfg.n_aug; ++i) adv.push_back({added.at(i, 0), added.at(i, 1), added.at(i, 2)});
  res.adversary = std::move(adv);
  res.perturbation = added;
  detail::fill_common(res, probe, m, x, cfg, y);
  res.regularizer = res.chamfer_to_input;
  return res;
}

// ---------------------------------------------------------------------------
// Lambda search

/// Geometric bisection of lambda over [lambda_lo, lambda_hi]. A success moves
/// the lower end up (a larger weight keeps the perturbation smaller), a
/// failure moves the upper end down. Returns the success with the smallest
/// regularizer; if every probe fails, lambda_lo itself is tried and its
/// result returned either way.
template <class ProbeFn>
AttackResult lambda_search(ProbeFn&& probe, const AttackConfig& cfg) {
  if (!(cfg.lambda_lo > 0.0) || !(cfg.lambda_hi > cfg.lambda_lo) || cfg.rounds == 0) {
    throw std::invalid_argument("lambda_search: need 0 < lo < hi and at least one round");
  }
  std::optional<AttackResult> best;
  double lo = cfg.lambda_lo;
  double hi = cfg.lambda_hi;
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    const double mid = std::sqrt(lo * hi);
    AttackResult r = probe(mid);
    if (r.success) {
      const bool trivial = r.steps_run == 0;
      if (!best || r.regularizer < best->regularizer) best = std::move(r);
      // Success before any update does not depend on lambda.
      if (trivial) break;
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (best) return std::move(*best);
  return probe(cfg.lambda_lo);
}

// ---------------------------------------------------------------------------
// Dispatch

struct AttackContext {
  const ClassifierModel* classifier = nullptr;
  const AutoencoderModel* autoencoder = nullptr;  // latent methods only
  std::span<const LabeledCloud> train;            // auxiliary and convex only
};

/// Runs `method` on (x, y), with lambda search when cfg.lambda_search is set
/// (the convex variant has no lambda and always runs once).
inline AttackResult run_attack(Method method, const AttackContext& ctx, const PointCloud& x, std::size_t y,
                               const AttackConfig& cfg) {
  if (ctx.classifier == nullptr) throw std::invalid_argument("attack: no classifier");
  if (is_latent(method) && ctx.autoencoder == nullptr) {
    throw std::invalid_argument("attack: method " + std::string(method_name(method)) + " needs an auto-encoder");
  }
  const ClassifierModel& m = *ctx.classifier;
  std::vector<std::size_t> neighbors;
  if (method == Method::Auxiliary && cfg.k > 0) {
    for (const Neighbor& n : knn_chamfer(x, ctx.train, cfg.k, y)) neighbors.push_back(n.index);
  }
  auto once = [&](double lambda) {
    AttackConfig c = cfg;
    c.lambda = lambda;
    switch (method) {
      case Method::LatentL2: return shapeadv_latent_l2(m, *ctx.autoencoder, x, y, c);
      case Method::Chamfer: return shapeadv_chamfer(m, *ctx.autoencoder, x, y, c);
      case Method::Auxiliary: return shapeadv_auxiliary(m, *ctx.autoencoder, x, y, ctx.train, neighbors, c);
      case Method::Convex: return shapeadv_convex(m, *ctx.autoencoder, x, y, ctx.train, c);
      case Method::ShiftPoint: return shift_point_attack(m, x, y, c);
      case Method::AddPoint: return add_point_attack(m, x, y, c);
    }
    throw std::logic_error("unreachable");
  };
  if (!cfg.lambda_search || method == Method::Convex) return once(cfg.lambda);
  return lambda_search(once, cfg);
}

}  // namespace shapeadv

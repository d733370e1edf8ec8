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

// Victim classifier and point-cloud auto-encoder.
//
// The classifier is a PointNet without alignment nets or normalization: a
// shared per-point MLP, a global max pool, and a dense head. The encoder has
// the same trunk and projects the pooled feature to a 128-d latent code. Two
// decoders are available: a plain MLP emitting 3P coordinates, and a patch
// decoder where each of Q small MLPs folds a fixed 2-D grid, conditioned on
// the code, into a piece of the surface.

#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "shapeadv/adam.hpp"
#include "shapeadv/geometry.hpp"

namespace shapeadv {

inline constexpr std::size_t kLatentDim = 128;

struct Dense {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct ClassifierArch {
  std::vector<std::size_t> point_widths{64, 128, 256};
  std::vector<std::size_t> head_widths{128};
};

struct ClassifierModel {
  std::vector<Dense> point_mlp;
  std::vector<Dense> head;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
};

enum class DecoderKind { Mlp, Patch };

inline std::string_view decoder_name(DecoderKind k) { return k == DecoderKind::Mlp ? "mlp" : "patch"; }

/// One fold of the patch decoder. The first layer sees (u, v, z); its weight
/// rows are ordered grid coordinates first, then latent.
struct PatchNet {
  std::vector<Dense> layers;  // (2+128)->128->128->3
};

struct AutoencoderArch {
  std::vector<std::size_t> encoder_widths{64, 128, 256};
  std::vector<std::size_t> mlp_decoder_widths{256, 512};
  std::size_t patches = 4;
  std::size_t patch_hidden = 128;
};

struct AutoencoderModel {
  std::vector<Dense> encoder_point_mlp;
  Dense encoder_out;  // pooled feature -> latent
  DecoderKind kind = DecoderKind::Mlp;
  std::vector<Dense> mlp_decoder;
  std::vector<PatchNet> patches;
  Tensor grid;  // [P/Q, 2] fixed samples in [0,1]^2 shared by all patches
  std::size_t points = 0;
  std::uint64_t seed = 0;
};

using LatentCode = Tensor;  // [128]

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

inline Dense init_dense(std::size_t in, std::size_t out, bool feeds_relu, std::mt19937_64& rng) {
  const double stddev = std::sqrt((feeds_relu ? 2.0 : 1.0) / static_cast<double>(in));
  std::normal_distribution<double> normal(0.0, stddev);
  Dense d{Tensor(Shape{in, out}), Tensor(Shape{out}, 0.0)};
  for (double& w : d.weight.data()) w = normal(rng);
  return d;
}

inline std::vector<Dense> init_stack(std::size_t in, std::span<const std::size_t> widths,
                                     bool relu_last, std::mt19937_64& rng) {
  std::vector<Dense> layers;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const bool relu = relu_last || i + 1 < widths.size();
    layers.push_back(init_dense(in, widths[i], relu, rng));
    in = widths[i];
  }
  return layers;
}

}  // namespace detail

inline ClassifierModel init_classifier(std::size_t classes, std::uint64_t seed,
                                       const ClassifierArch& arch = {}) {
  if (classes < 2) throw std::invalid_argument("classifier needs at least 2 classes");
  if (arch.point_widths.empty()) throw std::invalid_argument("classifier needs a per-point layer");
  std::mt19937_64 rng(seed);
  ClassifierModel m;
  m.classes = classes;
  m.seed = seed;
  m.point_mlp = detail::init_stack(3, arch.point_widths, true, rng);
  std::vector<std::size_t> head = arch.head_widths;
  head.push_back(classes);
  m.head = detail::init_stack(arch.point_widths.back(), head, false, rng);
  return m;
}

/// Row-major samples of a ceil(sqrt(m)) square lattice spanning [0,1]^2.
inline Tensor unit_grid(std::size_t m) {
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
  Tensor g(Shape{m, 2});
  const double step = side > 1 ? 1.0 / static_cast<double>(side - 1) : 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    g.at(i, 0) = static_cast<double>(i % side) * step;
    g.at(i, 1) = static_cast<double>(i / side) * step;
  }
  return g;
}

inline AutoencoderModel init_autoencoder(DecoderKind kind, std::size_t points, std::uint64_t seed,
                                         const AutoencoderArch& arch = {}) {
  if (points == 0) throw std::invalid_argument("autoencoder needs a positive point count");
  std::mt19937_64 rng(seed);
  AutoencoderModel ae;
  ae.kind = kind;
  ae.points = points;
  ae.seed = seed;
  ae.encoder_point_mlp = detail::init_stack(3, arch.encoder_widths, true, rng);
  ae.encoder_out = detail::init_dense(arch.encoder_widths.back(), kLatentDim, false, rng);
  if (kind == DecoderKind::Mlp) {
    std::vector<std::size_t> widths = arch.mlp_decoder_widths;
    widths.push_back(3 * points);
    ae.mlp_decoder = detail::init_stack(kLatentDim, widths, false, rng);
  } else {
    if (arch.patches == 0 || points % arch.patches != 0) {
      throw std::invalid_argument("patch decoder: " + std::to_string(points) +
                                  " points do not split evenly into " +
                                  std::to_string(arch.patches) + " patches");
    }
    const std::size_t h = arch.patch_hidden;
    const std::array<std::size_t, 3> widths{h, h, 3};
    for (std::size_t q = 0; q < arch.patches; ++q) {
      ae.patches.push_back(PatchNet{detail::init_stack(2 + kLatentDim, widths, false, rng)});
    }
    ae.grid = unit_grid(points / arch.patches);
  }
  return ae;
}

// ---------------------------------------------------------------------------
// Graph construction

struct DenseNodes {
  NodeId weight;
  NodeId bias;
};

inline std::vector<DenseNodes> bind_layers(Tape& tape, std::span<const Dense> layers, LeafKind kind) {
  std::vector<DenseNodes> out;
  out.reserve(layers.size());
  for (const Dense& d : layers) {
    if (kind == LeafKind::Parameter) {
      out.push_back({tape.parameter(d.weight), tape.parameter(d.bias)});
    } else {
      out.push_back({tape.constant(d.weight), tape.constant(d.bias)});
    }
  }
  return out;
}

inline NodeId apply_stack(Tape& tape, std::span<const DenseNodes> layers, NodeId x, bool relu_last) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = tape.add(tape.matmul(x, layers[i].weight), layers[i].bias);
    if (relu_last || i + 1 < layers.size()) x = tape.relu(x);
  }
  return x;
}

struct ClassifierNodes {
  std::vector<DenseNodes> point_mlp;
  std::vector<DenseNodes> head;
};

inline ClassifierNodes bind(Tape& tape, const ClassifierModel& m, LeafKind kind) {
  return {bind_layers(tape, m.point_mlp, kind), bind_layers(tape, m.head, kind)};
}

/// points: [N, 3] node -> logits [C].
inline NodeId classifier_logits(Tape& tape, const ClassifierNodes& m, NodeId points) {
  const NodeId features = apply_stack(tape, m.point_mlp, points, true);
  const NodeId pooled = tape.max_reduce(features, 0);
  return apply_stack(tape, m.head, pooled, false);
}

struct AutoencoderNodes {
  std::vector<DenseNodes> encoder_point_mlp;
  DenseNodes encoder_out;
  DecoderKind kind = DecoderKind::Mlp;
  std::vector<DenseNodes> mlp_decoder;
  std::vector<std::vector<DenseNodes>> patches;
  NodeId grid;
  std::size_t points = 0;
};

inline AutoencoderNodes bind(Tape& tape, const AutoencoderModel& ae, LeafKind kind) {
  AutoencoderNodes n;
  n.encoder_point_mlp = bind_layers(tape, ae.encoder_point_mlp, kind);
  n.encoder_out = bind_layers(tape, std::span<const Dense>(&ae.encoder_out, 1), kind).front();
  n.kind = ae.kind;
  n.points = ae.points;
  if (ae.kind == DecoderKind::Mlp) {
    n.mlp_decoder = bind_layers(tape, ae.mlp_decoder, kind);
  } else {
    for (const PatchNet& p : ae.patches) n.patches.push_back(bind_layers(tape, p.layers, kind));
    n.grid = tape.constant(ae.grid);
  }
  return n;
}

/// points: [N, 3] node -> code [128].
inline NodeId encoder_code(Tape& tape, const AutoencoderNodes& ae, NodeId points) {
  const NodeId features = apply_stack(tape, ae.encoder_point_mlp, points, true);
  const NodeId pooled = tape.max_reduce(features, 0);
  return tape.add(tape.matmul(pooled, ae.encoder_out.weight), ae.encoder_out.bias);
}

/// code: [128] node -> points [P, 3].
inline NodeId decoder_points(Tape& tape, const AutoencoderNodes& ae, NodeId code) {
  if (ae.kind == DecoderKind::Mlp) {
    const NodeId flat = apply_stack(tape, ae.mlp_decoder, code, false);
    return tape.reshape(flat, Shape{ae.points, 3});
  }
  std::vector<std::size_t> grid_rows{0, 1};
  std::vector<std::size_t> latent_rows(kLatentDim);
  std::iota(latent_rows.begin(), latent_rows.end(), std::size_t{2});
  std::vector<NodeId> pieces;
  for (const auto& layers : ae.patches) {
    // [u v z] W = [u v] W_grid + z W_latent, without materializing the tile.
    const NodeId w_grid = tape.gather(layers[0].weight, grid_rows);
    const NodeId w_latent = tape.gather(layers[0].weight, latent_rows);
    const NodeId shift = tape.add(tape.matmul(code, w_latent), layers[0].bias);
    NodeId h = tape.relu(tape.add(tape.matmul(ae.grid, w_grid), shift));
    h = apply_stack(tape, std::span<const DenseNodes>(layers).subspan(1), h, false);
    pieces.push_back(h);
  }
  return tape.concat(std::move(pieces));
}

// ---------------------------------------------------------------------------
// Plain evaluation

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline Tensor pointnet_forward(const ClassifierModel& m, const PointCloud& pc) {
  if (pc.empty()) throw GeometryError("pointnet_forward: empty cloud");
  Tape tape;
  const ClassifierNodes nodes = bind(tape, m, LeafKind::Constant);
  const NodeId logits = classifier_logits(tape, nodes, tape.input(pc.to_tensor()));
  return tape.value(logits);
}

inline std::size_t predict(const ClassifierModel& m, const PointCloud& pc) {
  return argmax(pointnet_forward(m, pc).data());
}

inline LatentCode encode(const AutoencoderModel& ae, const PointCloud& pc) {
  if (pc.empty()) throw GeometryError("encode: empty cloud");
  Tape tape;
  const AutoencoderNodes nodes = bind(tape, ae, LeafKind::Constant);
  return tape.value(encoder_code(tape, nodes, tape.input(pc.to_tensor())));
}

inline PointCloud decode(const AutoencoderModel& ae, const LatentCode& z) {
  if (z.size() != kLatentDim) {
    throw ShapeError("decode: latent code must have " + std::to_string(kLatentDim) + " values, got " +
                     std::to_string(z.size()));
  }
  if (!z.all_finite()) throw GeometryError("decode: non-finite latent code");
  Tape tape;
  const AutoencoderNodes nodes = bind(tape, ae, LeafKind::Constant);
  const NodeId out = decoder_points(tape, nodes, tape.input(z.reshaped(Shape{kLatentDim})));
  return PointCloud::from_tensor(tape.value(out));
}

inline PointCloud reconstruct(const AutoencoderModel& ae, const PointCloud& pc) {
  return decode(ae, encode(ae, pc));
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 12;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;  // classifier only
  double test_accuracy = 0.0;   // classifier only
  double test_chamfer = 0.0;    // auto-encoder only
};

using EpochCallback = std::function<void(const EpochStats&)>;

template <class Model>
struct Trained {
  Model model;
  std::vector<EpochStats> history;
};

namespace detail {

inline void validate(const TrainConfig& cfg) {
  if (cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("train config: epochs, batch size and learning rate must be positive");
  }
}

inline std::vector<Tensor*> classifier_params(ClassifierModel& m) {
  std::vector<Tensor*> p;
  for (auto* stack : {&m.point_mlp, &m.head}) {
    for (Dense& d : *stack) {
      p.push_back(&d.weight);
      p.push_back(&d.bias);
    }
  }
  return p;
}

inline std::vector<Tensor*> autoencoder_params(AutoencoderModel& ae) {
  std::vector<Tensor*> p;
  auto add = [&](std::vector<Dense>& stack) {
    for (Dense& d : stack) {
      p.push_back(&d.weight);
      p.push_back(&d.bias);
    }
  };
  add(ae.encoder_point_mlp);
  p.push_back(&ae.encoder_out.weight);
  p.push_back(&ae.encoder_out.bias);
  add(ae.mlp_decoder);
  for (PatchNet& net : ae.patches) add(net.layers);
  return p;
}

// Parameter leaves in a tape are recorded in the same order as the
// corresponding *_params() lists.
inline void apply_gradients(AdamState& adam, std::vector<Tensor*> params, const Tape& tape,
                            NodeId loss) {
  const Tape::Gradients grads = tape.gradient(loss);
  if (grads.size() != params.size()) throw std::logic_error("parameter bookkeeping mismatch");
  std::vector<Tensor> values;
  std::vector<Tensor> g;
  values.reserve(params.size());
  g.reserve(params.size());
  std::size_t i = 0;
  for (const auto& [id, grad] : grads) {
    values.push_back(std::move(*params[i++]));
    g.push_back(grad);
  }
  adam_step(adam, values, g);
  for (std::size_t k = 0; k < params.size(); ++k) *params[k] = std::move(values[k]);
}

}  // namespace detail

inline double accuracy(const ClassifierModel& m, std::span<const LabeledCloud> data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const LabeledCloud& e : data) hits += predict(m, e.cloud) == e.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Minimizes mean softmax cross-entropy with Adam over shuffled minibatches.
inline Trained<ClassifierModel> train_classifier(std::span<const LabeledCloud> train,
                                                 std::span<const LabeledCloud> test,
                                                 std::size_t classes, const TrainConfig& cfg,
                                                 const ClassifierArch& arch = {},
                                                 const EpochCallback& on_epoch = {}) {
  detail::validate(cfg);
  if (classes < 2) throw std::invalid_argument("train_classifier: need at least 2 classes");
  std::vector<std::size_t> per_class(classes, 0);
  for (const LabeledCloud& e : train) {
    if (e.label >= classes) throw std::invalid_argument("train_classifier: label out of range");
    ++per_class[e.label];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (per_class[c] == 0) {
      throw std::invalid_argument("train_classifier: class " + std::to_string(c) + " has no examples");
    }
  }

  Trained<ClassifierModel> out{init_classifier(classes, cfg.seed, arch), {}};
  ClassifierModel& m = out.model;
  AdamState adam(cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed ^ 0x5deece66dULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> batch_losses;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      const ClassifierNodes nodes = bind(tape, m, LeafKind::Parameter);
      std::vector<NodeId> rows;
      std::vector<std::size_t> labels;
      for (std::size_t b = start; b < stop; ++b) {
        const LabeledCloud& e = train[order[b]];
        const NodeId logits = classifier_logits(tape, nodes, tape.input(e.cloud.to_tensor()));
        hits += argmax(tape.value(logits).data()) == e.label ? 1 : 0;
        rows.push_back(tape.reshape(logits, Shape{1, classes}));
        labels.push_back(e.label);
      }
      const NodeId loss = tape.softmax_cross_entropy(tape.concat(rows), labels);
      batch_losses.push_back(tape.value(loss).item() * static_cast<double>(stop - start));
      detail::apply_gradients(adam, detail::classifier_params(m), tape, loss);
    }
    EpochStats s;
    s.epoch = epoch;
    s.loss = exact_sum(batch_losses) / static_cast<double>(train.size());
    s.train_accuracy = static_cast<double>(hits) / static_cast<double>(train.size());
    s.test_accuracy = accuracy(m, test);
    out.history.push_back(s);
    if (on_epoch) on_epoch(s);
  }
  return out;
}

inline double mean_reconstruction_chamfer(const AutoencoderModel& ae, std::span<const LabeledCloud> data) {
  if (data.empty()) return 0.0;
  std::vector<double> d;
  d.reserve(data.size());
  for (const LabeledCloud& e : data) d.push_back(chamfer_sq(e.cloud, reconstruct(ae, e.cloud)));
  return exact_sum(d) / static_cast<double>(d.size());
}

/// End-to-end training of encoder and decoder on chamfer_sq(x, G(x)), all
/// classes pooled. `test` may be empty.
inline Trained<AutoencoderModel> train_autoencoder(std::span<const LabeledCloud> train,
                                                   std::span<const LabeledCloud> test,
                                                   const TrainConfig& cfg, DecoderKind kind,
                                                   std::size_t points,
                                                   const AutoencoderArch& arch = {},
                                                   const EpochCallback& on_epoch = {}) {
  detail::validate(cfg);
  if (train.empty()) throw std::invalid_argument("train_autoencoder: empty dataset");
  Trained<AutoencoderModel> out{init_autoencoder(kind, points, cfg.seed, arch), {}};
  AutoencoderModel& ae = out.model;
  AdamState adam(cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed ^ 0x2545f4914f6cdd1dULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> losses;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      const AutoencoderNodes nodes = bind(tape, ae, LeafKind::Parameter);
      std::vector<NodeId> terms;
      for (std::size_t b = start; b < stop; ++b) {
        const NodeId x = tape.input(train[order[b]].cloud.to_tensor());
        const NodeId recon = decoder_points(tape, nodes, encoder_code(tape, nodes, x));
        const NodeId d = chamfer_sq(tape, x, recon);
        losses.push_back(tape.value(d).item());
        terms.push_back(tape.reshape(d, Shape{1}));
      }
      const NodeId loss = tape.mean(tape.concat(terms));
      detail::apply_gradients(adam, detail::autoencoder_params(ae), tape, loss);
    }
    EpochStats s;
    s.epoch = epoch;
    s.loss = exact_sum(losses) / static_cast<double>(losses.size());
    s.test_chamfer = mean_reconstruction_chamfer(ae, test);
    out.history.push_back(s);
    if (on_epoch) on_epoch(s);
  }
  return out;
}

}  // namespace shapeadv

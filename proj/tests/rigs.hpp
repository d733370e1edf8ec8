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

// Small trained models shared by the attack, defense and harness tests.

#pragma once

#include "shapeadv/data.hpp"
#include "shapeadv/models.hpp"

namespace rigs {

struct Small {
  shapeadv::Dataset data;
  shapeadv::ClassifierModel classifier;
  shapeadv::AutoencoderModel autoencoder;
};

// Three classes, 64-point clouds, narrow networks. Trained once per process.
inline const Small& small() {
  static const Small rig = [] {
    using namespace shapeadv;
    DatasetConfig dc;
    dc.categories = {Category::Sphere, Category::Box, Category::Torus};
    dc.train_per_class = 16;
    dc.test_per_class = 6;
    dc.points = 64;
    dc.seed = 31;
    Small s;
    s.data = build_dataset(dc);
    TrainConfig tc;
    tc.epochs = 8;
    tc.batch_size = 8;
    tc.seed = 4;
    s.classifier = train_classifier(s.data.train, {}, 3, tc, ClassifierArch{{32, 64}, {32}}).model;
    tc.epochs = 10;
    tc.learning_rate = 2e-3;
    s.autoencoder =
        train_autoencoder(s.data.train, {}, tc, DecoderKind::Mlp, 64, AutoencoderArch{{32, 64}, {128}, 4, 32}).model;
    return s;
  }();
  return rig;
}

}  // namespace rigs

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

#pragma once

#include <memory>

#include "shapeadv/models.hpp"

namespace shapeadv {

enum class DefenseKind { None, Sor, PointAe };

inline std::string_view defense_name(DefenseKind k) {
  switch (k) {
    case DefenseKind::None: return "none";
    case DefenseKind::Sor: return "sor";
    case DefenseKind::PointAe: return "ae";
  }
  return "?";
}

inline DefenseKind parse_defense(std::string_view s) {
  if (s == "none") return DefenseKind::None;
  if (s == "sor") return DefenseKind::Sor;
  if (s == "ae" || s == "pointae") return DefenseKind::PointAe;
  throw std::invalid_argument("unknown defense '" + std::string(s) + "'");
}

/// Preprocessing applied to a cloud before classification.
class DefensePipeline {
 public:
  static DefensePipeline none() { return DefensePipeline(DefenseKind::None); }

  static DefensePipeline sor(SorConfig cfg = {}) {
    DefensePipeline d(DefenseKind::Sor);
    d.sor_ = cfg;
    return d;
  }

  static DefensePipeline pointae(std::shared_ptr<const AutoencoderModel> ae) {
    if (!ae) throw std::invalid_argument("pointae defense needs an auto-encoder");
    DefensePipeline d(DefenseKind::PointAe);
    d.ae_ = std::move(ae);
    return d;
  }

  DefenseKind kind() const noexcept { return kind_; }
  const SorConfig& sor_config() const noexcept { return sor_; }
  const AutoencoderModel* autoencoder() const noexcept { return ae_.get(); }

 private:
  explicit DefensePipeline(DefenseKind k) : kind_(k) {}

  DefenseKind kind_;
  SorConfig sor_;
  std::shared_ptr<const AutoencoderModel> ae_;
};

inline PointCloud apply_defense(const DefensePipeline& d, const PointCloud& pc) {
  switch (d.kind()) {
    case DefenseKind::None: return pc;
    case DefenseKind::Sor: return sor_filter(pc, d.sor_config());
    case DefenseKind::PointAe: return reconstruct(*d.autoencoder(), pc);
  }
  throw std::logic_error("unreachable");
}

inline std::size_t defended_predict(const ClassifierModel& m, const DefensePipeline& d, const PointCloud& pc) {
  return predict(m, apply_defense(d, pc));
}

}  // namespace shapeadv

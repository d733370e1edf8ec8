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

// Point-cloud kernels. Everything here is exact O(N^2); clouds are small.

#pragma once

#include "shapeadv/tape.hpp"

namespace shapeadv {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Point3 = std::array<double, 3>;

inline double squared_distance(const Point3& a, const Point3& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

/// Ordered sequence of points. Order carries no meaning for any metric in
/// this library but is preserved so that filters can return subsequences.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> points) : points_(std::move(points)) {}
  PointCloud(std::initializer_list<Point3> points) : points_(points) {}

  /// From an [N, 3] tensor.
  static PointCloud from_tensor(const Tensor& t) {
    if (t.rank() != 2 || t.dim(1) != 3) {
      throw ShapeError("point cloud tensor must be [N,3], got " + to_string(t.shape()));
    }
    std::vector<Point3> pts(t.dim(0));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pts[i] = {t.at(i, 0), t.at(i, 1), t.at(i, 2)};
    }
    return PointCloud(std::move(pts));
  }

  Tensor to_tensor() const {
    if (points_.empty()) throw GeometryError("empty point cloud");
    Tensor t(Shape{points_.size(), 3});
    for (std::size_t i = 0; i < points_.size(); ++i) {
      for (std::size_t k = 0; k < 3; ++k) t.at(i, k) = points_[i][k];
    }
    return t;
  }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Point3& operator[](std::size_t i) const { return points_[i]; }
  Point3& operator[](std::size_t i) { return points_[i]; }
  const std::vector<Point3>& points() const noexcept { return points_; }
  std::vector<Point3>& points() noexcept { return points_; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  void push_back(const Point3& p) { points_.push_back(p); }

  bool all_finite() const {
    return std::all_of(points_.begin(), points_.end(), [](const Point3& p) {
      return std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]);
    });
  }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Point3> points_;
};

inline Point3 centroid(const PointCloud& pc) {
  if (pc.empty()) throw GeometryError("centroid of empty cloud");
  Point3 c{};
  std::vector<double> coords(pc.size());
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < pc.size(); ++i) coords[i] = pc[i][k];
    c[k] = exact_sum(coords) / static_cast<double>(pc.size());
  }
  return c;
}

inline double max_norm(const PointCloud& pc) {
  double m = 0.0;
  for (const Point3& p : pc) m = std::max(m, std::sqrt(squared_distance(p, Point3{})));
  return m;
}

/// Centers on the centroid and scales so the farthest point has norm 1.
inline PointCloud normalize_unit_ball(const PointCloud& pc) {
  if (pc.empty()) throw GeometryError("normalize_unit_ball: empty cloud");
  if (!pc.all_finite()) throw GeometryError("normalize_unit_ball: non-finite coordinates");
  const Point3 c = centroid(pc);
  std::vector<Point3> pts(pc.size());
  double radius = 0.0;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) pts[i][k] = pc[i][k] - c[k];
    radius = std::max(radius, std::sqrt(squared_distance(pts[i], Point3{})));
  }
  if (!(radius > 0.0)) throw GeometryError("normalize_unit_ball: all points coincide");
  for (Point3& p : pts) {
    for (double& v : p) v /= radius;
  }
  return PointCloud(std::move(pts));
}

namespace detail {

// Mean over one cloud of the squared distance to the nearest point of the
// other. The mean uses a correctly rounded sum, so point order is irrelevant.
inline double mean_nearest_sq(const PointCloud& from, const PointCloud& to) {
  std::vector<double> mins(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = squared_distance(from[i], to[0]);
    for (std::size_t j = 1; j < to.size(); ++j) {
      const double d = squared_distance(from[i], to[j]);
      if (d < best) best = d;
    }
    mins[i] = best;
  }
  return exact_sum(mins) / static_cast<double>(from.size());
}

}  // namespace detail

/// Squared Chamfer distance: mean nearest squared distance from a to b plus
/// the same from b to a. Not a metric (the triangle inequality can fail).
inline double chamfer_sq(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw GeometryError("chamfer_sq: empty cloud");
  return detail::mean_nearest_sq(a, b) + detail::mean_nearest_sq(b, a);
}

/// One-directional term of chamfer_sq: mean over `from` of the squared
/// distance to the nearest point of `to`.
inline double nearest_sq_mean(const PointCloud& from, const PointCloud& to) {
  if (from.empty() || to.empty()) throw GeometryError("nearest_sq_mean: empty cloud");
  return detail::mean_nearest_sq(from, to);
}

/// Differentiable chamfer_sq between two [N,3] / [M,3] nodes. Produces the
/// same value as the plain overload for the same coordinates.
inline NodeId chamfer_sq(Tape& tape, NodeId a, NodeId b) {
  const NodeId d = tape.pairwise_sq_dist(a, b);
  const NodeId ab = tape.mean(tape.min_reduce(d, 1));
  const NodeId ba = tape.mean(tape.min_reduce(d, 0));
  return tape.add(ab, ba);
}

struct LabeledCloud {
  PointCloud cloud;
  std::size_t label = 0;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// The K entries carrying `label` with the smallest chamfer_sq to `query`,
/// ascending; ties go to the lower dataset index.
inline std::vector<Neighbor> knn_chamfer(const PointCloud& query, std::span<const LabeledCloud> dataset,
                                         std::size_t k, std::size_t label) {
  if (k == 0) throw GeometryError("knn_chamfer: K must be positive");
  std::vector<Neighbor> candidates;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].label == label) candidates.push_back({i, chamfer_sq(query, dataset[i].cloud)});
  }
  if (candidates.size() < k) {
    throw GeometryError("knn_chamfer: need " + std::to_string(k) + " entries with label " +
                        std::to_string(label) + ", found " + std::to_string(candidates.size()));
  }
  auto before = [](const Neighbor& x, const Neighbor& y) {
    return x.distance < y.distance || (x.distance == y.distance && x.index < y.index);
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), before);
  candidates.resize(k);
  return candidates;
}

struct SorConfig {
  std::size_t k = 2;
  double c = 2.5;
};

/// Mean Euclidean distance from each point to its k nearest other points.
inline std::vector<double> mean_knn_distances(const PointCloud& pc, std::size_t k) {
  const std::size_t n = pc.size();
  if (k == 0 || n <= k) {
    throw GeometryError("sor: need more than k=" + std::to_string(k) + " points, got " +
                        std::to_string(n));
  }
  std::vector<double> out(n);
  std::vector<std::pair<double, std::size_t>> row;
  row.reserve(n - 1);
  std::vector<double> nearest(k);
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.emplace_back(squared_distance(pc[i], pc[j]), j);
    }
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    for (std::size_t q = 0; q < k; ++q) nearest[q] = std::sqrt(row[q].first);
    out[i] = exact_sum(nearest) / static_cast<double>(k);
  }
  return out;
}

/// Statistical outlier removal: keeps a point iff its mean k-NN distance is
/// at most mu + c * sigma (population statistics over the cloud). The point
/// itself is not counted among its neighbors. Order is preserved.
inline PointCloud sor_filter(const PointCloud& pc, const SorConfig& cfg = {}) {
  if (cfg.c < 0.0) throw GeometryError("sor: c must be nonnegative");
  const std::vector<double> d = mean_knn_distances(pc, cfg.k);
  const double n = static_cast<double>(d.size());
  const double mu = exact_sum(d) / n;
  std::vector<double> dev(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) dev[i] = (d[i] - mu) * (d[i] - mu);
  const double sigma = std::sqrt(exact_sum(dev) / n);
  const double threshold = mu + cfg.c * sigma;
  PointCloud out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= threshold) out.push_back(pc[i]);
  }
  return out;
}

}  // namespace shapeadv

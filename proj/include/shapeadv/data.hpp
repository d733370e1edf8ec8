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

// Procedural shape datasets and on-disk formats.
//
// Point clouds:
//   binary  "PC3D" | u32 count | count x 3 f32        (little-endian)
//   text    "PCT1\n" count "\n" then one "x y z" line per point
// Checkpoints: a text manifest terminated by an "end" line, followed by a
// little-endian f64 blob holding every tensor at the offset the manifest
// names.

#pragma once

#include <bit>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "shapeadv/models.hpp"
#include "shapeadv/random.hpp"

namespace shapeadv {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class FormatError : public IoError {
 public:
  using IoError::IoError;
};
class TruncatedError : public IoError {
 public:
  using IoError::IoError;
};
class CountMismatchError : public IoError {
 public:
  using IoError::IoError;
};
class KindMismatchError : public IoError {
 public:
  using IoError::IoError;
};

// ---------------------------------------------------------------------------
// Shapes

enum class Category { Sphere, Box, Cylinder, Cone, Torus, Capsule, Pyramid, Ellipsoid };

inline constexpr std::array<Category, 8> kAllCategories{
    Category::Sphere, Category::Box,     Category::Cylinder, Category::Cone,
    Category::Torus,  Category::Capsule, Category::Pyramid,  Category::Ellipsoid};

inline std::string_view category_name(Category c) {
  switch (c) {
    case Category::Sphere: return "sphere";
    case Category::Box: return "box";
    case Category::Cylinder: return "cylinder";
    case Category::Cone: return "cone";
    case Category::Torus: return "torus";
    case Category::Capsule: return "capsule";
    case Category::Pyramid: return "pyramid";
    case Category::Ellipsoid: return "ellipsoid";
  }
  return "?";
}

inline Category parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  throw std::invalid_argument("unknown shape category '" + std::string(name) + "'");
}

/// Geometric parameters, by category:
///   sphere    size[0] radius
///   box       half extents along x, y, z
///   cylinder  radius, half height
///   cone      base radius, height
///   torus     major radius, tube radius
///   capsule   radius, half length of the straight section
///   pyramid   half width of the square base, height
///   ellipsoid semi-axes along x, y, z
/// The shape is rotated by `yaw` about the z axis after sampling.
struct ShapeSpec {
  Category category = Category::Sphere;
  std::array<double, 3> size{1.0, 1.0, 1.0};
  double yaw = 0.0;
  std::uint64_t seed = 0;
};

/// Draws category parameters from the ranges used for the synthetic
/// datasets. Ranges keep every category visibly distinct after
/// normalization (e.g. ellipsoids are never close to round).
inline ShapeSpec sample_shape_spec(Category category, std::mt19937_64& rng) {
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  ShapeSpec s;
  s.category = category;
  switch (category) {
    case Category::Sphere: s.size = {u(0.5, 1.0), 0.0, 0.0}; break;
    case Category::Box: s.size = {u(0.3, 1.0), u(0.3, 1.0), u(0.3, 1.0)}; break;
    case Category::Cylinder: s.size = {u(0.25, 0.5), u(0.4, 1.0), 0.0}; break;
    case Category::Cone: s.size = {u(0.3, 0.7), u(0.8, 1.6), 0.0}; break;
    case Category::Torus: s.size = {u(0.6, 0.9), u(0.12, 0.3), 0.0}; break;
    case Category::Capsule: s.size = {u(0.2, 0.4), u(0.3, 0.8), 0.0}; break;
    case Category::Pyramid: s.size = {u(0.4, 0.8), u(0.6, 1.4), 0.0}; break;
    case Category::Ellipsoid: s.size = {u(0.8, 1.0), u(0.45, 0.65), u(0.2, 0.4)}; break;
  }
  s.yaw = u(0.0, 2.0 * std::numbers::pi);
  s.seed = rng();
  return s;
}

namespace detail {

inline Point3 unit_sphere_point(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  for (;;) {
    Point3 v{normal(rng), normal(rng), normal(rng)};
    const double n = std::sqrt(squared_distance(v, Point3{}));
    if (n > 1e-12) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

inline Point3 triangle_point(const Point3& a, const Point3& b, const Point3& c, double r1, double r2) {
  const double s = std::sqrt(r1);
  Point3 p;
  for (std::size_t k = 0; k < 3; ++k) p[k] = (1.0 - s) * a[k] + s * (1.0 - r2) * b[k] + s * r2 * c[k];
  return p;
}

inline std::size_t pick(std::span<const double> areas, double u) {
  const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    acc += areas[i];
    if (u * total < acc) return i;
  }
  return areas.size() - 1;
}

inline void check_spec(const ShapeSpec& s) {
  auto positive = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (!(s.size[k] > 0.0) || !std::isfinite(s.size[k])) {
        throw std::invalid_argument(std::string(category_name(s.category)) +
                                    ": parameters must be positive and finite");
      }
    }
  };
  switch (s.category) {
    case Category::Sphere: positive(1); break;
    case Category::Box:
    case Category::Ellipsoid: positive(3); break;
    case Category::Torus:
      positive(2);
      if (s.size[1] >= s.size[0]) throw std::invalid_argument("torus: tube radius must be below major radius");
      break;
    default: positive(2); break;
  }
  if (!std::isfinite(s.yaw)) throw std::invalid_argument("shape yaw must be finite");
}

}  // namespace detail

/// Area-uniform surface sample of n points.
inline PointCloud generate_shape(const ShapeSpec& spec, std::size_t n) {
  if (n == 0) throw std::invalid_argument("generate_shape: n must be positive");
  detail::check_spec(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double pi = std::numbers::pi;
  const auto [a, b, c] = spec.size;
  std::vector<Point3> pts;
  pts.reserve(n);

  auto disc = [&](double radius) {
    const double r = radius * std::sqrt(unif(rng));
    const double t = 2.0 * pi * unif(rng);
    return std::pair{r * std::cos(t), r * std::sin(t)};
  };

  while (pts.size() < n) {
    switch (spec.category) {
      case Category::Sphere: {
        const Point3 v = detail::unit_sphere_point(rng);
        pts.push_back({a * v[0], a * v[1], a * v[2]});
        break;
      }
      case Category::Box: {
        const std::array<double, 3> face_area{b * c, a * c, a * b};
        const std::size_t axis = detail::pick(face_area, unif(rng));
        const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
        Point3 p{(2 * unif(rng) - 1) * a, (2 * unif(rng) - 1) * b, (2 * unif(rng) - 1) * c};
        p[axis] = sign * spec.size[axis];
        pts.push_back(p);
        break;
      }
      case Category::Cylinder: {
        const std::array<double, 2> area{2 * pi * a * 2 * b, 2 * pi * a * a};
        if (detail::pick(area, unif(rng)) == 0) {
          const double t = 2 * pi * unif(rng);
          pts.push_back({a * std::cos(t), a * std::sin(t), (2 * unif(rng) - 1) * b});
        } else {
          const auto [x, y] = disc(a);
          pts.push_back({x, y, unif(rng) < 0.5 ? -b : b});
        }
        break;
      }
      case Category::Cone: {
        const std::array<double, 2> area{pi * a * std::hypot(a, b), pi * a * a};
        if (detail::pick(area, unif(rng)) == 0) {
          const double s = std::sqrt(unif(rng));  // fraction of the way from apex
          const double t = 2 * pi * unif(rng);
          pts.push_back({a * s * std::cos(t), a * s * std::sin(t), b * (1.0 - s)});
        } else {
          const auto [x, y] = disc(a);
          pts.push_back({x, y, 0.0});
        }
        break;
      }
      case Category::Torus: {
        const double theta = 2 * pi * unif(rng);
        if (unif(rng) * (a + b) > a + b * std::cos(theta)) continue;
        const double phi = 2 * pi * unif(rng);
        const double ring = a + b * std::cos(theta);
        pts.push_back({ring * std::cos(phi), ring * std::sin(phi), b * std::sin(theta)});
        break;
      }
      case Category::Capsule: {
        const std::array<double, 2> area{2 * pi * a * 2 * b, 4 * pi * a * a};
        if (detail::pick(area, unif(rng)) == 0) {
          const double t = 2 * pi * unif(rng);
          pts.push_back({a * std::cos(t), a * std::sin(t), (2 * unif(rng) - 1) * b});
        } else {
          const Point3 v = detail::unit_sphere_point(rng);
          pts.push_back({a * v[0], a * v[1], a * v[2] + (v[2] >= 0 ? b : -b)});
        }
        break;
      }
      case Category::Pyramid: {
        const double slant = std::hypot(a, b);
        const std::array<double, 5> area{4 * a * a, a * slant, a * slant, a * slant, a * slant};
        const std::size_t face = detail::pick(area, unif(rng));
        if (face == 0) {
          pts.push_back({(2 * unif(rng) - 1) * a, (2 * unif(rng) - 1) * a, 0.0});
        } else {
          const std::array<Point3, 4> corner{Point3{a, a, 0}, Point3{-a, a, 0}, Point3{-a, -a, 0},
                                             Point3{a, -a, 0}};
          const Point3 apex{0, 0, b};
          pts.push_back(detail::triangle_point(apex, corner[face - 1], corner[face % 4], unif(rng),
                                               unif(rng)));
        }
        break;
      }
      case Category::Ellipsoid: {
        // Map a uniform sphere sample and accept in proportion to the local
        // area stretch.
        const Point3 v = detail::unit_sphere_point(rng);
        const double stretch = std::sqrt(std::pow(b * c * v[0], 2) + std::pow(a * c * v[1], 2) +
                                         std::pow(a * b * v[2], 2));
        const double bound = std::max({b * c, a * c, a * b});
        if (unif(rng) * bound > stretch) continue;
        pts.push_back({a * v[0], b * v[1], c * v[2]});
        break;
      }
    }
  }

  const double cy = std::cos(spec.yaw), sy = std::sin(spec.yaw);
  for (Point3& p : pts) p = {cy * p[0] - sy * p[1], sy * p[0] + cy * p[1], p[2]};
  return PointCloud(std::move(pts));
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetConfig {
  std::vector<Category> categories{kAllCategories.begin(), kAllCategories.end()};
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t points = 256;
  std::uint64_t seed = 7;
};

struct Dataset {
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> test;
  std::vector<std::string> class_names;
  std::size_t points = 0;
  std::uint64_t seed = 0;

  std::size_t classes() const noexcept { return class_names.size(); }
};

/// Instance ids: class c owns ids [c * (train + test), (c + 1) * (train + test));
/// the first `train` of them go to the training split.
inline Dataset build_dataset(const DatasetConfig& cfg) {
  if (cfg.categories.empty() || cfg.train_per_class == 0 || cfg.test_per_class == 0 || cfg.points == 0) {
    throw std::invalid_argument("build_dataset: categories, counts and points must be non-empty");
  }
  Dataset ds;
  ds.points = cfg.points;
  ds.seed = cfg.seed;
  const std::size_t per_class = cfg.train_per_class + cfg.test_per_class;
  for (std::size_t label = 0; label < cfg.categories.size(); ++label) {
    ds.class_names.emplace_back(category_name(cfg.categories[label]));
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::uint64_t id = label * per_class + i;
      std::mt19937_64 rng(derive_seed(cfg.seed, {id}));
      const ShapeSpec spec = sample_shape_spec(cfg.categories[label], rng);
      LabeledCloud e{normalize_unit_ball(generate_shape(spec, cfg.points)), label};
      (i < cfg.train_per_class ? ds.train : ds.test).push_back(std::move(e));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Point-cloud files

enum class CloudFormat { Binary, Text };

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}
inline std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline PointCloud parse_binary_cloud(const std::string& bytes, const std::string& where) {
  if (bytes.size() < 8) throw TruncatedError(where + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
  const std::uint32_t count = get_u32(bytes.data() + 4);
  if (count == 0) throw FormatError(where + ": point count is zero");
  const std::size_t body = bytes.size() - 8;
  if (body != static_cast<std::size_t>(count) * 12) {
    throw CountMismatchError(where + ": header declares " + std::to_string(count) + " points, body holds " +
                             std::to_string(body) + " bytes (" + std::to_string(body / 12) + " points)");
  }
  std::vector<Point3> pts(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const float f = std::bit_cast<float>(get_u32(bytes.data() + 8 + (i * 3 + k) * 4));
      if (!std::isfinite(f)) throw FormatError(where + ": non-finite coordinate at point " + std::to_string(i));
      pts[i][k] = static_cast<double>(f);
    }
  }
  return PointCloud(std::move(pts));
}

inline PointCloud parse_text_cloud(const std::string& bytes, const std::string& where) {
  std::istringstream in(bytes);
  std::string line;
  std::getline(in, line);  // magic
  if (!std::getline(in, line)) throw TruncatedError(where + ": missing point count line");
  std::size_t count = 0;
  {
    std::istringstream ls(line);
    std::string extra;
    if (!(ls >> count) || (ls >> extra) || count == 0) throw FormatError(where + ": bad point count line '" + line + "'");
  }
  std::vector<Point3> pts;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    float x = 0, y = 0, z = 0;
    std::string extra;
    if (!(ls >> x >> y >> z) || (ls >> extra)) {
      throw FormatError(where + ": malformed point line " + std::to_string(pts.size() + 1) + ": '" + line + "'");
    }
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
      throw FormatError(where + ": non-finite coordinate at point " + std::to_string(pts.size()));
    }
    pts.push_back({x, y, z});
  }
  if (pts.size() != count) {
    throw CountMismatchError(where + ": header declares " + std::to_string(count) + " points, found " +
                             std::to_string(pts.size()));
  }
  return PointCloud(std::move(pts));
}

}  // namespace detail

inline std::string encode_cloud(const PointCloud& pc, CloudFormat format = CloudFormat::Binary) {
  if (pc.empty()) throw GeometryError("cannot serialize an empty cloud");
  if (!pc.all_finite()) throw GeometryError("cannot serialize non-finite coordinates");
  if (pc.size() > std::numeric_limits<std::uint32_t>::max()) throw GeometryError("cloud too large");
  std::string out;
  if (format == CloudFormat::Binary) {
    out = "PC3D";
    detail::put_u32(out, static_cast<std::uint32_t>(pc.size()));
    for (const Point3& p : pc) {
      for (double v : p) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
  }
  std::ostringstream os;
  os << "PCT1\n" << pc.size() << '\n' << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (const Point3& p : pc) {
    os << static_cast<float>(p[0]) << ' ' << static_cast<float>(p[1]) << ' ' << static_cast<float>(p[2]) << '\n';
  }
  return os.str();
}

inline PointCloud decode_cloud(const std::string& bytes, const std::string& where = "<memory>") {
  if (bytes.size() < 4) throw TruncatedError(where + ": file too short for magic");
  const std::string_view magic(bytes.data(), 4);
  if (magic == "PC3D") return detail::parse_binary_cloud(bytes, where);
  if (magic == "PCT1") return detail::parse_text_cloud(bytes, where);
  throw FormatError(where + ": bad magic");
}

inline void write_cloud(const std::filesystem::path& path, const PointCloud& pc,
                        CloudFormat format = CloudFormat::Binary) {
  detail::write_file(path, encode_cloud(pc, format));
}

inline PointCloud read_cloud(const std::filesystem::path& path) {
  return decode_cloud(detail::read_file(path), path.string());
}

/// Layout: <dir>/dataset.json plus one PC3D file per cloud.
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "shapeadv-dataset";
  manifest["version"] = 1;
  manifest["classes"] = ds.class_names;
  manifest["points"] = ds.points;
  manifest["seed"] = ds.seed;
  for (const char* split : {"train", "test"}) {
    const auto& entries = std::string_view(split) == "train" ? ds.train : ds.test;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      std::ostringstream name;
      name << split << '/' << std::setw(5) << std::setfill('0') << i << ".pc3d";
      write_cloud(dir / name.str(), entries[i].cloud);
      list.push_back({{"file", name.str()}, {"label", entries[i].label}});
    }
    manifest[split] = list;
  }
  detail::write_file(dir / "dataset.json", manifest.dump(1) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const std::string text = detail::read_file(dir / "dataset.json");
  Dataset ds;
  try {
    const auto manifest = nlohmann::json::parse(text);
    if (manifest.at("format") != "shapeadv-dataset") throw FormatError("not a dataset manifest");
    ds.class_names = manifest.at("classes").get<std::vector<std::string>>();
    ds.points = manifest.at("points").get<std::size_t>();
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    for (const char* split : {"train", "test"}) {
      auto& entries = std::string_view(split) == "train" ? ds.train : ds.test;
      for (const auto& e : manifest.at(split)) {
        const std::size_t label = e.at("label").get<std::size_t>();
        if (label >= ds.class_names.size()) throw FormatError("label out of range");
        entries.push_back({read_cloud(dir / e.at("file").get<std::string>()), label});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "dataset.json").string() + ": " + e.what());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointHeader {
  std::string kind;  // "classifier" or "autoencoder"
  std::size_t classes = 0;
  std::string decoder = "none";
  std::size_t points = 0;
  std::uint64_t seed = 0;
};

namespace detail {

using NamedTensors = std::vector<std::pair<std::string, const Tensor*>>;

inline void name_stack(NamedTensors& out, const std::string& prefix, const std::vector<Dense>& stack) {
  for (std::size_t i = 0; i < stack.size(); ++i) {
    out.emplace_back(prefix + "." + std::to_string(i) + ".weight", &stack[i].weight);
    out.emplace_back(prefix + "." + std::to_string(i) + ".bias", &stack[i].bias);
  }
}

inline std::string encode_checkpoint(const CheckpointHeader& h, const NamedTensors& tensors) {
  std::ostringstream manifest;
  manifest << "shapeadv-checkpoint 1\n"
           << "kind " << h.kind << '\n'
           << "classes " << h.classes << '\n'
           << "decoder " << h.decoder << '\n'
           << "points " << h.points << '\n'
           << "seed " << h.seed << '\n'
           << "tensors " << tensors.size() << '\n';
  std::size_t offset = 0;
  std::string blob;
  for (const auto& [name, t] : tensors) {
    manifest << "tensor " << name << " shape";
    for (std::size_t d : t->shape()) manifest << ' ' << d;
    manifest << " offset " << offset << " bytes " << t->size() * 8 << '\n';
    for (double v : t->data()) put_u64(blob, std::bit_cast<std::uint64_t>(v));
    offset += t->size() * 8;
  }
  manifest << "blob_bytes " << blob.size() << '\n' << "end\n";
  return manifest.str() + blob;
}

struct ParsedCheckpoint {
  CheckpointHeader header;
  std::map<std::string, Tensor> tensors;
};

inline ParsedCheckpoint decode_checkpoint(const std::string& bytes, const std::string& where) {
  ParsedCheckpoint out;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw TruncatedError(where + ": manifest ends without 'end' line");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != "shapeadv-checkpoint 1") throw FormatError(where + ": not a shapeadv checkpoint");

  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset, bytes;
  };
  std::vector<Entry> entries;
  std::size_t declared_tensors = 0;
  std::size_t blob_bytes = 0;
  bool have_blob_bytes = false;
  for (;;) {
    const std::string line = next_line();
    if (line == "end") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") ls >> out.header.kind;
    else if (key == "classes") ls >> out.header.classes;
    else if (key == "decoder") ls >> out.header.decoder;
    else if (key == "points") ls >> out.header.points;
    else if (key == "seed") ls >> out.header.seed;
    else if (key == "tensors") ls >> declared_tensors;
    else if (key == "blob_bytes") have_blob_bytes = static_cast<bool>(ls >> blob_bytes);
    else if (key == "tensor") {
      Entry e;
      std::string word;
      ls >> e.name >> word;
      if (word != "shape") throw FormatError(where + ": malformed tensor line '" + line + "'");
      while (ls >> word && word != "offset") e.shape.push_back(std::stoul(word));
      if (!(ls >> e.offset >> word >> e.bytes) || word != "bytes") {
        throw FormatError(where + ": malformed tensor line '" + line + "'");
      }
      entries.push_back(std::move(e));
    } else {
      throw FormatError(where + ": unknown manifest key '" + key + "'");
    }
    if (ls.fail()) throw FormatError(where + ": malformed manifest line '" + line + "'");
  }
  if (!have_blob_bytes) throw FormatError(where + ": manifest lacks blob_bytes");
  if (entries.size() != declared_tensors) {
    throw FormatError(where + ": manifest declares " + std::to_string(declared_tensors) + " tensors, lists " +
                      std::to_string(entries.size()));
  }
  const std::size_t actual = bytes.size() - pos;
  if (actual != blob_bytes) {
    throw TruncatedError(where + ": weight blob length mismatch: expected " + std::to_string(blob_bytes) +
                         " bytes, got " + std::to_string(actual));
  }
  std::size_t expected_offset = 0;
  for (const Entry& e : entries) {
    if (e.shape.empty() || e.offset != expected_offset || e.bytes != element_count(e.shape) * 8 ||
        e.offset + e.bytes > blob_bytes) {
      throw FormatError(where + ": manifest/blob length mismatch for tensor " + e.name);
    }
    std::vector<double> values(element_count(e.shape));
    for (std::size_t k = 0; k < values.size(); ++k) {
      values[k] = std::bit_cast<double>(get_u64(bytes.data() + pos + e.offset + k * 8));
    }
    out.tensors.emplace(e.name, Tensor(e.shape, std::move(values)));
    expected_offset += e.bytes;
  }
  if (expected_offset != blob_bytes) throw FormatError(where + ": manifest/blob length mismatch");
  return out;
}

inline std::vector<Dense> take_stack(std::map<std::string, Tensor>& tensors, const std::string& prefix) {
  std::vector<Dense> stack;
  for (std::size_t i = 0;; ++i) {
    const auto w = tensors.find(prefix + "." + std::to_string(i) + ".weight");
    const auto b = tensors.find(prefix + "." + std::to_string(i) + ".bias");
    if (w == tensors.end() || b == tensors.end()) break;
    stack.push_back({std::move(w->second), std::move(b->second)});
    tensors.erase(w);
    tensors.erase(prefix + "." + std::to_string(i) + ".bias");
  }
  return stack;
}

inline void check_stack(const std::vector<Dense>& stack, std::size_t in, const std::string& where) {
  for (const Dense& d : stack) {
    if (d.weight.rank() != 2 || d.weight.dim(0) != in || d.bias.rank() != 1 ||
        d.bias.dim(0) != d.weight.dim(1)) {
      throw FormatError(where + ": inconsistent layer shapes");
    }
    in = d.weight.dim(1);
  }
}

}  // namespace detail

inline std::string encode_model(const ClassifierModel& m) {
  detail::NamedTensors t;
  detail::name_stack(t, "point_mlp", m.point_mlp);
  detail::name_stack(t, "head", m.head);
  return detail::encode_checkpoint({"classifier", m.classes, "none", 0, m.seed}, t);
}

inline std::string encode_model(const AutoencoderModel& ae) {
  detail::NamedTensors t;
  detail::name_stack(t, "encoder", ae.encoder_point_mlp);
  t.emplace_back("encoder_out.weight", &ae.encoder_out.weight);
  t.emplace_back("encoder_out.bias", &ae.encoder_out.bias);
  if (ae.kind == DecoderKind::Mlp) {
    detail::name_stack(t, "mlp_decoder", ae.mlp_decoder);
  } else {
    t.emplace_back("grid", &ae.grid);
    for (std::size_t q = 0; q < ae.patches.size(); ++q) {
      detail::name_stack(t, "patch" + std::to_string(q), ae.patches[q].layers);
    }
  }
  return detail::encode_checkpoint({"autoencoder", 0, std::string(decoder_name(ae.kind)), ae.points, ae.seed}, t);
}

inline void save_model(const std::filesystem::path& path, const ClassifierModel& m) {
  detail::write_file(path, encode_model(m));
}

inline void save_model(const std::filesystem::path& path, const AutoencoderModel& ae) {
  detail::write_file(path, encode_model(ae));
}

inline CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  return detail::decode_checkpoint(detail::read_file(path), path.string()).header;
}

inline ClassifierModel decode_classifier(const std::string& bytes, const std::string& where = "<memory>") {
  auto parsed = detail::decode_checkpoint(bytes, where);
  if (parsed.header.kind != "classifier") {
    throw KindMismatchError(where + ": expected a classifier checkpoint, found kind '" + parsed.header.kind + "'");
  }
  ClassifierModel m;
  m.classes = parsed.header.classes;
  m.seed = parsed.header.seed;
  m.point_mlp = detail::take_stack(parsed.tensors, "point_mlp");
  m.head = detail::take_stack(parsed.tensors, "head");
  if (m.point_mlp.empty() || m.head.empty() || !parsed.tensors.empty()) {
    throw FormatError(where + ": unexpected tensor layout for a classifier");
  }
  detail::check_stack(m.point_mlp, 3, where);
  detail::check_stack(m.head, m.point_mlp.back().weight.dim(1), where);
  if (m.head.back().weight.dim(1) != m.classes) throw FormatError(where + ": head width does not match class count");
  return m;
}

inline AutoencoderModel decode_autoencoder(const std::string& bytes, const std::string& where = "<memory>") {
  auto parsed = detail::decode_checkpoint(bytes, where);
  if (parsed.header.kind != "autoencoder") {
    throw KindMismatchError(where + ": expected an autoencoder checkpoint, found kind '" + parsed.header.kind + "'");
  }
  AutoencoderModel ae;
  ae.points = parsed.header.points;
  ae.seed = parsed.header.seed;
  ae.encoder_point_mlp = detail::take_stack(parsed.tensors, "encoder");
  auto take = [&](const std::string& name) {
    auto it = parsed.tensors.find(name);
    if (it == parsed.tensors.end()) throw FormatError(where + ": missing tensor " + name);
    Tensor t = std::move(it->second);
    parsed.tensors.erase(it);
    return t;
  };
  ae.encoder_out.weight = take("encoder_out.weight");
  ae.encoder_out.bias = take("encoder_out.bias");
  if (parsed.header.decoder == "mlp") {
    ae.kind = DecoderKind::Mlp;
    ae.mlp_decoder = detail::take_stack(parsed.tensors, "mlp_decoder");
    detail::check_stack(ae.mlp_decoder, kLatentDim, where);
    if (ae.mlp_decoder.empty() || ae.mlp_decoder.back().weight.dim(1) != 3 * ae.points) {
      throw FormatError(where + ": decoder output does not match point count");
    }
  } else if (parsed.header.decoder == "patch") {
    ae.kind = DecoderKind::Patch;
    ae.grid = take("grid");
    for (std::size_t q = 0;; ++q) {
      auto layers = detail::take_stack(parsed.tensors, "patch" + std::to_string(q));
      if (layers.empty()) break;
      detail::check_stack(layers, 2 + kLatentDim, where);
      ae.patches.push_back({std::move(layers)});
    }
    if (ae.patches.empty() || ae.grid.rank() != 2 || ae.grid.dim(1) != 2 ||
        ae.grid.dim(0) * ae.patches.size() != ae.points) {
      throw FormatError(where + ": patch layout does not match point count");
    }
  } else {
    throw FormatError(where + ": unknown decoder kind '" + parsed.header.decoder + "'");
  }
  if (!parsed.tensors.empty()) throw FormatError(where + ": unexpected tensor " + parsed.tensors.begin()->first);
  detail::check_stack(ae.encoder_point_mlp, 3, where);
  if (ae.encoder_point_mlp.empty() || ae.encoder_out.weight.rank() != 2 ||
      ae.encoder_out.weight.dim(0) != ae.encoder_point_mlp.back().weight.dim(1) ||
      ae.encoder_out.weight.dim(1) != kLatentDim) {
    throw FormatError(where + ": inconsistent encoder shapes");
  }
  return ae;
}

inline ClassifierModel load_classifier(const std::filesystem::path& path) {
  return decode_classifier(detail::read_file(path), path.string());
}

inline AutoencoderModel load_autoencoder(const std::filesystem::path& path) {
  return decode_autoencoder(detail::read_file(path), path.string());
}

}  // namespace shapeadv

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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace shapeadv {

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// OS. Training allocates and frees many ~0.5 MB activations per example and
/// otherwise spends most of its time in page faults. Call once from main().
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

/// Raised when operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Correctly rounded sum of a sequence of doubles.
///
/// Keeps a list of non-overlapping partial sums (Shewchuk) and rounds the
/// final expansion once, so the result does not depend on the order of the
/// inputs. Reductions that must be permutation invariant go through here.
inline double exact_sum(std::span<const double> values) {
  std::vector<double> partials;
  partials.reserve(8);
  for (double x : values) {
    std::size_t used = 0;
    for (double y : partials) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[used++] = lo;
      x = hi;
    }
    partials.resize(used);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  // Sum from the top, then fix up a half-way rounding case using the sign of
  // the next partial.
  std::size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) ||
                (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

/// Dense row-major tensor of 64-bit reals.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {
    check_dims();
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
  }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double item() const {
    if (data_.size() != 1) {
      throw ShapeError("item() on tensor of shape " + to_string(shape_));
    }
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

namespace kernels {

inline constexpr std::size_t kRowBlock = 4;
inline constexpr std::size_t kColBlock = 32;

/// out[rows, n] = a[rows, k] * b[k, n] (+ bias[n]) for one block of
/// kRowBlock rows. Every output element is a single fma chain over k in
/// ascending order, so its value does not depend on its row position.
inline void gemm_block(const double* a, std::size_t lda, const double* b, std::size_t k,
                       std::size_t n, const double* bias, double* out, std::size_t ldo) {
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t nb = std::min(kColBlock, n - j0);
    alignas(64) double acc[kRowBlock][kColBlock];
    for (std::size_t r = 0; r < kRowBlock; ++r) {
      for (std::size_t j = 0; j < kColBlock; ++j) {
        acc[r][j] = (bias != nullptr && j < nb) ? bias[j0 + j] : 0.0;
      }
    }
    if (nb == kColBlock) {
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n + j0;
        for (std::size_t r = 0; r < kRowBlock; ++r) {
          const double av = a[r * lda + p];
          for (std::size_t j = 0; j < kColBlock; ++j) {
            acc[r][j] = std::fma(av, brow[j], acc[r][j]);
          }
        }
      }
    } else {
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n + j0;
        for (std::size_t r = 0; r < kRowBlock; ++r) {
          const double av = a[r * lda + p];
          for (std::size_t j = 0; j < nb; ++j) {
            acc[r][j] = std::fma(av, brow[j], acc[r][j]);
          }
        }
      }
    }
    for (std::size_t r = 0; r < kRowBlock; ++r) {
      std::copy_n(acc[r], nb, out + r * ldo + j0);
    }
  }
}

/// out[m, n] = a[m, k] * b[k, n] (+ bias[n]); all row-major.
///
/// Trailing rows are padded into a full block so that every row goes
/// through the same instruction sequence.
inline void gemm(std::span<const double> a, std::span<const double> b, std::size_t m,
                 std::size_t k, std::size_t n, const double* bias, std::span<double> out) {
  std::size_t i = 0;
  for (; i + kRowBlock <= m; i += kRowBlock) {
    gemm_block(a.data() + i * k, k, b.data(), k, n, bias, out.data() + i * n, n);
  }
  if (i < m) {
    const std::size_t rest = m - i;
    std::vector<double> pad_a(kRowBlock * k, 0.0);
    std::vector<double> pad_out(kRowBlock * n, 0.0);
    std::copy_n(a.data() + i * k, rest * k, pad_a.data());
    gemm_block(pad_a.data(), k, b.data(), k, n, bias, pad_out.data(), n);
    std::copy_n(pad_out.data(), rest * n, out.data() + i * n);
  }
}

inline std::vector<double> transpose(std::span<const double> a, std::size_t rows,
                                     std::size_t cols) {
  // Tiled; a plain loop thrashes the cache once rows reaches a few hundred.
  constexpr std::size_t kTile = 16;
  std::vector<double> t(rows * cols);
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) t[c * rows + r] = a[r * cols + c];
      }
    }
  }
  return t;
}

}  // namespace kernels

}  // namespace shapeadv

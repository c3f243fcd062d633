// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "mtgc/errors.hpp"

namespace mtgc {

/// Flat model parameter vector. All binary operations require equal dimension.
///
/// Element-wise arithmetic is evaluated left to right in index order so that
/// two code paths performing the same sequence of operations produce
/// bit-identical results.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  ParamVector(std::initializer_list<double> init) : values_(init) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }
  double& operator[](std::size_t k) { return values_[k]; }
  double operator[](std::size_t k) const { return values_[k]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  ParamVector& operator+=(const ParamVector& o) {
    check_dim(o);
    for (std::size_t k = 0; k < dim(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  ParamVector& operator-=(const ParamVector& o) {
    check_dim(o);
    for (std::size_t k = 0; k < dim(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  ParamVector& operator*=(double s) {
    for (auto& v : values_) v *= s;
    return *this;
  }
  ParamVector& operator/=(double s) {
    for (auto& v : values_) v /= s;
    return *this;
  }

  /// this += alpha * o
  ParamVector& axpy(double alpha, const ParamVector& o) {
    check_dim(o);
    for (std::size_t k = 0; k < dim(); ++k) values_[k] += alpha * o.values_[k];
    return *this;
  }

  double dot(const ParamVector& o) const {
    check_dim(o);
    double s = 0.0;
    for (std::size_t k = 0; k < dim(); ++k) s += values_[k] * o.values_[k];
    return s;
  }
  double norm_sq() const { return dot(*this); }
  double norm() const { return std::sqrt(norm_sq()); }

  bool all_finite() const noexcept {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void check_dim(const ParamVector& o) const {
    if (o.dim() != dim())
      throw ConfigError("dimension mismatch: " + std::to_string(dim()) + " vs " +
                        std::to_string(o.dim()));
  }

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
};

inline ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
inline ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
inline ParamVector operator*(double s, ParamVector a) { return a *= s; }
inline ParamVector operator/(ParamVector a, double s) { return a /= s; }

inline double distance_sq(const ParamVector& a, const ParamVector& b) {
  a.check_dim(b);
  double s = 0.0;
  for (std::size_t k = 0; k < a.dim(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

/// Arithmetic mean, summed in the given order and divided by the count.
template <typename Range>
ParamVector mean_of(const Range& vectors) {
  auto it = std::begin(vectors);
  if (it == std::end(vectors)) throw ConfigError("mean of an empty set");
  ParamVector acc = *it;
  std::size_t n = 1;
  for (++it; it != std::end(vectors); ++it, ++n) acc += *it;
  return acc / static_cast<double>(n);
}

/// Largest absolute entry-wise difference.
inline double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  a.check_dim(b);
  double m = 0.0;
  for (std::size_t k = 0; k < a.dim(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace mtgc

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mtgc/mtgc.hpp"

namespace mtgc::testing {

inline Task scalar_quadratic(double a, double optimum, ClientId owner = 0) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = a;
  Eigen::VectorXd b(1);
  b(0) = a * optimum;
  return make_quadratic(m, b, owner);
}

inline Task diag_quadratic(const std::vector<double>& diag, const std::vector<double>& b, ClientId owner = 0) {
  const auto d = static_cast<Eigen::Index>(diag.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd bb(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    a(k, k) = diag[static_cast<std::size_t>(k)];
    bb(k) = b[static_cast<std::size_t>(k)];
  }
  return make_quadratic(a, bb, owner);
}

/// Random shard with `m` examples of `d` features, labels in {0, 1}.
inline DataShard random_shard(std::size_t m, std::size_t d, std::uint64_t seed, ClientId owner = 0) {
  KeyedStream rng(seed, 99);
  DataShard s;
  s.owner_client = owner;
  for (std::size_t i = 0; i < m; ++i) {
    Example ex;
    for (std::size_t k = 0; k < d; ++k) ex.features.push_back(rng.normal());
    ex.target = rng.uniform() < 0.5 ? 0.0 : 1.0;
    s.examples.push_back(std::move(ex));
  }
  return s;
}

inline ParamVector random_point(std::size_t d, std::uint64_t seed, double scale = 1.0) {
  KeyedStream rng(seed, 4242);
  ParamVector x(d);
  for (std::size_t k = 0; k < d; ++k) x[k] = scale * rng.normal();
  return x;
}

inline double max_abs_diff_all(const std::vector<ParamVector>& a, const std::vector<ParamVector>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, max_abs_diff(a[i], b[i]));
  return m;
}

}  // namespace mtgc::testing

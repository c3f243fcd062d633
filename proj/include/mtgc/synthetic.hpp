// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "mtgc/param_vector.hpp"
#include "mtgc/rng.hpp"
#include "mtgc/task.hpp"
#include "mtgc/topology.hpp"

namespace mtgc {

struct QuadraticInstanceOptions {
  /// Client Hessians are diag(lambda) with lambda_k uniform in [1 - spread, 1].
  double curvature_spread = 0.0;
  /// Common optimum x*_global. Drawn with norm `center_norm` when absent.
  std::optional<ParamVector> center;
  double center_norm = 1.0;
};

namespace detail {

/// n directions in R^d that sum to zero and have root-mean-square norm 1.
/// A single sibling has nothing to differ from and gets the zero vector.
inline std::vector<ParamVector> balanced_directions(std::size_t n, std::size_t d, KeyedStream& rng) {
  std::vector<ParamVector> dirs(n, ParamVector(d));
  if (n < 2) return dirs;
  for (auto& v : dirs)
    for (std::size_t k = 0; k < d; ++k) v[k] = rng.normal();
  const ParamVector centre = mean_of(dirs);
  double ms = 0.0;
  for (auto& v : dirs) {
    v -= centre;
    ms += v.norm_sq();
  }
  const double rms = std::sqrt(ms / static_cast<double>(n));
  if (rms > 0.0)
    for (auto& v : dirs) v /= rms;
  return dirs;
}

inline ParamVector draw_center(const QuadraticInstanceOptions& opts, std::size_t d, std::uint64_t seed) {
  if (opts.center) {
    if (opts.center->dim() != d) throw ConfigError("instance center has the wrong dimension");
    return *opts.center;
  }
  KeyedStream rng(seed, 0xC0FFEE);
  ParamVector c(d);
  for (std::size_t k = 0; k < d; ++k) c[k] = rng.normal();
  const double n = c.norm();
  if (n > 0.0) c *= opts.center_norm / n;
  return c;
}

inline Task diagonal_quadratic(const ParamVector& optimum, double spread, KeyedStream& rng, ClientId owner) {
  const auto d = static_cast<Eigen::Index>(optimum.dim());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd b(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double lambda = 1.0 - spread * rng.uniform();
    a(k, k) = std::sqrt(lambda);
    b(k) = a(k, k) * optimum[static_cast<std::size_t>(k)];
  }
  return make_quadratic(a, b, owner);
}

}  // namespace detail

/// Heterogeneous quadratics on a two-level topology. Client i in group j
/// minimizes F_i(x) = 0.5 * ||A_i (x - x*_i)||^2 with
///   x*_i = x*_global + group_shift * u_j + client_shift * v_i,
/// where the u_j sum to zero over groups and the v_i sum to zero within each
/// group (both with unit RMS norm). group_shift drives group-level
/// dissimilarity, client_shift drives client-level dissimilarity.
inline std::vector<Task> synth_heterogeneous_quadratics(const Topology& topo, std::size_t d, double group_shift,
                                                        double client_shift, std::uint64_t seed,
                                                        const QuadraticInstanceOptions& opts = {}) {
  if (d == 0) throw ConfigError("dimension must be >= 1");
  const ParamVector center = detail::draw_center(opts, d, seed);
  KeyedStream group_rng(seed, 1);
  const auto u = detail::balanced_directions(topo.n_groups(), d, group_rng);
  std::vector<Task> tasks(topo.n_clients());
  for (std::size_t j = 0; j < topo.n_groups(); ++j) {
    KeyedStream client_rng(seed, 100 + j);
    const auto v = detail::balanced_directions(topo.group_size(j), d, client_rng);
    for (std::size_t i = 0; i < topo.group_size(j); ++i) {
      const ClientId c = topo.group(j)[i];
      ParamVector opt = center;
      opt.axpy(group_shift, u[j]);
      opt.axpy(client_shift, v[i]);
      KeyedStream curv_rng(seed, 1'000'000 + c);
      tasks[c] = detail::diagonal_quadratic(opt, opts.curvature_spread, curv_rng, c);
    }
  }
  return tasks;
}

/// Multi-level analogue: the leaf at path (k_1..k_M) has optimum
/// x*_global + sum_m shifts[m] * dir(k_1..k_{m+1}), with sibling directions
/// balanced at every level. Leaves are numbered in row-major path order.
inline std::vector<Task> synth_multilevel_quadratics(const MultiLevelTopology& topo, std::size_t d,
                                                     const std::vector<double>& shifts, std::uint64_t seed,
                                                     const QuadraticInstanceOptions& opts = {}) {
  topo.validate();
  if (d == 0) throw ConfigError("dimension must be >= 1");
  if (shifts.size() != topo.levels()) throw ConfigError("one shift per level is required");
  const ParamVector center = detail::draw_center(opts, d, seed);

  // offsets[node] at each depth, built breadth-first
  std::vector<ParamVector> offsets{ParamVector(d)};
  std::uint64_t stream = 1;
  for (std::size_t m = 0; m < topo.levels(); ++m) {
    std::vector<ParamVector> next;
    next.reserve(offsets.size() * topo.fanouts[m]);
    for (const auto& parent : offsets) {
      KeyedStream rng(seed, stream++);
      const auto dirs = detail::balanced_directions(topo.fanouts[m], d, rng);
      for (const auto& dir : dirs) {
        ParamVector o = parent;
        o.axpy(shifts[m], dir);
        next.push_back(std::move(o));
      }
    }
    offsets = std::move(next);
  }
  std::vector<Task> tasks;
  tasks.reserve(offsets.size());
  for (std::size_t leaf = 0; leaf < offsets.size(); ++leaf) {
    KeyedStream curv_rng(seed, 1'000'000 + leaf);
    tasks.push_back(detail::diagonal_quadratic(center + offsets[leaf], opts.curvature_spread, curv_rng,
                                               static_cast<ClientId>(leaf)));
  }
  return tasks;
}

}  // namespace mtgc

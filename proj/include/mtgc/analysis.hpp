// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtgc/engine_types.hpp"
#include "mtgc/errors.hpp"
#include "mtgc/objective.hpp"
#include "mtgc/param_vector.hpp"
#include "mtgc/rng.hpp"
#include "mtgc/task.hpp"
#include "mtgc/topology.hpp"
#include "mtgc/trace.hpp"

namespace mtgc {

struct StationarityRecord {
  std::uint64_t t = 0;
  std::uint64_t e = 0;
  double grad_norm_sq = 0.0;
  double loss = 0.0;
  std::optional<double> suboptimality;
};

struct DissimilarityReport {
  double delta1_sq = 0.0;
  std::vector<double> delta2_sq_per_group;
  double delta2_sq_max = 0.0;
};

struct DriftRecord {
  std::uint64_t t = 0;
  double client_drift = 0.0;  // Q_t
  double group_drift = 0.0;   // D_t
};

/// x̂ = (1/N) sum_j x̄_j, summed in ascending group order.
inline ParamVector virtual_global_iterate(const std::vector<ParamVector>& group_models) {
  return mean_of(group_models);
}

inline ParamVector virtual_global_iterate(const RunState& state) {
  std::vector<ParamVector> models;
  models.reserve(state.groups.size());
  for (const auto& g : state.groups) models.push_back(g.model);
  return virtual_global_iterate(models);
}

/// Measured gradient dissimilarity at x:
///   delta1^2   = (1/N) sum_j ||∇f_j(x) - ∇f(x)||^2
///   delta2_j^2 = (1/n_j) sum_{i in C_j} ||∇F_i(x) - ∇f_j(x)||^2
inline DissimilarityReport gradient_dissimilarity(const std::vector<Task>& tasks, const Topology& topo,
                                                  const ParamVector& x) {
  DissimilarityReport rep;
  std::vector<ParamVector> group_grads;
  for (std::size_t j = 0; j < topo.n_groups(); ++j) {
    std::vector<ParamVector> client_grads;
    for (ClientId c : topo.group(j)) client_grads.push_back(full_gradient(tasks.at(c), x));
    const ParamVector gj = mean_of(client_grads);
    double s = 0.0;
    for (const auto& g : client_grads) s += distance_sq(g, gj);
    rep.delta2_sq_per_group.push_back(s / static_cast<double>(client_grads.size()));
    group_grads.push_back(gj);
  }
  const ParamVector g = mean_of(group_grads);
  double s = 0.0;
  for (const auto& gj : group_grads) s += distance_sq(gj, g);
  rep.delta1_sq = s / static_cast<double>(group_grads.size());
  rep.delta2_sq_max = *std::max_element(rep.delta2_sq_per_group.begin(), rep.delta2_sq_per_group.end());
  return rep;
}

/// Realized group drift D_t and client drift Q_t of one global round:
///   D_t = sum_e (1/N) sum_j ||x̂^{t,e} - x̄_j^{t,e}||^2
///   Q_t = sum_e (1/(N H)) sum_j (1/n_j) sum_{i in C_j} sum_h ||x̄_j^{t,e} - x_{i,h}^{t,e}||^2
inline DriftRecord measure_drift(const RoundSnapshots& snap, const Topology& topo) {
  if (snap.empty() || snap.client_models.size() != snap.group_models.size())
    throw UnavailableMetric("drift needs per-step snapshots; enable drift metrics before the run");
  DriftRecord rec;
  rec.t = snap.t;
  const auto n_groups = static_cast<double>(topo.n_groups());
  for (std::size_t e = 0; e < snap.group_models.size(); ++e) {
    const auto& gm = snap.group_models[e];
    const ParamVector xhat = virtual_global_iterate(gm);
    double d = 0.0;
    for (const auto& xj : gm) d += distance_sq(xhat, xj);
    rec.group_drift += d / n_groups;

    double q = 0.0;
    std::size_t steps = 0;
    for (std::size_t j = 0; j < topo.n_groups(); ++j) {
      double qj = 0.0;
      for (ClientId c : topo.group(j)) {
        const auto& hist = snap.client_models[e].at(c);
        steps = hist.size();
        for (const auto& x : hist) qj += distance_sq(gm[j], x);
      }
      q += qj / static_cast<double>(topo.group_size(j));
    }
    if (steps == 0) throw UnavailableMetric("drift snapshots hold no local steps");
    rec.client_drift += q / (n_groups * static_cast<double>(steps));
  }
  return rec;
}

/// Largest step size covered by the convergence guarantee, 1/(40 E H L).
inline double stepsize_bound(double lipschitz, std::size_t E, std::size_t H) {
  if (!(lipschitz > 0.0)) throw ConfigError("smoothness constant must be > 0");
  if (E == 0 || H == 0) throw ConfigError("E and H must be >= 1");
  return 1.0 / (40.0 * static_cast<double>(E) * static_cast<double>(H) * lipschitz);
}

/// Ñ = ((1/N^2) sum_j 1/n_j)^{-1}.
inline double effective_client_count(const Topology& topo) {
  double s = 0.0;
  for (std::size_t j = 0; j < topo.n_groups(); ++j) s += 1.0 / static_cast<double>(topo.group_size(j));
  const auto n = static_cast<double>(topo.n_groups());
  return 1.0 / (s / (n * n));
}

/// Largest ||sum of sibling corrections|| relative to 1 + max ||correction||.
inline double zero_sum_violation(const std::vector<const ParamVector*>& siblings) {
  if (siblings.empty()) return 0.0;
  ParamVector sum(siblings.front()->dim());
  double max_norm = 0.0;
  for (const auto* v : siblings) {
    sum += *v;
    max_norm = std::max(max_norm, v->norm());
  }
  return sum.norm() / (1.0 + max_norm);
}

inline double client_correction_violation(const RunState& s) {
  double worst = 0.0;
  for (const auto& members : s.topology.groups()) {
    std::vector<const ParamVector*> zs;
    for (ClientId c : members) zs.push_back(&s.clients[c].correction);
    worst = std::max(worst, zero_sum_violation(zs));
  }
  return worst;
}

inline double group_correction_violation(const RunState& s) {
  std::vector<const ParamVector*> ys;
  for (const auto& g : s.groups) ys.push_back(&g.correction);
  return zero_sum_violation(ys);
}

struct ScaffoldConfig {
  double gamma = 0.0;
  std::size_t H = 1;
  std::size_t T = 1;
  CorrectionInit init = CorrectionInit::zero;
  double noise_sigma = 0.0;
};

struct ScaffoldTrajectory {
  /// Server model before round 0 and after every round (T + 1 entries).
  std::vector<ParamVector> server_models;
  /// ||sum_i (c_i - c)|| after every round.
  std::vector<double> control_sum;
};

/// Flat SCAFFOLD with control variates c_i, c:
///   x_{i,h+1} = x_{i,h} - gamma (g_i - c_i + c)
///   c_i <- c_i - c + (x̄ - x_{i,H}) / (H gamma),  x̄ <- mean_i x_{i,H},  c <- mean_i c_i.
/// Draws use index (t, 0, h), matching the hierarchical engine with E = 1.
inline ScaffoldTrajectory scaffold_reference(const std::vector<Task>& tasks, const Topology& topo,
                                             const ScaffoldConfig& cfg, std::uint64_t seed,
                                             const ParamVector& x0) {
  if (topo.n_groups() != 1) throw ConfigError("scaffold reference requires a single group");
  if (!(cfg.gamma > 0.0) || cfg.H == 0 || cfg.T == 0) throw ConfigError("invalid scaffold configuration");
  const auto& members = topo.group(0);
  const std::size_t n = members.size();
  const NoiseModel noise = NoiseModel::seeded(seed, cfg.noise_sigma);
  const double h_gamma = static_cast<double>(cfg.H) * cfg.gamma;

  std::vector<ParamVector> c_i(n, ParamVector(x0.dim()));
  if (cfg.init == CorrectionInit::batch_gradient)
    for (std::size_t k = 0; k < n; ++k)
      c_i[k] = stochastic_gradient(tasks.at(members[k]), x0, noise, DrawIndex{0, 0, 0});
  ParamVector c = mean_of(c_i);

  ScaffoldTrajectory out;
  ParamVector server = x0;
  out.server_models.push_back(server);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    std::vector<ParamVector> finals;
    for (std::size_t k = 0; k < n; ++k) {
      const Task& task = tasks.at(members[k]);
      ParamVector x = server;
      for (std::size_t h = 0; h < cfg.H; ++h) {
        const ParamVector g = stochastic_gradient(task, x, noise, DrawIndex{t, 0, h});
        for (std::size_t d = 0; d < x.dim(); ++d) x[d] = x[d] - cfg.gamma * ((g[d] - c_i[k][d]) + c[d]);
      }
      finals.push_back(std::move(x));
    }
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t d = 0; d < server.dim(); ++d)
        c_i[k][d] = c_i[k][d] - c[d] + (server[d] - finals[k][d]) / h_gamma;
    server = mean_of(finals);
    c = mean_of(c_i);
    ParamVector s(x0.dim());
    for (const auto& ci : c_i) s += ci - c;
    out.control_sum.push_back(s.norm());
    out.server_models.push_back(server);
  }
  return out;
}

enum class ThresholdMetric { grad_norm_sq, loss };

inline const char* to_string(ThresholdMetric m) { return m == ThresholdMetric::grad_norm_sq ? "grad" : "loss"; }

inline double metric_value(const MetricRow& r, ThresholdMetric m) {
  return m == ThresholdMetric::grad_norm_sq ? r.grad_norm_sq : r.loss;
}

/// Global rounds elapsed at the first recorded iterate whose metric is
/// <= threshold. A row (t, e) with e > 0 lies inside or at the end of round t
/// and counts as t + 1; the initial row (0, 0) counts as 0.
inline std::uint64_t rounds_elapsed(const MetricRow& r) { return r.t + (r.e > 0 ? 1 : 0); }

inline std::optional<std::uint64_t> rounds_to_threshold(const MetricTrace& trace, double threshold,
                                                        ThresholdMetric metric = ThresholdMetric::grad_norm_sq) {
  for (const auto& r : trace.rows)
    if (metric_value(r, metric) <= threshold) return rounds_elapsed(r);
  return std::nullopt;
}

/// Builds trace rows from engine state.
class MetricRecorder {
 public:
  MetricRecorder(const std::vector<Task>& tasks, const Topology& topo, MetricOptions opts,
                 std::optional<double> f_star)
      : tasks_(tasks), topo_(topo), opts_(opts), f_star_(f_star) {}

  MetricRow record(std::uint64_t t, std::uint64_t e, const ParamVector& xhat, double z_violation,
                   double y_violation, const std::optional<DriftRecord>& drift = std::nullopt) const {
    MetricRow row;
    row.t = t;
    row.e = e;
    row.grad_norm_sq = global_gradient(tasks_, topo_, xhat).norm_sq();
    row.loss = global_loss(tasks_, topo_, xhat);
    if (f_star_) row.subopt = row.loss - *f_star_;
    if (drift) {
      row.client_drift = drift->client_drift;
      row.group_drift = drift->group_drift;
    }
    if (opts_.dissimilarity) {
      const auto rep = gradient_dissimilarity(tasks_, topo_, xhat);
      row.delta1_sq = rep.delta1_sq;
      row.delta2_sq_max = rep.delta2_sq_max;
    }
    row.z_sum_violation = z_violation;
    row.y_sum_violation = y_violation;
    return row;
  }

  static std::optional<double> optimal_value(const std::vector<Task>& tasks, const Topology& topo,
                                             const MetricOptions& opts) {
    if (!opts.suboptimality) return std::nullopt;
    for (const auto& t : tasks)
      if (t.kind != TaskKind::quadratic) return std::nullopt;
    try {
      return global_loss(tasks, topo, closed_form_optimum(tasks, topo));
    } catch (const DegenerateInstance&) {
      return std::nullopt;
    }
  }

 private:
  const std::vector<Task>& tasks_;
  const Topology& topo_;
  MetricOptions opts_;
  std::optional<double> f_star_;
};

}  // namespace mtgc

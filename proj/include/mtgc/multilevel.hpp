// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mtgc/analysis.hpp"
#include "mtgc/engine.hpp"
#include "mtgc/engine_types.hpp"
#include "mtgc/errors.hpp"
#include "mtgc/parallel.hpp"
#include "mtgc/param_vector.hpp"
#include "mtgc/task.hpp"
#include "mtgc/topology.hpp"
#include "mtgc/trace.hpp"

namespace mtgc {

/// (k_1, ..., k_m), 1-based. The empty path is the root aggregator.
struct NodePath {
  std::vector<std::size_t> indices;

  std::size_t level() const noexcept { return indices.size(); }

  void validate(const MultiLevelTopology& topo) const {
    if (indices.size() > topo.levels()) throw ConfigError("node path deeper than the hierarchy");
    for (std::size_t m = 0; m < indices.size(); ++m)
      if (indices[m] < 1 || indices[m] > topo.fanouts[m])
        throw ConfigError("node index " + std::to_string(indices[m]) + " out of range at level " +
                          std::to_string(m + 1));
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t m = 0; m < indices.size(); ++m) {
      if (m) s += '.';
      s += std::to_string(indices[m]);
    }
    return s;
  }

  bool operator==(const NodePath&) const = default;
};

namespace detail {

/// Number of nodes at depth m (depth 0 is the root).
inline std::size_t nodes_at(const MultiLevelTopology& topo, std::size_t m) {
  std::size_t n = 1;
  for (std::size_t l = 0; l < m; ++l) n *= topo.fanouts[l];
  return n;
}

/// Leaves below one depth-m node.
inline std::size_t leaves_under(const MultiLevelTopology& topo, std::size_t m) {
  std::size_t n = 1;
  for (std::size_t l = m; l < topo.levels(); ++l) n *= topo.fanouts[l];
  return n;
}

inline std::size_t node_index(const MultiLevelTopology& topo, const NodePath& p) {
  std::size_t k = 0;
  for (std::size_t m = 0; m < p.level(); ++m) k = k * topo.fanouts[m] + (p.indices[m] - 1);
  return k;
}

inline NodePath node_path(const MultiLevelTopology& topo, std::size_t m, std::size_t index) {
  NodePath p;
  p.indices.assign(m, 0);
  for (std::size_t l = m; l-- > 0;) {
    p.indices[l] = index % topo.fanouts[l] + 1;
    index /= topo.fanouts[l];
  }
  return p;
}

}  // namespace detail

/// ν at every level: nu[m-1][k] for the k-th depth-m node in row-major path order.
struct LevelCorrections {
  std::vector<std::vector<ParamVector>> nu;

  static LevelCorrections zeros(const MultiLevelTopology& topo, std::size_t dim) {
    LevelCorrections c;
    for (std::size_t m = 1; m <= topo.levels(); ++m) c.nu.emplace_back(detail::nodes_at(topo, m), ParamVector(dim));
    return c;
  }

  const ParamVector& at(const MultiLevelTopology& topo, const NodePath& p) const {
    if (p.level() == 0 || p.level() > nu.size()) throw InternalStateError("no correction at path '" + p.to_string() + "'");
    const std::size_t k = detail::node_index(topo, p);
    if (k >= nu[p.level() - 1].size()) throw InternalStateError("no correction at path '" + p.to_string() + "'");
    return nu[p.level() - 1][k];
  }

  bool operator==(const LevelCorrections&) const = default;
};

struct MultiLevelConfig {
  double gamma = 0.0;
  std::uint64_t R = 0;
  /// Level-1 terms are initialized like the two-level y, deeper ones like z.
  CorrectionInit top_init = CorrectionInit::zero;
  CorrectionInit inner_init = CorrectionInit::zero;
  CorrectionRefresh inner_refresh = CorrectionRefresh::carry;
  bool corrections = true;
  double noise_sigma = 0.0;
  std::size_t threads = 1;
  MetricOptions metrics;
  double divergence_bound = 1e12;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be > 0");
    if (noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  }

  /// Settings matching a two-level config with the same correction mode.
  static MultiLevelConfig from_two_level(const TrainConfig& cfg) {
    if (cfg.mode != CorrectionMode::full && cfg.mode != CorrectionMode::none)
      throw ConfigError("multi-level runs support correction modes full and none");
    MultiLevelConfig m;
    m.gamma = cfg.gamma;
    m.R = cfg.T * cfg.E * cfg.H;
    m.top_init = cfg.y_init;
    m.inner_init = cfg.z_init;
    m.inner_refresh = cfg.z_refresh;
    m.corrections = cfg.mode == CorrectionMode::full;
    m.noise_sigma = cfg.noise_sigma;
    m.threads = cfg.threads;
    m.metrics = cfg.metrics;
    m.divergence_bound = cfg.divergence_bound;
    return m;
  }
};

struct MultiLevelState {
  MultiLevelTopology topology;
  std::vector<ParamVector> leaves;  // row-major path order
  LevelCorrections corrections;
  std::uint64_t r = 0;
  std::uint64_t seed = 0;
  /// Deeper levels still awaiting re-initialization after an aggregation at this level (0 = none).
  std::size_t pending_reinit = 0;
  bool operator==(const MultiLevelState&) const = default;
};

struct LevelEvent {
  std::uint64_t r;
  std::size_t level;
  NodePath node;  // the aggregator: a depth (level - 1) node
  bool operator==(const LevelEvent&) const = default;
};

inline void write_event_log(std::ostream& os, const std::vector<LevelEvent>& events) {
  os << "r,level,node_path\n";
  for (const auto& ev : events) os << ev.r << ',' << ev.level << ',' << ev.node.to_string() << '\n';
}

/// Global iteration r as (t, e, h) with t over P_1 and h over P_M.
inline DrawIndex multilevel_draw(const MultiLevelTopology& topo, std::uint64_t r) {
  const std::uint64_t p1 = topo.periods.front();
  const std::uint64_t pm = topo.periods.back();
  return DrawIndex{r / p1, (r % p1) / pm, r % pm};
}

/// x - gamma (g + ν_{k1..kM} + ... + ν_{k1}).
inline ParamVector multilevel_client_step(const MultiLevelTopology& topo, const NodePath& leaf, const ParamVector& model,
                                          const LevelCorrections& corrections, const Task& task, double gamma,
                                          std::uint64_t r, const NoiseModel& noise) {
  if (leaf.level() != topo.levels()) throw InternalStateError("leaf path must have one index per level");
  std::vector<const ParamVector*> path;
  NodePath prefix;
  for (std::size_t m = 0; m < topo.levels(); ++m) {
    prefix.indices.push_back(leaf.indices[m]);
    path.push_back(&corrections.at(topo, prefix));
  }
  const ParamVector g = stochastic_gradient(task, model, noise, multilevel_draw(topo, r));
  ParamVector next = model;
  for (std::size_t k = 0; k < g.dim(); ++k) {
    double acc = g[k];
    for (std::size_t m = path.size(); m-- > 0;) acc += (*path[m])[k];
    next[k] = model[k] - gamma * acc;
  }
  return next;
}

namespace detail {

inline void check_tasks(const MultiLevelTopology& topo, const std::vector<Task>& tasks) {
  if (tasks.size() < topo.n_leaves())
    throw ConfigError("no task for leaf " + std::to_string(tasks.size()) + " (" + std::to_string(topo.n_leaves()) +
                      " leaves)");
  const std::size_t d = tasks.front().param_dim();
  for (std::size_t c = 0; c < topo.n_leaves(); ++c) {
    tasks[c].validate();
    if (tasks[c].param_dim() != d) throw ConfigError("tasks disagree on the parameter dimension");
  }
}

/// Subtree gradient means mean_grad[m][k] for depth m = 0..M (depth M = leaves).
inline std::vector<std::vector<ParamVector>> subtree_gradients(const MultiLevelState& s, const std::vector<Task>& tasks,
                                                               const NoiseModel& noise, DrawIndex idx) {
  const auto& topo = s.topology;
  const std::size_t M = topo.levels();
  std::vector<std::vector<ParamVector>> g(M + 1);
  for (std::size_t c = 0; c < s.leaves.size(); ++c) g[M].push_back(stochastic_gradient(tasks[c], s.leaves[c], noise, idx));
  for (std::size_t m = M; m-- > 0;) {
    const std::size_t fan = topo.fanouts[m];
    for (std::size_t p = 0; p < nodes_at(topo, m); ++p) {
      std::vector<ParamVector> kids(g[m + 1].begin() + static_cast<std::ptrdiff_t>(p * fan),
                                    g[m + 1].begin() + static_cast<std::ptrdiff_t>((p + 1) * fan));
      g[m].push_back(mean_of(kids));
    }
  }
  return g;
}

/// Re-initializes levels first..M (1-based) per policy, at the current leaves.
inline void initialize_levels(MultiLevelState& s, const std::vector<Task>& tasks, const NoiseModel& noise,
                              std::size_t first, CorrectionInit top_init, CorrectionInit inner_init, DrawIndex idx) {
  const auto& topo = s.topology;
  const std::size_t M = topo.levels();
  std::optional<std::vector<std::vector<ParamVector>>> grads;
  for (std::size_t m = first; m <= M; ++m) {
    const CorrectionInit policy = m == 1 ? top_init : inner_init;
    auto& level = s.corrections.nu[m - 1];
    if (policy == CorrectionInit::zero) {
      for (auto& v : level) v = ParamVector(v.dim());
      continue;
    }
    if (!grads) grads = subtree_gradients(s, tasks, noise, idx);
    for (std::size_t k = 0; k < level.size(); ++k) level[k] = (*grads)[m - 1][k / topo.fanouts[m - 1]] - (*grads)[m][k];
  }
}

/// Uniform mean of all leaves, computed as the aggregators would: exact
/// aggregate right after a level-1 aggregation, mean of depth-1 models right
/// after a level-2 aggregation, nested subtree means otherwise.
inline ParamVector multilevel_virtual_global(const MultiLevelState& s) {
  const auto& topo = s.topology;
  const std::size_t M = topo.levels();
  if (s.r % topo.periods.front() == 0) return s.leaves.front();
  std::size_t depth = M;  // deepest depth whose nodes hold uniform subtrees
  for (std::size_t i = M; i >= 1 && s.r % topo.periods[i - 1] == 0; --i) depth = i - 1;
  const std::size_t stride = leaves_under(topo, depth);
  std::vector<ParamVector> cur;
  for (std::size_t k = 0; k < nodes_at(topo, depth); ++k) cur.push_back(s.leaves[k * stride]);
  for (std::size_t m = depth; m-- > 0;) {
    const std::size_t fan = topo.fanouts[m];
    std::vector<ParamVector> up;
    for (std::size_t p = 0; p < cur.size() / fan; ++p)
      up.push_back(mean_of(std::vector<ParamVector>(cur.begin() + static_cast<std::ptrdiff_t>(p * fan),
                                                    cur.begin() + static_cast<std::ptrdiff_t>((p + 1) * fan))));
    cur = std::move(up);
  }
  return cur.front();
}

inline double level_violation(const MultiLevelState& s, std::size_t m) {
  const auto& topo = s.topology;
  const std::size_t fan = topo.fanouts[m - 1];
  const auto& level = s.corrections.nu[m - 1];
  double worst = 0.0;
  for (std::size_t p = 0; p < level.size() / fan; ++p) {
    std::vector<const ParamVector*> sib;
    for (std::size_t c = 0; c < fan; ++c) sib.push_back(&level[p * fan + c]);
    worst = std::max(worst, zero_sum_violation(sib));
  }
  return worst;
}

inline Topology flattened_topology(const MultiLevelTopology& topo) {
  if (topo.levels() == 1) return build_topology(1, topo.fanouts[0]);
  return build_topology(topo.fanouts[0], leaves_under(topo, 1));
}

}  // namespace detail

/// Largest sibling-sum violation over levels 2..M.
inline double inner_correction_violation(const MultiLevelState& s) {
  double worst = 0.0;
  for (std::size_t m = 2; m <= s.topology.levels(); ++m) worst = std::max(worst, detail::level_violation(s, m));
  return worst;
}

/// Sibling-sum violation of the level-1 terms.
inline double top_correction_violation(const MultiLevelState& s) { return detail::level_violation(s, 1); }

inline MultiLevelState init_multilevel(const MultiLevelTopology& topo, const std::vector<Task>& tasks,
                                       const MultiLevelConfig& cfg, std::uint64_t seed,
                                       std::optional<ParamVector> x0 = std::nullopt) {
  topo.validate();
  cfg.validate();
  detail::check_tasks(topo, tasks);
  const std::size_t d = tasks.front().param_dim();
  ParamVector start = x0.value_or(ParamVector(d));
  if (start.dim() != d) throw ConfigError("initial model has the wrong dimension");
  MultiLevelState s;
  s.topology = topo;
  s.seed = seed;
  s.leaves.assign(topo.n_leaves(), start);
  s.corrections = LevelCorrections::zeros(topo, d);
  if (cfg.corrections)
    detail::initialize_levels(s, tasks, NoiseModel::seeded(seed, cfg.noise_sigma), 1, cfg.top_init, cfg.inner_init,
                              DrawIndex{0, 0, 0});
  return s;
}

/// Level-i aggregation after iteration r: subtree means, ν update
/// ν += (child model - aggregate) / (gamma P_i), dissemination to the subtree.
/// Returns one event per level-i aggregator.
inline std::vector<LevelEvent> level_aggregate_and_correct(MultiLevelState& s, std::size_t level, std::uint64_t r,
                                                           const MultiLevelConfig& cfg) {
  const auto& topo = s.topology;
  if (level < 1 || level > topo.levels()) throw SchedulingError("no level " + std::to_string(level));
  const std::uint64_t period = topo.periods[level - 1];
  if ((r + 1) % period != 0)
    throw SchedulingError("level " + std::to_string(level) + " (P=" + std::to_string(period) +
                          ") cannot aggregate after iteration " + std::to_string(r));
  const std::size_t fan = topo.fanouts[level - 1];
  const std::size_t child_leaves = detail::leaves_under(topo, level);
  const double p_gamma = static_cast<double>(period) * cfg.gamma;
  auto& nu = s.corrections.nu[level - 1];
  std::vector<LevelEvent> events;
  for (std::size_t p = 0; p < detail::nodes_at(topo, level - 1); ++p) {
    const std::size_t first_leaf = p * fan * child_leaves;
    std::vector<ParamVector> kids;
    for (std::size_t c = 0; c < fan; ++c) kids.push_back(s.leaves[first_leaf + c * child_leaves]);
    const ParamVector agg = mean_of(kids);
    if (cfg.corrections)
      for (std::size_t c = 0; c < fan; ++c) {
        ParamVector& v = nu[p * fan + c];
        for (std::size_t k = 0; k < v.dim(); ++k) v[k] = v[k] + (kids[c][k] - agg[k]) / p_gamma;
      }
    for (std::size_t l = 0; l < fan * child_leaves; ++l) s.leaves[first_leaf + l] = agg;
    events.push_back(LevelEvent{r, level, detail::node_path(topo, level - 1, p)});
  }
  if (cfg.corrections && cfg.inner_refresh == CorrectionRefresh::every_round && level < topo.levels())
    s.pending_reinit = s.pending_reinit == 0 ? level : std::min(s.pending_reinit, level);
  return events;
}

struct MultiLevelResult {
  ParamVector final_model;
  MetricTrace trace;
  std::vector<LevelEvent> events;
  MultiLevelState state;
  std::optional<DivergenceInfo> divergence;

  bool ok() const noexcept { return !divergence; }
};

/// Iterations state.r .. cfg.R-1. After each step levels M, ..., 1 aggregate
/// while their period divides r+1. Rows are recorded after every level-2
/// aggregation (level 1 when M = 1), tagged (t, e) like the two-level engine.
inline MultiLevelResult continue_multilevel(MultiLevelState state, const std::vector<Task>& tasks,
                                            const MultiLevelConfig& cfg) {
  cfg.validate();
  state.topology.validate();
  detail::check_tasks(state.topology, tasks);
  const MultiLevelTopology& topo = state.topology;
  const std::size_t M = topo.levels();
  const Topology flat = detail::flattened_topology(topo);
  const NoiseModel noise = NoiseModel::seeded(state.seed, cfg.noise_sigma);
  const MetricRecorder recorder(tasks, flat, cfg.metrics, MetricRecorder::optimal_value(tasks, flat, cfg.metrics));
  const std::size_t row_level = M == 1 ? 1 : 2;
  const std::uint64_t p1 = topo.periods.front();
  const std::uint64_t p_row = topo.periods[row_level - 1];
  std::vector<NodePath> leaf_paths;
  for (std::size_t c = 0; c < topo.n_leaves(); ++c) leaf_paths.push_back(detail::node_path(topo, M, c));
  WorkerPool pool(cfg.threads);

  MultiLevelResult result;
  if (state.r == 0)
    result.trace.rows.push_back(recorder.record(0, 0, detail::multilevel_virtual_global(state),
                                                inner_correction_violation(state), top_correction_violation(state)));
  try {
    for (std::uint64_t r = state.r; r < cfg.R; ++r) {
      if (state.pending_reinit) {
        detail::initialize_levels(state, tasks, noise, state.pending_reinit + 1, cfg.top_init, cfg.inner_init,
                                  multilevel_draw(topo, r));
        state.pending_reinit = 0;
      }
      const DrawIndex idx = multilevel_draw(topo, r);
      pool.parallel_for(state.leaves.size(), [&](std::size_t c) {
        ParamVector next =
            multilevel_client_step(topo, leaf_paths[c], state.leaves[c], state.corrections, tasks[c], cfg.gamma, r, noise);
        detail::guard(next, cfg.divergence_bound, idx, static_cast<std::int64_t>(c));
        state.leaves[c] = std::move(next);
      });
      state.r = r + 1;
      bool row_due = false;
      for (std::size_t i = M; i >= 1; --i) {
        if ((r + 1) % topo.periods[i - 1] != 0) break;
        auto ev = level_aggregate_and_correct(state, i, r, cfg);
        result.events.insert(result.events.end(), ev.begin(), ev.end());
        if (i == row_level) row_due = true;
      }
      if (row_due)
        result.trace.rows.push_back(recorder.record(r / p1, (r % p1 + 1) / p_row, detail::multilevel_virtual_global(state),
                                                    inner_correction_violation(state),
                                                    top_correction_violation(state)));
    }
  } catch (const NumericalDivergence& err) {
    result.divergence = DivergenceInfo{err.what(), err.t(), err.e(), err.h(), err.client()};
  }
  result.final_model = detail::multilevel_virtual_global(state);
  result.state = std::move(state);
  return result;
}

inline MultiLevelResult run_multilevel(const MultiLevelTopology& topo, const std::vector<Task>& tasks,
                                       const MultiLevelConfig& cfg, std::uint64_t seed,
                                       std::optional<ParamVector> x0 = std::nullopt) {
  return continue_multilevel(init_multilevel(topo, tasks, cfg, seed, std::move(x0)), tasks, cfg);
}

}  // namespace mtgc

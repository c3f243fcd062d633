// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtgc/analysis.hpp"
#include "mtgc/engine_types.hpp"
#include "mtgc/errors.hpp"
#include "mtgc/parallel.hpp"
#include "mtgc/param_vector.hpp"
#include "mtgc/task.hpp"
#include "mtgc/topology.hpp"
#include "mtgc/trace.hpp"

namespace mtgc {

struct DivergenceInfo {
  std::string message;
  std::uint64_t t = 0, e = 0, h = 0;
  std::int64_t client = -1;
};

struct RunResult {
  GlobalState final_state;
  MetricTrace trace;
  RunState state;
  std::optional<DivergenceInfo> divergence;

  bool ok() const noexcept { return !divergence; }
};

namespace detail {

inline void check_tasks(const Topology& topo, const std::vector<Task>& tasks) {
  if (tasks.size() < topo.n_clients())
    throw ConfigError("no task for client " + std::to_string(tasks.size()) + " (" + std::to_string(topo.n_clients()) +
                      " clients)");
  const std::size_t d = tasks.front().param_dim();
  for (std::size_t c = 0; c < topo.n_clients(); ++c) {
    tasks[c].validate();
    if (tasks[c].param_dim() != d) throw ConfigError("tasks disagree on the parameter dimension");
  }
}

inline void guard(const ParamVector& x, double bound, DrawIndex at, std::int64_t client) {
  if (!x.all_finite()) throw NumericalDivergence("non-finite model entry", at.t, at.e, at.h, client);
  if (x.norm() > bound) throw NumericalDivergence("model norm exceeded the divergence bound", at.t, at.e, at.h, client);
}

/// Stochastic gradients at the current client models, averaged per group.
struct BatchGradients {
  std::vector<ParamVector> client;  // by client id
  std::vector<ParamVector> group;   // (1/n_j) sum_{i in C_j} g_i
  ParamVector global;               // (1/N) sum_j group[j]
};

inline BatchGradients batch_gradients(const RunState& s, const std::vector<Task>& tasks, const NoiseModel& noise,
                                      DrawIndex idx) {
  BatchGradients b;
  for (std::size_t c = 0; c < s.clients.size(); ++c)
    b.client.push_back(stochastic_gradient(tasks[c], s.clients[c].model, noise, idx));
  for (const auto& members : s.topology.groups()) {
    std::vector<ParamVector> gs;
    for (ClientId c : members) gs.push_back(b.client[c]);
    b.group.push_back(mean_of(gs));
  }
  b.global = mean_of(b.group);
  return b;
}

}  // namespace detail

/// Fresh run state: every model at x0 (zero when absent) and corrections per
/// config. Batch-gradient initialization evaluates draw (0, 0, 0):
///   y_j = (1/N) sum_j' ḡ_j' - ḡ_j,   z_i = ḡ_j - g_i.
inline RunState init_run(const Topology& topo, const std::vector<Task>& tasks, const TrainConfig& cfg,
                         std::uint64_t seed, std::optional<ParamVector> x0 = std::nullopt) {
  cfg.validate();
  detail::check_tasks(topo, tasks);
  const std::size_t d = tasks.front().param_dim();
  ParamVector start = x0.value_or(ParamVector(d));
  if (start.dim() != d) throw ConfigError("initial model has the wrong dimension");

  RunState s;
  s.topology = topo;
  s.seed = seed;
  s.global.model = start;
  s.clients.assign(topo.n_clients(), ClientState{start, ParamVector(d), start});
  s.groups.assign(topo.n_groups(), GroupState{start, ParamVector(d)});

  const bool need_batch = (cfg.group_corrections() && cfg.y_init == CorrectionInit::batch_gradient) ||
                          (cfg.client_corrections() && cfg.z_init == CorrectionInit::batch_gradient);
  if (need_batch) {
    const NoiseModel noise = NoiseModel::seeded(seed, cfg.noise_sigma);
    const auto b = detail::batch_gradients(s, tasks, noise, DrawIndex{0, 0, 0});
    if (cfg.group_corrections() && cfg.y_init == CorrectionInit::batch_gradient)
      for (std::size_t j = 0; j < topo.n_groups(); ++j) s.groups[j].correction = b.global - b.group[j];
    if (cfg.client_corrections() && cfg.z_init == CorrectionInit::batch_gradient)
      for (std::size_t j = 0; j < topo.n_groups(); ++j)
        for (ClientId c : topo.group(j)) s.clients[c].correction = b.group[j] - b.client[c];
  }
  return s;
}

/// One corrected local step x <- x - gamma (g + z + y). Disabled corrections
/// contribute zero.
inline ClientState local_update(const ClientState& client, const GroupState& group, const Task& task,
                                const TrainConfig& cfg, const NoiseModel& noise, DrawIndex idx,
                                std::int64_t client_id = -1) {
  const ParamVector g = stochastic_gradient(task, client.model, noise, idx);
  const bool use_z = cfg.client_corrections();
  const bool use_y = cfg.group_corrections();
  ClientState next = client;
  for (std::size_t k = 0; k < g.dim(); ++k) {
    const double z = use_z ? client.correction[k] : 0.0;
    const double y = use_y ? group.correction[k] : 0.0;
    next.model[k] = client.model[k] - cfg.gamma * ((g[k] + z) + y);
  }
  detail::guard(next.model, cfg.divergence_bound, idx, client_id);
  return next;
}

namespace detail {

inline void advance_client(RunState& s, ClientId c, std::size_t group, const Task& task, const TrainConfig& cfg,
                           const NoiseModel& noise, std::uint64_t t, std::uint64_t e,
                           std::vector<ParamVector>* history) {
  ClientState& client = s.clients[c];
  client.phase_start = s.groups[group].model;
  client.model = client.phase_start;
  for (std::size_t h = 0; h < cfg.H; ++h) {
    if (history) history->push_back(client.model);
    client = local_update(client, s.groups[group], task, cfg, noise, DrawIndex{t, e, h}, c);
  }
}

}  // namespace detail

/// H local steps for every client of group j starting from the group model,
/// with draws (t, e, 0..H-1).
inline void run_local_phase(RunState& s, std::size_t j, const std::vector<Task>& tasks, const TrainConfig& cfg,
                            const NoiseModel& noise, std::uint64_t t, std::uint64_t e, WorkerPool* pool = nullptr) {
  const auto& members = s.topology.group(j);
  auto body = [&](std::size_t k) {
    detail::advance_client(s, members[k], j, tasks.at(members[k]), cfg, noise, t, e, nullptr);
  };
  if (pool)
    pool->parallel_for(members.size(), body);
  else
    for (std::size_t k = 0; k < members.size(); ++k) body(k);
}

/// (1/n_j) sum of client models, in ascending client id order.
inline ParamVector group_aggregate(const RunState& s, std::size_t j) {
  std::vector<ParamVector> models;
  for (ClientId c : s.topology.group(j)) models.push_back(s.clients[c].model);
  return mean_of(models);
}

/// z + (x_{i,H} - x̄_j) / (H gamma); unchanged (zero) when client corrections are off.
inline ParamVector update_client_correction(const ClientState& client, const ParamVector& group_model,
                                            const TrainConfig& cfg) {
  if (!cfg.client_corrections()) return client.correction;
  const double h_gamma = static_cast<double>(cfg.H) * cfg.gamma;
  if (!(h_gamma > 0.0)) throw ConfigError("H * gamma must be > 0");
  ParamVector z = client.correction;
  for (std::size_t k = 0; k < z.dim(); ++k) z[k] = z[k] + (client.model[k] - group_model[k]) / h_gamma;
  return z;
}

/// y + (x̄_j - x̄) / (H E gamma); unchanged (zero) when group corrections are off.
inline ParamVector update_group_correction(const GroupState& group, const ParamVector& global_model,
                                           const TrainConfig& cfg) {
  if (!cfg.group_corrections()) return group.correction;
  const double he_gamma = static_cast<double>(cfg.H * cfg.E) * cfg.gamma;
  if (!(he_gamma > 0.0)) throw ConfigError("H * E * gamma must be > 0");
  ParamVector y = group.correction;
  for (std::size_t k = 0; k < y.dim(); ++k) y[k] = y[k] + (group.model[k] - global_model[k]) / he_gamma;
  return y;
}

/// Runs global rounds state.global.clock.t .. cfg.T-1 on an existing state.
/// Divergence stops the run and is reported in the result together with the
/// trace recorded so far.
inline RunResult continue_training(RunState state, const std::vector<Task>& tasks, const TrainConfig& cfg,
                                   const TrainingHooks& hooks = {}) {
  cfg.validate();
  detail::check_tasks(state.topology, tasks);
  const Topology& topo = state.topology;
  const NoiseModel noise = NoiseModel::seeded(state.seed, cfg.noise_sigma);
  const MetricRecorder recorder(tasks, topo, cfg.metrics, MetricRecorder::optimal_value(tasks, topo, cfg.metrics));
  const auto group_of = topo.group_of_clients();
  WorkerPool pool(cfg.threads);

  RunResult result;
  auto& rows = result.trace.rows;
  if (state.global.clock.t == 0)
    rows.push_back(recorder.record(0, 0, state.global.model, client_correction_violation(state),
                                   group_correction_violation(state)));

  try {
    for (std::uint64_t t = state.global.clock.t; t < cfg.T; ++t) {
      for (auto& g : state.groups) g.model = state.global.model;

      // round 0 corrections come from init_run
      if (t > 0 && cfg.client_corrections() && cfg.z_refresh == CorrectionRefresh::every_round) {
        for (auto& c : state.clients) c.model = state.global.model;
        if (cfg.z_init == CorrectionInit::batch_gradient) {
          const auto b = detail::batch_gradients(state, tasks, noise, DrawIndex{t, 0, 0});
          for (std::size_t c = 0; c < state.clients.size(); ++c)
            state.clients[c].correction = b.group[group_of[c]] - b.client[c];
        } else {
          for (auto& c : state.clients) c.correction = ParamVector(c.correction.dim());
        }
      }

      RoundSnapshots snap;
      snap.t = t;
      for (std::uint64_t e = 0; e < cfg.E; ++e) {
        state.global.clock = {t, e, 0};
        std::vector<std::vector<ParamVector>> history;
        if (cfg.metrics.drift) {
          std::vector<ParamVector> gm;
          for (const auto& g : state.groups) gm.push_back(g.model);
          snap.group_models.push_back(std::move(gm));
          history.assign(state.clients.size(), {});
        }
        pool.parallel_for(state.clients.size(), [&](std::size_t c) {
          detail::advance_client(state, static_cast<ClientId>(c), group_of[c], tasks[c], cfg, noise, t, e,
                                 cfg.metrics.drift ? &history[c] : nullptr);
        });
        if (cfg.metrics.drift) snap.client_models.push_back(std::move(history));

        for (std::size_t j = 0; j < topo.n_groups(); ++j) {
          state.groups[j].model = group_aggregate(state, j);
          for (ClientId c : topo.group(j))
            state.clients[c].correction = update_client_correction(state.clients[c], state.groups[j].model, cfg);
        }
        if (e + 1 < cfg.E) {
          const ParamVector xhat = virtual_global_iterate(state);
          rows.push_back(recorder.record(t, e + 1, xhat, client_correction_violation(state),
                                         group_correction_violation(state)));
          if (hooks.on_group_round) hooks.on_group_round(GroupRoundEvent{t, e + 1, state, xhat});
        }
      }

      const ParamVector global = virtual_global_iterate(state);
      for (auto& g : state.groups) g.correction = update_group_correction(g, global, cfg);
      state.global.model = global;
      state.global.clock = {t + 1, 0, 0};

      std::optional<DriftRecord> drift;
      if (cfg.metrics.drift) drift = measure_drift(snap, topo);
      rows.push_back(recorder.record(t, cfg.E, global, client_correction_violation(state),
                                     group_correction_violation(state), drift));
      if (hooks.on_group_round) hooks.on_group_round(GroupRoundEvent{t, cfg.E, state, global});
      if (hooks.on_global_round)
        hooks.on_global_round(GlobalRoundEvent{t, state, cfg.metrics.drift ? &snap : nullptr});
    }
  } catch (const NumericalDivergence& err) {
    result.divergence = DivergenceInfo{err.what(), err.t(), err.e(), err.h(), err.client()};
  }
  result.final_state = state.global;
  result.state = std::move(state);
  return result;
}

/// Algorithm driver: T global rounds of E group rounds of H local steps.
inline RunResult run_training(const Topology& topo, const std::vector<Task>& tasks, const TrainConfig& cfg,
                              std::uint64_t seed, const TrainingHooks& hooks = {},
                              std::optional<ParamVector> x0 = std::nullopt) {
  return continue_training(init_run(topo, tasks, cfg, seed, std::move(x0)), tasks, cfg, hooks);
}

}  // namespace mtgc

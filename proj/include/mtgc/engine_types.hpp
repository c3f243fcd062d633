// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtgc/errors.hpp"
#include "mtgc/param_vector.hpp"
#include "mtgc/task.hpp"
#include "mtgc/topology.hpp"

namespace mtgc {

enum class CorrectionInit { zero, batch_gradient };
enum class CorrectionRefresh { carry, every_round };
enum class CorrectionMode { none, client_only, group_only, full };

inline const char* to_string(CorrectionInit v) { return v == CorrectionInit::zero ? "zero" : "batch-gradient"; }
inline const char* to_string(CorrectionRefresh v) { return v == CorrectionRefresh::carry ? "carry" : "every-round"; }
inline const char* to_string(CorrectionMode v) {
  switch (v) {
    case CorrectionMode::none: return "none";
    case CorrectionMode::client_only: return "client-only";
    case CorrectionMode::group_only: return "group-only";
    case CorrectionMode::full: return "full";
  }
  return "?";
}

/// Which optional metrics the run records.
struct MetricOptions {
  bool suboptimality = true;  // quadratic tasks only
  bool drift = false;         // Q_t, D_t; retains per-step snapshots of a round
  bool dissimilarity = false; // delta1^2, delta2^2 at every recorded iterate
  bool operator==(const MetricOptions&) const = default;
};

struct TrainConfig {
  double gamma = 0.0;
  std::size_t T = 1;
  std::size_t E = 1;
  std::size_t H = 1;
  CorrectionInit z_init = CorrectionInit::zero;
  CorrectionRefresh z_refresh = CorrectionRefresh::carry;
  CorrectionInit y_init = CorrectionInit::zero;
  CorrectionMode mode = CorrectionMode::full;
  /// Standard deviation of additive gradient noise (0 disables it).
  double noise_sigma = 0.0;
  std::size_t threads = 1;
  MetricOptions metrics;
  double divergence_bound = 1e12;

  bool client_corrections() const noexcept {
    return mode == CorrectionMode::full || mode == CorrectionMode::client_only;
  }
  bool group_corrections() const noexcept {
    return mode == CorrectionMode::full || mode == CorrectionMode::group_only;
  }

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be > 0");
    if (T == 0 || E == 0 || H == 0) throw ConfigError("T, E and H must be >= 1");
    if (noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

/// x_{i,h}, z_i and x_{i,0} of one client.
struct ClientState {
  ParamVector model;
  ParamVector correction;
  ParamVector phase_start;
  bool operator==(const ClientState&) const = default;
};

/// Group model and group-global correction y_j.
struct GroupState {
  ParamVector model;
  ParamVector correction;
  bool operator==(const GroupState&) const = default;
};

struct RoundClock {
  std::uint64_t t = 0;
  std::uint64_t e = 0;
  std::uint64_t h = 0;
  bool operator==(const RoundClock&) const = default;
};

struct GlobalState {
  ParamVector model;
  RoundClock clock;
  bool operator==(const GlobalState&) const = default;
};

/// Complete mutable state of a two-level run.
struct RunState {
  Topology topology;
  std::vector<ClientState> clients;  // indexed by client id
  std::vector<GroupState> groups;
  GlobalState global;
  std::uint64_t seed = 0;
  bool operator==(const RunState&) const = default;
};

/// Per-step models of one global round, kept only when drift metrics are on.
struct RoundSnapshots {
  std::uint64_t t = 0;
  /// group_models[e][j] = x̄_j^{t,e} at the start of group round e.
  std::vector<std::vector<ParamVector>> group_models;
  /// client_models[e][i][h] = x_{i,h}^{t,e}, h = 0..H-1.
  std::vector<std::vector<std::vector<ParamVector>>> client_models;

  bool empty() const noexcept { return group_models.empty(); }
};

/// Emitted after every group aggregation and correction update.
struct GroupRoundEvent {
  std::uint64_t t;
  std::uint64_t e;  // 1..E, number of completed group rounds in round t
  const RunState& state;
  const ParamVector& virtual_global;
};

/// Emitted after every global aggregation; `state.global.clock.t` already
/// points at the next round.
struct GlobalRoundEvent {
  std::uint64_t t;  // round just completed
  const RunState& state;
  const RoundSnapshots* snapshots;  // null unless drift metrics are enabled
};

struct TrainingHooks {
  std::function<void(const GroupRoundEvent&)> on_group_round;
  std::function<void(const GlobalRoundEvent&)> on_global_round;
};

}  // namespace mtgc

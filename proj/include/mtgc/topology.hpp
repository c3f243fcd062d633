// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "mtgc/errors.hpp"
#include "mtgc/task.hpp"

namespace mtgc {

/// Two-level hierarchy: N groups, each a non-empty set of client ids.
/// Client ids are dense and numbered group by group in ascending order.
class Topology {
 public:
  Topology() = default;
  explicit Topology(std::vector<std::vector<ClientId>> groups) : groups_(std::move(groups)) { validate(); }

  std::size_t n_groups() const noexcept { return groups_.size(); }
  std::size_t n_clients() const noexcept {
    std::size_t n = 0;
    for (const auto& g : groups_) n += g.size();
    return n;
  }
  const std::vector<ClientId>& group(std::size_t j) const { return groups_.at(j); }
  const std::vector<std::vector<ClientId>>& groups() const noexcept { return groups_; }
  std::size_t group_size(std::size_t j) const { return groups_.at(j).size(); }

  /// Group index of every client, indexed by client id.
  std::vector<std::size_t> group_of_clients() const {
    std::vector<std::size_t> out(n_clients());
    for (std::size_t j = 0; j < groups_.size(); ++j)
      for (ClientId c : groups_[j]) out[c] = j;
    return out;
  }

  bool operator==(const Topology&) const = default;

 private:
  void validate() const {
    if (groups_.empty()) throw ConfigError("topology needs at least one group");
    const std::size_t total = n_clients();
    std::vector<bool> seen(total, false);
    for (std::size_t j = 0; j < groups_.size(); ++j) {
      if (groups_[j].empty()) throw ConfigError("group " + std::to_string(j) + " has no clients");
      for (ClientId c : groups_[j]) {
        if (c >= total || seen[c])
          throw ConfigError("client ids must be dense and disjoint across groups (id " + std::to_string(c) + ")");
        seen[c] = true;
      }
    }
  }

  std::vector<std::vector<ClientId>> groups_;
};

inline Topology build_topology(std::size_t n_groups, const std::vector<std::size_t>& clients_per_group) {
  if (n_groups == 0) throw ConfigError("n_groups must be >= 1");
  if (clients_per_group.size() != n_groups)
    throw ConfigError("clients_per_group lists " + std::to_string(clients_per_group.size()) + " sizes for " +
                      std::to_string(n_groups) + " groups");
  std::vector<std::vector<ClientId>> groups(n_groups);
  ClientId next = 0;
  for (std::size_t j = 0; j < n_groups; ++j) {
    if (clients_per_group[j] == 0) throw ConfigError("group " + std::to_string(j) + " has size 0");
    for (std::size_t i = 0; i < clients_per_group[j]; ++i) groups[j].push_back(next++);
  }
  return Topology(std::move(groups));
}

inline Topology build_topology(std::size_t n_groups, std::size_t clients_each) {
  return build_topology(n_groups, std::vector<std::size_t>(n_groups, clients_each));
}

/// Regular M-level tree. Level 1 is the global server; leaves (clients) are
/// addressed by full paths (k_1, ..., k_M). periods[m] is the number of local
/// iterations between aggregations of level m+1; each period strictly
/// exceeds and is divisible by the next.
struct MultiLevelTopology {
  std::vector<std::size_t> fanouts;
  std::vector<std::size_t> periods;

  std::size_t levels() const noexcept { return fanouts.size(); }
  std::size_t n_leaves() const {
    return std::accumulate(fanouts.begin(), fanouts.end(), std::size_t{1}, std::multiplies<>());
  }

  void validate() const {
    if (fanouts.empty()) throw ConfigError("multi-level topology needs at least one level");
    if (periods.size() != fanouts.size())
      throw ConfigError("periods and fanouts must have the same number of levels");
    for (std::size_t m = 0; m < fanouts.size(); ++m) {
      if (fanouts[m] == 0) throw ConfigError("fanout of level " + std::to_string(m + 1) + " is 0");
      if (periods[m] == 0) throw ConfigError("period of level " + std::to_string(m + 1) + " is 0");
    }
    for (std::size_t m = 0; m + 1 < periods.size(); ++m) {
      if (periods[m] <= periods[m + 1] || periods[m] % periods[m + 1] != 0)
        throw ConfigError("period P_" + std::to_string(m + 2) + "=" + std::to_string(periods[m + 1]) +
                          " must be smaller than and divide P_" + std::to_string(m + 1) + "=" +
                          std::to_string(periods[m]));
    }
  }

  /// The equivalent two-level grouping when M = 2 (groups = level-1 fanout).
  Topology as_two_level() const {
    if (levels() != 2) throw ConfigError("as_two_level requires exactly two levels");
    return build_topology(fanouts[0], fanouts[1]);
  }

  bool operator==(const MultiLevelTopology&) const = default;
};

}  // namespace mtgc

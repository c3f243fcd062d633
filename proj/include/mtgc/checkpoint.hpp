// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtgc/engine_types.hpp"
#include "mtgc/errors.hpp"

namespace mtgc {

inline constexpr int kCheckpointVersion = 1;

// Field order of a checkpoint document:
//   version, seed, clock {t, e, h}, topology [[client ids] per group],
//   global_model, groups [{model, correction}], clients [{model, correction, phase_start}]
// Doubles are written in shortest round-trip form.

namespace detail {

inline nlohmann::ordered_json to_json(const ParamVector& v) { return nlohmann::ordered_json(v.values()); }

inline ParamVector param_from_json(const nlohmann::ordered_json& j, std::size_t dim, const char* what) {
  auto vals = j.get<std::vector<double>>();
  if (vals.size() != dim) throw IoError(std::string("checkpoint field '") + what + "' has the wrong dimension");
  return ParamVector(std::move(vals));
}

}  // namespace detail

inline std::string checkpoint_json(const RunState& s) {
  nlohmann::ordered_json j;
  j["version"] = kCheckpointVersion;
  j["seed"] = s.seed;
  j["clock"] = {{"t", s.global.clock.t}, {"e", s.global.clock.e}, {"h", s.global.clock.h}};
  j["topology"] = s.topology.groups();
  j["global_model"] = detail::to_json(s.global.model);
  auto& groups = j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : s.groups)
    groups.push_back({{"model", detail::to_json(g.model)}, {"correction", detail::to_json(g.correction)}});
  auto& clients = j["clients"] = nlohmann::ordered_json::array();
  for (const auto& c : s.clients)
    clients.push_back({{"model", detail::to_json(c.model)},
                       {"correction", detail::to_json(c.correction)},
                       {"phase_start", detail::to_json(c.phase_start)}});
  return j.dump(1);
}

inline RunState parse_checkpoint(const std::string& text) {
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    RunState s;
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& clock = j.at("clock");
    s.global.clock = {clock.at("t").get<std::uint64_t>(), clock.at("e").get<std::uint64_t>(),
                      clock.at("h").get<std::uint64_t>()};
    s.topology = Topology(j.at("topology").get<std::vector<std::vector<ClientId>>>());
    const auto& gm = j.at("global_model");
    const std::size_t d = gm.size();
    s.global.model = detail::param_from_json(gm, d, "global_model");
    const auto& groups = j.at("groups");
    const auto& clients = j.at("clients");
    if (groups.size() != s.topology.n_groups() || clients.size() != s.topology.n_clients())
      throw IoError("checkpoint state does not match its topology");
    for (const auto& g : groups)
      s.groups.push_back(GroupState{detail::param_from_json(g.at("model"), d, "model"),
                                    detail::param_from_json(g.at("correction"), d, "correction")});
    for (const auto& c : clients)
      s.clients.push_back(ClientState{detail::param_from_json(c.at("model"), d, "model"),
                                      detail::param_from_json(c.at("correction"), d, "correction"),
                                      detail::param_from_json(c.at("phase_start"), d, "phase_start")});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const RunState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_json(s);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline RunState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace mtgc

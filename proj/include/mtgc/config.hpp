// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mtgc/analysis.hpp"
#include "mtgc/engine_types.hpp"
#include "mtgc/errors.hpp"
#include "mtgc/partition.hpp"
#include "mtgc/topology.hpp"

namespace mtgc {

/// quadratic: synthetic heterogeneous quadratics. The others read a labeled CSV
/// and partition it over the clients.
enum class ModelKind { quadratic, least_squares, logistic, mlp };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::quadratic: return "quadratic";
    case ModelKind::least_squares: return "least-squares";
    case ModelKind::logistic: return "logistic";
    case ModelKind::mlp: return "mlp";
  }
  return "?";
}

struct TaskSpec {
  ModelKind kind = ModelKind::quadratic;
  std::size_t dimension = 10;
  std::string dataset;
  double group_shift = 1.0;
  double client_shift = 1.0;
  /// Multi-level instances: one shift per level (empty means 1 at every level).
  std::vector<double> level_shifts;
  double curvature_spread = 0.0;
  double center_norm = 1.0;
  std::uint64_t instance_seed = 0;
  std::size_t hidden = 8;
  std::size_t minibatch = 0;
  bool operator==(const TaskSpec&) const = default;
};

/// Two-level: `groups` groups of `clients_per_group` clients. Multi-level when
/// `fanouts` is non-empty; then `periods` holds P_1 > ... > P_M.
struct TopologySpec {
  std::size_t groups = 1;
  std::size_t clients_per_group = 1;
  std::vector<std::size_t> fanouts;
  std::vector<std::size_t> periods;

  bool multilevel() const noexcept { return !fanouts.empty(); }
  MultiLevelTopology multilevel_topology() const { return MultiLevelTopology{fanouts, periods}; }
  Topology two_level() const { return build_topology(groups, clients_per_group); }
  bool operator==(const TopologySpec&) const = default;
};

struct OutputSpec {
  std::string dir = "out";
  std::vector<std::uint64_t> seeds{0};
  double threshold = 1e-8;
  ThresholdMetric metric = ThresholdMetric::grad_norm_sq;
  bool operator==(const OutputSpec&) const = default;
};

struct ExperimentSpec {
  TaskSpec task;
  TopologySpec topology;
  PartitionPlan partition;
  TrainConfig train;
  /// gamma = 1 / (40 E H L) resolved at run time.
  bool gamma_auto = false;
  OutputSpec output;
  bool operator==(const ExperimentSpec&) const = default;
};

inline const std::vector<std::string>& sweep_axis_names() {
  static const std::vector<std::string> names{"E", "H", "N", "correction_mode", "regime", "group_shift", "client_shift"};
  return names;
}

struct SweepAxis {
  std::string name;
  std::vector<std::string> values;
  bool operator==(const SweepAxis&) const = default;
};

struct SweepSpec {
  ExperimentSpec base;
  std::vector<SweepAxis> axes;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.values.size();
    return n;
  }
  bool operator==(const SweepSpec&) const = default;
};

struct ConfigIssue {
  std::size_t line = 0;
  std::size_t column = 0;
  std::string message;

  std::string to_string() const {
    return "line " + std::to_string(line) + ", col " + std::to_string(column) + ": " + message;
  }
};

/// All problems found in a config document.
class ConfigParseError : public ConfigError {
 public:
  explicit ConfigParseError(std::vector<ConfigIssue> issues)
      : ConfigError(join(issues)), issues_(std::move(issues)) {}
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<ConfigIssue>& issues) {
    std::string s;
    for (const auto& i : issues) {
      if (!s.empty()) s += '\n';
      s += i.to_string();
    }
    return s;
  }
  std::vector<ConfigIssue> issues_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<std::uint64_t> parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string str(s);
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (end != str.c_str() + str.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string list_text(const std::vector<T>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) s += ", ";
    if constexpr (std::is_floating_point_v<T>)
      s += real_text(v[k]);
    else
      s += std::to_string(v[k]);
  }
  return s;
}

template <class E>
std::optional<E> parse_enum(std::string_view s, std::initializer_list<E> values) {
  for (E v : values)
    if (s == to_string(v)) return v;
  return std::nullopt;
}

inline std::optional<CorrectionMode> parse_mode(std::string_view s) {
  return parse_enum(s, {CorrectionMode::none, CorrectionMode::client_only, CorrectionMode::group_only,
                        CorrectionMode::full});
}

inline std::optional<Regime> parse_regime(std::string_view s) {
  return parse_enum(s, {Regime::group_iid_client_noniid, Regime::group_noniid_client_iid,
                        Regime::group_noniid_client_noniid});
}

/// Returns an error message, or empty on success.
using Setter = std::function<std::string(ExperimentSpec&, std::string_view)>;

inline std::string expect(const char* what) { return std::string("expected ") + what; }

template <class Get>
Setter uint_setter(Get get) {
  return [get](ExperimentSpec& s, std::string_view v) -> std::string {
    auto x = parse_uint(v);
    if (!x) return expect("a non-negative integer");
    get(s) = static_cast<std::remove_reference_t<decltype(get(s))>>(*x);
    return {};
  };
}

template <class Get>
Setter real_setter(Get get) {
  return [get](ExperimentSpec& s, std::string_view v) -> std::string {
    auto x = parse_real(v);
    if (!x) return expect("a real number");
    get(s) = *x;
    return {};
  };
}

template <class Get>
Setter bool_setter(Get get) {
  return [get](ExperimentSpec& s, std::string_view v) -> std::string {
    if (v == "true") get(s) = true;
    else if (v == "false") get(s) = false;
    else return expect("true or false");
    return {};
  };
}

template <class Get>
Setter uint_list_setter(Get get) {
  return [get](ExperimentSpec& s, std::string_view v) -> std::string {
    auto& out = get(s);
    out.clear();
    for (const auto& item : split_list(v)) {
      auto x = parse_uint(item);
      if (!x) return expect("a comma-separated list of non-negative integers");
      out.push_back(static_cast<typename std::remove_reference_t<decltype(out)>::value_type>(*x));
    }
    return {};
  };
}

template <class Get>
Setter real_list_setter(Get get) {
  return [get](ExperimentSpec& s, std::string_view v) -> std::string {
    auto& out = get(s);
    out.clear();
    for (const auto& item : split_list(v)) {
      auto x = parse_real(item);
      if (!x) return expect("a comma-separated list of real numbers");
      out.push_back(*x);
    }
    return {};
  };
}

template <class E, class Get>
Setter enum_setter(Get get, std::initializer_list<E> values) {
  std::vector<E> vals(values);
  return [get, vals](ExperimentSpec& s, std::string_view v) -> std::string {
    for (E e : vals)
      if (v == to_string(e)) {
        get(s) = e;
        return {};
      }
    std::string opts;
    for (E e : vals) opts += (opts.empty() ? "" : ", ") + std::string(to_string(e));
    return "expected one of: " + opts;
  };
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["task.kind"] = enum_setter([](ExperimentSpec& s) -> auto& { return s.task.kind; },
                                 {ModelKind::quadratic, ModelKind::least_squares, ModelKind::logistic, ModelKind::mlp});
    t["task.dimension"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.task.dimension; });
    t["task.dataset"] = [](ExperimentSpec& s, std::string_view v) {
      s.task.dataset = std::string(v);
      return std::string();
    };
    t["task.group_shift"] = real_setter([](ExperimentSpec& s) -> auto& { return s.task.group_shift; });
    t["task.client_shift"] = real_setter([](ExperimentSpec& s) -> auto& { return s.task.client_shift; });
    t["task.level_shifts"] = real_list_setter([](ExperimentSpec& s) -> auto& { return s.task.level_shifts; });
    t["task.curvature_spread"] = real_setter([](ExperimentSpec& s) -> auto& { return s.task.curvature_spread; });
    t["task.center_norm"] = real_setter([](ExperimentSpec& s) -> auto& { return s.task.center_norm; });
    t["task.instance_seed"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.task.instance_seed; });
    t["task.hidden"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.task.hidden; });
    t["task.minibatch"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.task.minibatch; });

    t["topology.groups"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.topology.groups; });
    t["topology.clients_per_group"] =
        uint_setter([](ExperimentSpec& s) -> auto& { return s.topology.clients_per_group; });
    t["topology.fanouts"] = uint_list_setter([](ExperimentSpec& s) -> auto& { return s.topology.fanouts; });
    t["topology.periods"] = uint_list_setter([](ExperimentSpec& s) -> auto& { return s.topology.periods; });

    t["partition.regime"] =
        enum_setter([](ExperimentSpec& s) -> auto& { return s.partition.regime; },
                    {Regime::group_iid_client_noniid, Regime::group_noniid_client_iid, Regime::group_noniid_client_noniid});
    t["partition.alpha"] = real_setter([](ExperimentSpec& s) -> auto& { return s.partition.dirichlet_alpha; });
    t["partition.seed"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.partition.seed; });
    t["partition.max_retries"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.partition.max_retries; });

    t["train.gamma"] = [](ExperimentSpec& s, std::string_view v) -> std::string {
      if (v == "auto") {
        s.gamma_auto = true;
        s.train.gamma = 0.0;
        return {};
      }
      auto x = parse_real(v);
      if (!x) return expect("a real number or 'auto'");
      s.gamma_auto = false;
      s.train.gamma = *x;
      return {};
    };
    t["train.T"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.train.T; });
    t["train.E"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.train.E; });
    t["train.H"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.train.H; });
    t["train.mode"] =
        enum_setter([](ExperimentSpec& s) -> auto& { return s.train.mode; },
                    {CorrectionMode::none, CorrectionMode::client_only, CorrectionMode::group_only, CorrectionMode::full});
    t["train.z_init"] = enum_setter([](ExperimentSpec& s) -> auto& { return s.train.z_init; },
                                    {CorrectionInit::zero, CorrectionInit::batch_gradient});
    t["train.y_init"] = enum_setter([](ExperimentSpec& s) -> auto& { return s.train.y_init; },
                                    {CorrectionInit::zero, CorrectionInit::batch_gradient});
    t["train.z_refresh"] = enum_setter([](ExperimentSpec& s) -> auto& { return s.train.z_refresh; },
                                       {CorrectionRefresh::carry, CorrectionRefresh::every_round});
    t["train.noise_sigma"] = real_setter([](ExperimentSpec& s) -> auto& { return s.train.noise_sigma; });
    t["train.threads"] = uint_setter([](ExperimentSpec& s) -> auto& { return s.train.threads; });
    t["train.divergence_bound"] = real_setter([](ExperimentSpec& s) -> auto& { return s.train.divergence_bound; });

    t["metrics.suboptimality"] = bool_setter([](ExperimentSpec& s) -> auto& { return s.train.metrics.suboptimality; });
    t["metrics.drift"] = bool_setter([](ExperimentSpec& s) -> auto& { return s.train.metrics.drift; });
    t["metrics.dissimilarity"] = bool_setter([](ExperimentSpec& s) -> auto& { return s.train.metrics.dissimilarity; });

    t["output.dir"] = [](ExperimentSpec& s, std::string_view v) {
      s.output.dir = std::string(v);
      return std::string();
    };
    t["output.seeds"] = uint_list_setter([](ExperimentSpec& s) -> auto& { return s.output.seeds; });
    t["output.threshold"] = real_setter([](ExperimentSpec& s) -> auto& { return s.output.threshold; });
    t["output.metric"] = enum_setter([](ExperimentSpec& s) -> auto& { return s.output.metric; },
                                     {ThresholdMetric::grad_norm_sq, ThresholdMetric::loss});
    return t;
  }();
  return table;
}

}  // namespace detail

/// Cross-field checks. Each issue is attributed to the line of the key that
/// set the offending value (0 when it came from a default).
inline std::vector<ConfigIssue> validate_spec(const ExperimentSpec& s,
                                              const std::map<std::string, std::pair<std::size_t, std::size_t>>& where = {}) {
  std::vector<ConfigIssue> out;
  auto issue = [&](const std::string& key, std::string msg) {
    auto it = where.find(key);
    const auto pos = it == where.end() ? std::pair<std::size_t, std::size_t>{0, 0} : it->second;
    out.push_back(ConfigIssue{pos.first, pos.second, key + ": " + std::move(msg)});
  };
  if (!s.gamma_auto && !(s.train.gamma > 0.0)) issue("train.gamma", "must be > 0 or 'auto'");
  if (s.train.T == 0) issue("train.T", "must be >= 1");
  if (s.train.E == 0) issue("train.E", "must be >= 1");
  if (s.train.H == 0) issue("train.H", "must be >= 1");
  if (s.train.noise_sigma < 0.0) issue("train.noise_sigma", "must be >= 0");
  if (s.train.threads == 0) issue("train.threads", "must be >= 1");
  if (!(s.train.divergence_bound > 0.0)) issue("train.divergence_bound", "must be > 0");
  if (s.task.dimension == 0 && s.task.kind == ModelKind::quadratic) issue("task.dimension", "must be >= 1");
  if (s.task.curvature_spread < 0.0 || s.task.curvature_spread >= 1.0)
    issue("task.curvature_spread", "must lie in [0, 1)");
  if (s.task.kind != ModelKind::quadratic && s.task.dataset.empty())
    issue("task.dataset", std::string("required for kind ") + to_string(s.task.kind));
  if (s.task.kind == ModelKind::mlp && s.task.hidden == 0) issue("task.hidden", "must be >= 1");
  if (!(s.partition.dirichlet_alpha > 0.0)) issue("partition.alpha", "must be > 0");
  if (s.output.seeds.empty()) issue("output.seeds", "needs at least one seed");
  if (!(s.output.threshold >= 0.0)) issue("output.threshold", "must be >= 0");

  if (s.topology.multilevel()) {
    try {
      s.topology.multilevel_topology().validate();
    } catch (const ConfigError& e) {
      issue("topology.periods", e.what());
    }
    if (s.task.kind != ModelKind::quadratic) issue("task.kind", "multi-level runs use the quadratic generator");
    if (!s.task.level_shifts.empty() && s.task.level_shifts.size() != s.topology.fanouts.size())
      issue("task.level_shifts", "needs one shift per level");
    if (s.train.mode != CorrectionMode::full && s.train.mode != CorrectionMode::none)
      issue("train.mode", "multi-level runs support full and none");
  } else {
    if (!s.topology.periods.empty()) issue("topology.periods", "set without topology.fanouts");
    if (s.topology.groups == 0) issue("topology.groups", "must be >= 1");
    if (s.topology.clients_per_group == 0) issue("topology.clients_per_group", "must be >= 1");
  }
  return out;
}

/// Valid but questionable settings.
inline std::vector<std::string> spec_warnings(const ExperimentSpec& s) {
  std::vector<std::string> out;
  if (s.topology.multilevel() && !s.topology.periods.empty() && s.topology.periods.back() == 1)
    out.emplace_back("topology.periods: P_M = 1 aggregates the deepest level after every local step");
  return out;
}

namespace detail {

struct ParsedDocument {
  ExperimentSpec spec;
  std::vector<SweepAxis> axes;
};

inline ParsedDocument parse_document(std::string_view text, bool allow_sweep) {
  ParsedDocument doc;
  std::vector<ConfigIssue> issues;
  std::map<std::string, std::pair<std::size_t, std::size_t>> where;
  std::string section;
  bool saw_gamma = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line_no == 1 && raw.substr(0, 3) == "\xEF\xBB\xBF") raw.remove_prefix(3);
    const auto hash = raw.find('#');
    std::string_view line = raw.substr(0, hash);
    if (trim(line).empty()) continue;
    const std::size_t indent = line.find_first_not_of(" \t") + 1;
    const std::string_view body = trim(line);
    if (body.front() == '[') {
      if (body.back() != ']') {
        issues.push_back({line_no, indent, "unterminated section header"});
        continue;
      }
      section = std::string(trim(body.substr(1, body.size() - 2)));
      static const std::vector<std::string> known{"task", "topology", "partition", "train", "metrics", "output", "sweep"};
      if (std::find(known.begin(), known.end(), section) == known.end())
        issues.push_back({line_no, indent, "unknown section '" + section + "'"});
      else if (section == "sweep" && !allow_sweep)
        issues.push_back({line_no, indent, "[sweep] is only valid in sweep configs"});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      issues.push_back({line_no, indent, "expected 'key = value'"});
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const std::size_t value_col = eq + 2 + (line.substr(eq + 1).find_first_not_of(" \t") == std::string_view::npos
                                                ? 0
                                                : line.substr(eq + 1).find_first_not_of(" \t"));
    if (section.empty()) {
      issues.push_back({line_no, indent, "key '" + key + "' outside of a section"});
      continue;
    }
    if (section == "sweep") {
      const auto& names = sweep_axis_names();
      if (std::find(names.begin(), names.end(), key) == names.end()) {
        issues.push_back({line_no, indent, "unknown sweep axis '" + key + "'"});
        continue;
      }
      auto values = split_list(value);
      if (values.empty()) {
        issues.push_back({line_no, value_col, "sweep axis '" + key + "' has no values"});
        continue;
      }
      doc.axes.push_back(SweepAxis{key, std::move(values)});
      continue;
    }
    const std::string full = section + "." + key;
    const auto& table = setters();
    const auto it = table.find(full);
    if (it == table.end()) {
      issues.push_back({line_no, indent, "unknown key '" + full + "'"});
      continue;
    }
    if (where.count(full)) {
      issues.push_back({line_no, indent, "duplicate key '" + full + "'"});
      continue;
    }
    where[full] = {line_no, value_col};
    if (full == "train.gamma") saw_gamma = true;
    if (auto err = it->second(doc.spec, value); !err.empty())
      issues.push_back({line_no, value_col, full + ": " + err + ", got '" + std::string(value) + "'"});
  }
  if (!saw_gamma) issues.push_back({0, 0, "missing required key 'train.gamma'"});
  auto more = validate_spec(doc.spec, where);
  if (!saw_gamma) std::erase_if(more, [](const ConfigIssue& i) { return i.message.rfind("train.gamma", 0) == 0; });
  issues.insert(issues.end(), more.begin(), more.end());
  if (!issues.empty()) throw ConfigParseError(std::move(issues));
  return doc;
}

}  // namespace detail

/// Parses the `[section]` / `key = value` format. Every problem is collected
/// before throwing ConfigParseError.
inline ExperimentSpec parse_config(std::string_view text) { return detail::parse_document(text, false).spec; }

inline SweepSpec parse_sweep_config(std::string_view text) {
  auto doc = detail::parse_document(text, true);
  return SweepSpec{std::move(doc.spec), std::move(doc.axes)};
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string serialize(const ExperimentSpec& s) {
  using detail::list_text;
  using detail::real_text;
  std::ostringstream o;
  o << "[task]\n"
    << "kind = " << to_string(s.task.kind) << '\n'
    << "dimension = " << s.task.dimension << '\n'
    << "dataset = " << s.task.dataset << '\n'
    << "group_shift = " << real_text(s.task.group_shift) << '\n'
    << "client_shift = " << real_text(s.task.client_shift) << '\n'
    << "level_shifts = " << list_text(s.task.level_shifts) << '\n'
    << "curvature_spread = " << real_text(s.task.curvature_spread) << '\n'
    << "center_norm = " << real_text(s.task.center_norm) << '\n'
    << "instance_seed = " << s.task.instance_seed << '\n'
    << "hidden = " << s.task.hidden << '\n'
    << "minibatch = " << s.task.minibatch << "\n\n";
  o << "[topology]\n"
    << "groups = " << s.topology.groups << '\n'
    << "clients_per_group = " << s.topology.clients_per_group << '\n'
    << "fanouts = " << list_text(s.topology.fanouts) << '\n'
    << "periods = " << list_text(s.topology.periods) << "\n\n";
  o << "[partition]\n"
    << "regime = " << to_string(s.partition.regime) << '\n'
    << "alpha = " << real_text(s.partition.dirichlet_alpha) << '\n'
    << "seed = " << s.partition.seed << '\n'
    << "max_retries = " << s.partition.max_retries << "\n\n";
  o << "[train]\n"
    << "gamma = " << (s.gamma_auto ? std::string("auto") : real_text(s.train.gamma)) << '\n'
    << "T = " << s.train.T << '\n'
    << "E = " << s.train.E << '\n'
    << "H = " << s.train.H << '\n'
    << "mode = " << to_string(s.train.mode) << '\n'
    << "z_init = " << to_string(s.train.z_init) << '\n'
    << "z_refresh = " << to_string(s.train.z_refresh) << '\n'
    << "y_init = " << to_string(s.train.y_init) << '\n'
    << "noise_sigma = " << real_text(s.train.noise_sigma) << '\n'
    << "threads = " << s.train.threads << '\n'
    << "divergence_bound = " << real_text(s.train.divergence_bound) << "\n\n";
  o << "[metrics]\n"
    << "suboptimality = " << (s.train.metrics.suboptimality ? "true" : "false") << '\n'
    << "drift = " << (s.train.metrics.drift ? "true" : "false") << '\n'
    << "dissimilarity = " << (s.train.metrics.dissimilarity ? "true" : "false") << "\n\n";
  o << "[output]\n"
    << "dir = " << s.output.dir << '\n'
    << "seeds = " << list_text(s.output.seeds) << '\n'
    << "threshold = " << real_text(s.output.threshold) << '\n'
    << "metric = " << to_string(s.output.metric) << '\n';
  return o.str();
}

inline std::string serialize(const SweepSpec& s) {
  std::string out = serialize(s.base);
  if (!s.axes.empty()) {
    out += "\n[sweep]\n";
    for (const auto& a : s.axes) {
      out += a.name + " = ";
      for (std::size_t k = 0; k < a.values.size(); ++k) out += (k ? ", " : "") + a.values[k];
      out += '\n';
    }
  }
  return out;
}

/// Applies one sweep coordinate. N sets the number of groups.
inline void apply_axis(ExperimentSpec& s, const std::string& name, const std::string& value) {
  auto uint = [&]() {
    auto v = detail::parse_uint(value);
    if (!v || *v == 0) throw ConfigError("sweep axis " + name + ": expected a positive integer, got '" + value + "'");
    return static_cast<std::size_t>(*v);
  };
  auto real = [&]() {
    auto v = detail::parse_real(value);
    if (!v) throw ConfigError("sweep axis " + name + ": expected a real number, got '" + value + "'");
    return *v;
  };
  if (name == "E") s.train.E = uint();
  else if (name == "H") s.train.H = uint();
  else if (name == "N") s.topology.groups = uint();
  else if (name == "group_shift") s.task.group_shift = real();
  else if (name == "client_shift") s.task.client_shift = real();
  else if (name == "correction_mode") {
    auto m = detail::parse_mode(value);
    if (!m) throw ConfigError("sweep axis correction_mode: unknown mode '" + value + "'");
    s.train.mode = *m;
  } else if (name == "regime") {
    auto r = detail::parse_regime(value);
    if (!r) throw ConfigError("sweep axis regime: unknown regime '" + value + "'");
    s.partition.regime = *r;
  } else {
    throw ConfigError("unknown sweep axis '" + name + "'");
  }
}

struct SweepCell {
  std::vector<std::pair<std::string, std::string>> coordinates;
  ExperimentSpec spec;
};

/// Cartesian product, last axis varying fastest.
inline std::vector<SweepCell> expand_sweep(const SweepSpec& sweep) {
  std::vector<SweepCell> cells{SweepCell{{}, sweep.base}};
  for (const auto& axis : sweep.axes) {
    std::vector<SweepCell> next;
    for (const auto& cell : cells)
      for (const auto& v : axis.values) {
        SweepCell c = cell;
        c.coordinates.emplace_back(axis.name, v);
        apply_axis(c.spec, axis.name, v);
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }
  for (const auto& c : cells) {
    auto issues = validate_spec(c.spec);
    if (!issues.empty()) throw ConfigParseError(std::move(issues));
  }
  return cells;
}

}  // namespace mtgc

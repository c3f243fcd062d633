// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtgc/analysis.hpp"
#include "mtgc/config.hpp"
#include "mtgc/engine.hpp"
#include "mtgc/errors.hpp"
#include "mtgc/multilevel.hpp"
#include "mtgc/objective.hpp"
#include "mtgc/partition.hpp"
#include "mtgc/synthetic.hpp"
#include "mtgc/trace.hpp"

#ifndef MTGC_VERSION
#define MTGC_VERSION "0.1.0"
#endif

namespace mtgc {

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_divergence = 2, exit_io = 3 };

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Identity of an experiment: everything except seeds, output location and
/// thread count, none of which change a single-seed trace.
inline std::string spec_hash(ExperimentSpec spec) {
  spec.output.dir.clear();
  spec.output.seeds = {0};
  spec.train.threads = 1;
  return hex64(fnv1a64(serialize(spec)));
}

/// Client tasks of one seed. Synthetic quadratics are drawn with seed
/// instance_seed + seed; the regime zeroes the shift of the iid level.
inline std::vector<Task> build_tasks(const ExperimentSpec& spec, std::uint64_t seed) {
  const auto& ts = spec.task;
  QuadraticInstanceOptions opts;
  opts.curvature_spread = ts.curvature_spread;
  opts.center_norm = ts.center_norm;
  if (spec.topology.multilevel()) {
    const auto topo = spec.topology.multilevel_topology();
    std::vector<double> shifts = ts.level_shifts;
    if (shifts.empty()) shifts.assign(topo.levels(), 1.0);
    return synth_multilevel_quadratics(topo, ts.dimension, shifts, ts.instance_seed + seed, opts);
  }
  const Topology topo = spec.topology.two_level();
  if (ts.kind == ModelKind::quadratic) {
    const double gs = spec.partition.regime == Regime::group_iid_client_noniid ? 0.0 : ts.group_shift;
    const double cs = spec.partition.regime == Regime::group_noniid_client_iid ? 0.0 : ts.client_shift;
    return synth_heterogeneous_quadratics(topo, ts.dimension, gs, cs, ts.instance_seed + seed, opts);
  }
  const LabeledDataset ds = load_labeled_csv(ts.dataset);
  PartitionPlan plan = spec.partition;
  plan.seed = spec.partition.seed + seed;
  auto shards = partition_dataset(ds, topo, plan);
  std::vector<Task> tasks;
  for (auto& shard : shards) {
    Task t = ts.kind == ModelKind::least_squares ? make_least_squares(std::move(shard))
             : ts.kind == ModelKind::logistic    ? make_logistic(std::move(shard))
                                                 : make_mlp(std::move(shard), ts.hidden);
    t.minibatch_size = ts.minibatch;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

/// 1 / (40 P L) with P the number of local steps per global round.
inline double gamma_bound(const ExperimentSpec& spec, const std::vector<Task>& tasks) {
  const double l = max_lipschitz(tasks);
  if (spec.topology.multilevel()) return stepsize_bound(l, spec.topology.periods.front(), 1);
  return stepsize_bound(l, spec.train.E, spec.train.H);
}

inline double resolve_gamma(const ExperimentSpec& spec, const std::vector<Task>& tasks) {
  return spec.gamma_auto ? gamma_bound(spec, tasks) : spec.train.gamma;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  double gamma = 0.0;
  double gamma_bound = 0.0;
  MetricTrace trace;
  std::optional<std::uint64_t> rounds;
  std::optional<std::string> divergence;
  std::vector<LevelEvent> events;
};

/// One seed of an experiment, in memory.
inline SeedOutcome run_seed(const ExperimentSpec& spec, std::uint64_t seed) {
  const auto tasks = build_tasks(spec, seed);
  TrainConfig cfg = spec.train;
  SeedOutcome out;
  out.seed = seed;
  out.gamma_bound = gamma_bound(spec, tasks);
  cfg.gamma = out.gamma = spec.gamma_auto ? out.gamma_bound : spec.train.gamma;
  if (spec.topology.multilevel()) {
    auto ml = MultiLevelConfig::from_two_level(cfg);
    ml.R = cfg.T * spec.topology.periods.front();
    auto res = run_multilevel(spec.topology.multilevel_topology(), tasks, ml, seed);
    out.trace = std::move(res.trace);
    out.events = std::move(res.events);
    if (res.divergence) out.divergence = res.divergence->message;
  } else {
    auto res = run_training(spec.topology.two_level(), tasks, cfg, seed);
    out.trace = std::move(res.trace);
    if (res.divergence) out.divergence = res.divergence->message;
  }
  out.rounds = rounds_to_threshold(out.trace, spec.output.threshold, spec.output.metric);
  return out;
}

struct RoundsSummary {
  std::size_t reached = 0;
  std::size_t total = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::uint64_t horizon = 0;

  /// "mean ± std", or ">T" when some seed never crossed.
  std::string display() const {
    if (reached < total || total == 0) return ">" + std::to_string(horizon);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f ± %.1f", mean, stddev);
    return buf;
  }
};

inline RoundsSummary summarize_rounds(const std::vector<std::optional<std::uint64_t>>& rounds, std::uint64_t horizon) {
  RoundsSummary s;
  s.total = rounds.size();
  s.horizon = horizon;
  std::vector<double> xs;
  for (const auto& r : rounds)
    if (r) xs.push_back(static_cast<double>(*r));
  s.reached = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct ExperimentOutcome {
  int exit_code = exit_ok;
  std::filesystem::path directory;
  std::vector<SeedOutcome> seeds;
  RoundsSummary summary;
  std::string message;
};

namespace detail {

inline std::string write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
  return content;
}

}  // namespace detail

/// Runs every seed and writes
///   <dir>/<spec-hash>/<seed>/metrics.csv   (and events.csv for multi-level runs)
///   <dir>/<spec-hash>/summary.csv, spec.cfg, manifest.json
/// A diverging seed keeps its partial trace and yields exit code 2.
inline ExperimentOutcome run_experiment(const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  const auto started = std::chrono::steady_clock::now();
  ExperimentOutcome outcome;
  if (auto issues = validate_spec(spec); !issues.empty()) throw ConfigParseError(std::move(issues));
  const std::string hash = spec_hash(spec);
  outcome.directory = fs::path(spec.output.dir) / hash;
  std::error_code ec;
  fs::create_directories(outcome.directory, ec);
  if (ec) throw IoError("cannot create " + outcome.directory.string() + ": " + ec.message());

  std::vector<std::pair<std::string, std::string>> artifacts;  // relative path, content
  auto emit = [&](const fs::path& rel, const std::string& content) {
    fs::create_directories((outcome.directory / rel).parent_path(), ec);
    if (ec) throw IoError("cannot create " + (outcome.directory / rel).parent_path().string());
    detail::write_file(outcome.directory / rel, content);
    artifacts.emplace_back(rel.generic_string(), content);
  };

  emit("spec.cfg", serialize(spec));
  std::vector<std::optional<std::uint64_t>> rounds;
  for (std::uint64_t seed : spec.output.seeds) {
    SeedOutcome s = run_seed(spec, seed);
    const fs::path dir = std::to_string(seed);
    emit(dir / "metrics.csv", metric_csv_string(s.trace));
    if (!s.events.empty()) {
      std::ostringstream ev;
      write_event_log(ev, s.events);
      emit(dir / "events.csv", ev.str());
    }
    if (s.divergence && outcome.exit_code == exit_ok) {
      outcome.exit_code = exit_divergence;
      outcome.message = "seed " + std::to_string(seed) + ": " + *s.divergence;
    }
    rounds.push_back(s.rounds);
    outcome.seeds.push_back(std::move(s));
  }
  outcome.summary = summarize_rounds(rounds, spec.train.T);

  std::ostringstream sum;
  sum << "mode,regime,E,H,N,threshold,metric,seeds,reached,rounds_mean,rounds_std,rounds\n";
  sum << to_string(spec.train.mode) << ',' << to_string(spec.partition.regime) << ',' << spec.train.E << ','
      << spec.train.H << ',' << spec.topology.groups << ',' << detail::real_text(spec.output.threshold) << ','
      << to_string(spec.output.metric) << ',' << outcome.summary.total << ',' << outcome.summary.reached << ','
      << (outcome.summary.reached ? detail::real_text(outcome.summary.mean) : "") << ','
      << (outcome.summary.reached ? detail::real_text(outcome.summary.stddev) : "") << ','
      << outcome.summary.display() << '\n';
  emit("summary.csv", sum.str());

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  nlohmann::ordered_json manifest;
  manifest["spec_hash"] = hash;
  manifest["code_version"] = MTGC_VERSION;
  manifest["seeds"] = spec.output.seeds;
  manifest["wall_time_s"] = wall;
  if (!outcome.seeds.empty()) {
    manifest["gamma"] = outcome.seeds.front().gamma;
    manifest["gamma_bound"] = outcome.seeds.front().gamma_bound;
  }
  manifest["exit_code"] = outcome.exit_code;
  auto& files = manifest["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& [path, content] : artifacts)
    files.push_back({{"path", path}, {"bytes", content.size()}, {"fnv1a64", hex64(fnv1a64(content))}});
  detail::write_file(outcome.directory / "manifest.json", manifest.dump(2) + "\n");
  return outcome;
}

struct SweepOutcome {
  int exit_code = exit_ok;
  std::vector<SweepCell> cells;
  std::vector<ExperimentOutcome> results;
};

/// Runs every cell of the grid and writes <dir>/sweep_summary.csv.
inline SweepOutcome run_sweep(const SweepSpec& sweep) {
  SweepOutcome out;
  out.cells = expand_sweep(sweep);
  std::ostringstream table;
  for (const auto& axis : sweep.axes) table << axis.name << ',';
  table << "spec_hash,reached,seeds,rounds_mean,rounds_std,rounds\n";
  for (const auto& cell : out.cells) {
    auto res = run_experiment(cell.spec);
    for (const auto& [name, value] : cell.coordinates) table << value << ',';
    table << res.directory.filename().string() << ',' << res.summary.reached << ',' << res.summary.total << ','
          << (res.summary.reached ? detail::real_text(res.summary.mean) : "") << ','
          << (res.summary.reached ? detail::real_text(res.summary.stddev) : "") << ',' << res.summary.display()
          << '\n';
    if (res.exit_code != exit_ok && out.exit_code == exit_ok) out.exit_code = res.exit_code;
    out.results.push_back(std::move(res));
  }
  std::filesystem::create_directories(sweep.base.output.dir);
  detail::write_file(std::filesystem::path(sweep.base.output.dir) / "sweep_summary.csv", table.str());
  return out;
}

struct ComparisonRow {
  std::string label;
  std::optional<std::uint64_t> rounds;
  std::uint64_t horizon = 0;
  std::string rounds_text;
  std::string speedup_text;
};

namespace detail {

inline std::string times(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g×", v);
  return buf;
}

}  // namespace detail

/// Rounds-to-threshold per trace and speedup versus the first trace. A trace
/// that never crosses reports ">R" (R its recorded rounds) and speedups
/// involving it become bounds.
inline std::vector<ComparisonRow> compare_report(const std::vector<MetricTrace>& traces,
                                                 const std::vector<std::string>& labels, double threshold,
                                                 ThresholdMetric metric = ThresholdMetric::grad_norm_sq) {
  if (traces.empty()) throw ComparisonError("nothing to compare");
  if (traces.size() != labels.size()) throw ComparisonError("one label per trace is required");
  std::vector<ComparisonRow> rows;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const auto& tr = traces[k];
    if (tr.rows.empty()) throw ComparisonError("trace '" + labels[k] + "' is empty");
    for (const auto& r : tr.rows)
      if (!std::isfinite(metric_value(r, metric)))
        throw ComparisonError("trace '" + labels[k] + "' has no finite " + to_string(metric) + " values");
    ComparisonRow row;
    row.label = labels[k];
    row.rounds = rounds_to_threshold(tr, threshold, metric);
    row.horizon = rounds_elapsed(tr.rows.back());
    row.rounds_text = row.rounds ? std::to_string(*row.rounds) : ">" + std::to_string(row.horizon);
    rows.push_back(std::move(row));
  }
  const auto& base = rows.front();
  for (auto& row : rows) {
    const double b = static_cast<double>(base.rounds.value_or(base.horizon));
    const double r = static_cast<double>(row.rounds.value_or(row.horizon));
    if (&row == &base) row.speedup_text = detail::times(1.0);
    else if (r == 0.0) row.speedup_text = b == 0.0 ? detail::times(1.0) : "n/a";
    else if (base.rounds && row.rounds) row.speedup_text = detail::times(b / r);
    else if (!base.rounds && row.rounds) row.speedup_text = ">" + detail::times(b / r);
    else if (base.rounds && !row.rounds) row.speedup_text = "<" + detail::times(b / r);
    else row.speedup_text = "n/a";
  }
  return rows;
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string s = "label,rounds,speedup\n";
  for (const auto& r : rows) s += r.label + "," + r.rounds_text + "," + r.speedup_text + "\n";
  return s;
}

}  // namespace mtgc

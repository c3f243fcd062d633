// SPDX-License-Identifier: Apache-2.0
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtgc/mtgc.hpp"

namespace {

struct Overrides {
  std::string seeds;
  std::string out;
  std::optional<std::size_t> threads;
  std::optional<double> threshold;
  std::string metric;
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : mtgc::detail::split_list(text)) {
    auto v = mtgc::detail::parse_uint(item);
    if (!v) throw mtgc::ConfigError("--seed: expected unsigned integers, got '" + item + "'");
    seeds.push_back(*v);
  }
  if (seeds.empty()) throw mtgc::ConfigError("--seed: no seeds given");
  return seeds;
}

mtgc::ThresholdMetric parse_metric(const std::string& m) {
  if (m == "grad") return mtgc::ThresholdMetric::grad_norm_sq;
  if (m == "loss") return mtgc::ThresholdMetric::loss;
  throw mtgc::ConfigError("--metric must be grad or loss");
}

void apply(mtgc::ExperimentSpec& spec, const Overrides& o) {
  if (!o.seeds.empty()) spec.output.seeds = parse_seeds(o.seeds);
  if (!o.out.empty()) spec.output.dir = o.out;
  if (o.threads) spec.train.threads = *o.threads;
  if (o.threshold) spec.output.threshold = *o.threshold;
  if (!o.metric.empty()) spec.output.metric = parse_metric(o.metric);
}

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seeds, "Seed list, comma separated");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--threshold", o.threshold, "Rounds-to-threshold level");
  cmd->add_option("--metric", o.metric, "Threshold metric")->check(CLI::IsMember({"grad", "loss"}));
}

void warn(const mtgc::ExperimentSpec& spec) {
  for (const auto& w : mtgc::spec_warnings(spec)) std::cerr << "warning: " << w << "\n";
}

int report(const mtgc::ExperimentOutcome& res) {
  std::cout << res.directory.string() << "\n";
  for (const auto& s : res.seeds)
    std::cout << "seed " << s.seed << ": rounds " << (s.rounds ? std::to_string(*s.rounds) : "not reached")
              << (s.divergence ? " (diverged: " + *s.divergence + ")" : "") << "\n";
  std::cout << "rounds to threshold: " << res.summary.display() << "\n";
  if (!res.message.empty()) std::cerr << "error: " << res.message << "\n";
  return res.exit_code;
}

void print_oracles(const mtgc::ExperimentSpec& spec) {
  const auto seed = spec.output.seeds.front();
  const auto tasks = mtgc::build_tasks(spec, seed);
  const double l = mtgc::max_lipschitz(tasks);
  std::cout.precision(17);
  std::cout << "L = " << l << "\n";
  std::cout << "gamma_bound = " << mtgc::resolve_gamma([&] {
    auto s = spec;
    s.gamma_auto = true;
    return s;
  }(), tasks) << "\n";
  if (spec.topology.multilevel()) return;
  const auto topo = spec.topology.two_level();
  std::cout << "effective_clients = " << mtgc::effective_client_count(topo) << "\n";
  const mtgc::ParamVector x0(tasks.front().param_dim());
  const auto rep = mtgc::gradient_dissimilarity(tasks, topo, x0);
  std::cout << "delta1_sq(x0) = " << rep.delta1_sq << "\n";
  std::cout << "delta2_sq_max(x0) = " << rep.delta2_sq_max << "\n";
  std::cout << "grad_norm_sq(x0) = " << mtgc::global_gradient(tasks, topo, x0).norm_sq() << "\n";
  if (spec.task.kind == mtgc::ModelKind::quadratic) {
    const auto xs = mtgc::closed_form_optimum(tasks, topo);
    std::cout << "f_star = " << mtgc::global_loss(tasks, topo, xs) << "\n";
    std::cout << "x_star =";
    for (std::size_t k = 0; k < xs.dim(); ++k) std::cout << ' ' << xs[k];
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical federated training with multi-timescale gradient correction"};
  app.require_subcommand(1);
  std::string config;
  Overrides o;

  auto* run = app.add_subcommand("run", "Run one experiment for every seed");
  run->add_option("--config", config, "Experiment config")->required();
  add_overrides(run, o);

  auto* sweep = app.add_subcommand("sweep", "Run the Cartesian grid of a sweep config");
  sweep->add_option("--config", config, "Sweep config")->required();
  add_overrides(sweep, o);

  std::vector<std::string> traces;
  std::string labels;
  auto* compare = app.add_subcommand("compare", "Rounds-to-threshold and speedup of metric CSVs");
  compare->add_option("traces", traces, "metrics.csv files; the first is the baseline")->required();
  compare->add_option("--labels", labels, "Labels, comma separated");
  compare->add_option("--threshold", o.threshold, "Threshold level");
  compare->add_option("--metric", o.metric, "Threshold metric")->check(CLI::IsMember({"grad", "loss"}));
  compare->add_option("--out", o.out, "Write the table to this file");

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", config, "Experiment or sweep config")->required();

  auto* oracle = app.add_subcommand("oracle", "Print reference quantities of a configured instance");
  oracle->add_option("--config", config, "Experiment config")->required();
  oracle->add_option("--seed", o.seeds, "Instance seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return mtgc::exit_config;
  }

  try {
    if (*run) {
      auto spec = mtgc::parse_config(mtgc::read_text_file(config));
      apply(spec, o);
      warn(spec);
      return report(mtgc::run_experiment(spec));
    }
    if (*sweep) {
      auto spec = mtgc::parse_sweep_config(mtgc::read_text_file(config));
      apply(spec.base, o);
      warn(spec.base);
      std::cout << "sweep: " << spec.size() << " cells\n";
      auto res = mtgc::run_sweep(spec);
      for (std::size_t k = 0; k < res.cells.size(); ++k) {
        for (const auto& [name, value] : res.cells[k].coordinates) std::cout << name << '=' << value << ' ';
        std::cout << "-> " << res.results[k].summary.display() << "\n";
      }
      return res.exit_code;
    }
    if (*compare) {
      std::vector<mtgc::MetricTrace> loaded;
      for (const auto& path : traces) loaded.push_back(mtgc::load_metric_csv(path));
      std::vector<std::string> names = mtgc::detail::split_list(labels);
      if (names.empty())
        for (const auto& path : traces) names.push_back(path);
      const auto rows = mtgc::compare_report(loaded, names, o.threshold.value_or(1e-8),
                                             o.metric.empty() ? mtgc::ThresholdMetric::grad_norm_sq
                                                              : parse_metric(o.metric));
      const std::string table = mtgc::comparison_csv(rows);
      std::cout << table;
      if (!o.out.empty()) mtgc::detail::write_file(o.out, table);
      return mtgc::exit_ok;
    }
    if (*validate) {
      const auto spec = mtgc::parse_sweep_config(mtgc::read_text_file(config));
      const auto cells = mtgc::expand_sweep(spec);
      warn(spec.base);
      std::cout << "ok: " << cells.size() << (cells.size() == 1 ? " cell\n" : " cells\n");
      return mtgc::exit_ok;
    }
    if (*oracle) {
      auto spec = mtgc::parse_config(mtgc::read_text_file(config));
      apply(spec, o);
      print_oracles(spec);
      return mtgc::exit_ok;
    }
  } catch (const mtgc::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return mtgc::exit_io;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return mtgc::exit_io;
  } catch (const mtgc::NumericalDivergence& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return mtgc::exit_divergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mtgc::exit_config;
  }
  return mtgc::exit_config;
}

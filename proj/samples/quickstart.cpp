// SPDX-License-Identifier: Apache-2.0
// Corrected versus uncorrected hierarchical training on heterogeneous quadratics.
#include <cstdio>

#include "mtgc/mtgc.hpp"

int main() {
  using namespace mtgc;
  const Topology topo = build_topology(4, 4);
  QuadraticInstanceOptions opts;
  opts.curvature_spread = 0.5;
  const auto tasks = synth_heterogeneous_quadratics(topo, 10, 2.0, 2.0, 1, opts);

  TrainConfig cfg;
  cfg.gamma = 0.02;
  cfg.T = 200;
  cfg.E = 4;
  cfg.H = 5;

  std::vector<MetricTrace> traces;
  std::vector<std::string> labels;
  for (auto mode : {CorrectionMode::none, CorrectionMode::client_only, CorrectionMode::group_only, CorrectionMode::full}) {
    cfg.mode = mode;
    auto res = run_training(topo, tasks, cfg, 0);
    std::printf("%-12s final |grad|^2 = %.3e\n", to_string(mode), res.trace.rows.back().grad_norm_sq);
    traces.push_back(std::move(res.trace));
    labels.emplace_back(to_string(mode));
  }
  std::printf("\n%s", comparison_csv(compare_report(traces, labels, 1e-8)).c_str());
}

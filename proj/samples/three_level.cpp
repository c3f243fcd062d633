// SPDX-License-Identifier: Apache-2.0
// Three-level hierarchy: 2 x 2 x 2 leaves, aggregation every 40, 8 and 2 steps.
#include <cstdio>
#include <iostream>

#include "mtgc/mtgc.hpp"

int main() {
  using namespace mtgc;
  const MultiLevelTopology topo{{2, 2, 2}, {40, 8, 2}};
  QuadraticInstanceOptions opts;
  opts.curvature_spread = 0.3;
  const auto tasks = synth_multilevel_quadratics(topo, 8, {1.0, 1.0, 1.0}, 7, opts);

  MultiLevelConfig cfg;
  cfg.gamma = 1.0 / (160.0 * max_lipschitz(tasks));
  cfg.R = 40 * 100;
  for (bool corrections : {false, true}) {
    cfg.corrections = corrections;
    const auto res = run_multilevel(topo, tasks, cfg, 0);
    std::printf("corrections %-3s final |grad|^2 = %.3e after %zu aggregation events\n", corrections ? "on" : "off",
                res.trace.rows.back().grad_norm_sq, res.events.size());
  }
  cfg.R = 8;
  std::cout << "\nevent log of the first 8 steps:\n";
  write_event_log(std::cout, run_multilevel(topo, tasks, cfg, 0).events);
}

// SPDX-License-Identifier: Apache-2.0
// Stop after a few rounds, save the state, reload it and finish the run.
#include <cstdio>
#include <filesystem>

#include "mtgc/mtgc.hpp"

int main() {
  using namespace mtgc;
  const Topology topo = build_topology(3, 2);
  const auto tasks = synth_heterogeneous_quadratics(topo, 4, 1.0, 1.0, 5);
  TrainConfig cfg;
  cfg.gamma = 0.05;
  cfg.T = 10;
  cfg.E = 2;
  cfg.H = 3;
  cfg.noise_sigma = 0.1;

  const auto straight = run_training(topo, tasks, cfg, 42);

  TrainConfig first = cfg;
  first.T = 4;
  const auto part = run_training(topo, tasks, first, 42);
  const auto path = std::filesystem::temp_directory_path() / "mtgc_checkpoint.json";
  save_checkpoint(path, part.state);
  const auto resumed = continue_training(load_checkpoint(path), tasks, cfg);
  std::filesystem::remove(path);

  std::printf("straight run  : %.17g\n", straight.final_state.model[0]);
  std::printf("resumed run   : %.17g\n", resumed.final_state.model[0]);
  std::printf("identical     : %s\n", straight.final_state == resumed.final_state ? "yes" : "no");
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "mtgc/errors.hpp"
#include "mtgc/param_vector.hpp"
#include "mtgc/task.hpp"
#include "mtgc/topology.hpp"

namespace mtgc {

/// Full-batch gradient of group j's objective f_j = (1/n_j) sum_{i in C_j} F_i.
inline ParamVector group_gradient(const std::vector<Task>& tasks, const Topology& topo, std::size_t j,
                                  const ParamVector& x) {
  ParamVector g(x.dim());
  for (ClientId c : topo.group(j)) g += full_gradient(tasks.at(c), x);
  return g / static_cast<double>(topo.group_size(j));
}

/// Gradient of f = (1/N) sum_j (1/n_j) sum_{i in C_j} F_i.
inline ParamVector global_gradient(const std::vector<Task>& tasks, const Topology& topo, const ParamVector& x) {
  ParamVector g(x.dim());
  for (std::size_t j = 0; j < topo.n_groups(); ++j) g += group_gradient(tasks, topo, j, x);
  return g / static_cast<double>(topo.n_groups());
}

inline double global_loss(const std::vector<Task>& tasks, const Topology& topo, const ParamVector& x) {
  double f = 0.0;
  for (std::size_t j = 0; j < topo.n_groups(); ++j) {
    double fj = 0.0;
    for (ClientId c : topo.group(j)) fj += loss_eval(tasks.at(c), x);
    f += fj / static_cast<double>(topo.group_size(j));
  }
  return f / static_cast<double>(topo.n_groups());
}

/// Per-client weights 1/(N n_j) of the hierarchical objective.
inline std::vector<double> objective_weights(const Topology& topo) {
  std::vector<double> w(topo.n_clients());
  for (std::size_t j = 0; j < topo.n_groups(); ++j)
    for (ClientId c : topo.group(j))
      w[c] = 1.0 / (static_cast<double>(topo.n_groups()) * static_cast<double>(topo.group_size(j)));
  return w;
}

/// Unique minimizer of sum_i weights[i] * F_i for quadratic tasks.
inline ParamVector closed_form_optimum(const std::vector<Task>& tasks, const std::vector<double>& weights) {
  if (tasks.empty() || tasks.size() != weights.size())
    throw ConfigError("closed_form_optimum needs one weight per task");
  const auto d = static_cast<Eigen::Index>(tasks.front().param_dim());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].kind != TaskKind::quadratic) throw ConfigError("closed_form_optimum requires quadratic tasks");
    if (static_cast<Eigen::Index>(tasks[i].param_dim()) != d) throw ConfigError("tasks differ in dimension");
    h += weights[i] * quadratic_hessian(tasks[i]);
    rhs += weights[i] * quadratic_linear_term(tasks[i]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(es.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, lmax)))
    throw DegenerateInstance("pooled normal equations are singular");
  Eigen::VectorXd x = es.eigenvectors() *
                      (es.eigenvalues().cwiseInverse().asDiagonal() * (es.eigenvectors().transpose() * rhs));
  // one step of iterative refinement
  const Eigen::VectorXd r = rhs - h * x;
  x += es.eigenvectors() * (es.eigenvalues().cwiseInverse().asDiagonal() * (es.eigenvectors().transpose() * r));
  return ParamVector(std::vector<double>(x.data(), x.data() + x.size()));
}

inline ParamVector closed_form_optimum(const std::vector<Task>& tasks, const Topology& topo) {
  return closed_form_optimum(tasks, objective_weights(topo));
}

/// Smoothness constant shared by all tasks: max_i L_i.
inline double max_lipschitz(const std::vector<Task>& tasks) {
  double l = 0.0;
  for (const auto& t : tasks) l = std::max(l, lipschitz_constant(t));
  return l;
}

}  // namespace mtgc

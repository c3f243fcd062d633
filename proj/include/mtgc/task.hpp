// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtgc/errors.hpp"
#include "mtgc/param_vector.hpp"
#include "mtgc/rng.hpp"

namespace mtgc {

using ClientId = std::uint32_t;

struct Example {
  std::vector<double> features;
  double target = 0.0;

  bool operator==(const Example&) const = default;
};

/// Local data of one client. Non-empty, all feature vectors of equal length.
struct DataShard {
  std::vector<Example> examples;
  ClientId owner_client = 0;

  std::size_t size() const noexcept { return examples.size(); }
  std::size_t feature_dim() const noexcept {
    return examples.empty() ? 0 : examples.front().features.size();
  }

  void validate() const {
    if (examples.empty()) throw ConfigError("data shard of client " + std::to_string(owner_client) + " is empty");
    const std::size_t d = feature_dim();
    for (const auto& ex : examples)
      if (ex.features.size() != d)
        throw ConfigError("data shard of client " + std::to_string(owner_client) +
                          " has ragged feature vectors");
  }
};

enum class TaskKind { quadratic, logistic, mlp };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::quadratic: return "quadratic";
    case TaskKind::logistic: return "logistic";
    case TaskKind::mlp: return "mlp";
  }
  return "?";
}

/// A differentiable local objective F_i(x) = mean over the shard of a
/// per-example loss.
///
/// quadratic: per-example loss  row_weight * 0.5 * (a^T x - b)^2.
///   With row_weight = |shard| the objective is 0.5 * ||A x - b||^2 over
///   the rows of A; with row_weight = 1 it is the half mean squared error.
/// logistic: log(1 + exp(a^T x)) - y * a^T x with y in {0, 1}.
/// mlp: 0.5 * (v^T tanh(W a + c) + b0 - y)^2, parameters laid out as
///   [W (hidden x in, row-major) | c (hidden) | v (hidden) | b0].
struct Task {
  TaskKind kind = TaskKind::quadratic;
  DataShard shard;
  /// Examples per stochastic gradient; 0 means the whole shard.
  std::size_t minibatch_size = 0;
  double row_weight = 1.0;
  std::size_t hidden = 0;

  std::size_t param_dim() const {
    const std::size_t in = shard.feature_dim();
    if (kind == TaskKind::mlp) return hidden * in + 2 * hidden + 1;
    return in;
  }

  std::size_t batch() const noexcept {
    return minibatch_size == 0 ? shard.size() : minibatch_size;
  }

  void validate() const {
    shard.validate();
    if (kind == TaskKind::mlp && hidden == 0) throw ConfigError("mlp task needs hidden width >= 1");
    if (kind == TaskKind::logistic)
      for (const auto& ex : shard.examples)
        if (ex.target != 0.0 && ex.target != 1.0)
          throw ConfigError("logistic task needs labels in {0, 1}");
  }
};

/// Quadratic task 0.5 * ||A x - b||^2 whose examples are the rows of A.
inline Task make_quadratic(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, ClientId owner = 0) {
  if (a.rows() != b.size() || a.rows() == 0) throw ConfigError("quadratic: A and b row counts differ");
  Task task;
  task.kind = TaskKind::quadratic;
  task.shard.owner_client = owner;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Example ex;
    ex.features.resize(static_cast<std::size_t>(a.cols()));
    for (Eigen::Index c = 0; c < a.cols(); ++c) ex.features[static_cast<std::size_t>(c)] = a(r, c);
    ex.target = b(r);
    task.shard.examples.push_back(std::move(ex));
  }
  task.row_weight = static_cast<double>(a.rows());
  return task;
}

/// Least-squares regression on a labeled shard (half mean squared error).
inline Task make_least_squares(DataShard shard) {
  Task task;
  task.kind = TaskKind::quadratic;
  task.shard = std::move(shard);
  task.row_weight = 1.0;
  return task;
}

inline Task make_logistic(DataShard shard) {
  Task task;
  task.kind = TaskKind::logistic;
  task.shard = std::move(shard);
  return task;
}

inline Task make_mlp(DataShard shard, std::size_t hidden) {
  Task task;
  task.kind = TaskKind::mlp;
  task.shard = std::move(shard);
  task.hidden = hidden;
  return task;
}

enum class NoiseSource { minibatch, gaussian };

/// Gradient noise: minibatch subsampling (always active when the task's
/// minibatch is smaller than its shard) plus optional additive N(0, sigma^2 I).
struct NoiseModel {
  NoiseSource source = NoiseSource::minibatch;
  double sigma = 0.0;
  std::optional<std::uint64_t> seed;

  static NoiseModel seeded(std::uint64_t s, double sigma = 0.0) {
    NoiseModel n;
    n.source = sigma > 0.0 ? NoiseSource::gaussian : NoiseSource::minibatch;
    n.sigma = sigma;
    n.seed = s;
    return n;
  }
};

namespace detail {

inline void check_param_dim(const Task& task, const ParamVector& x) {
  if (x.dim() != task.param_dim())
    throw ConfigError("parameter dimension " + std::to_string(x.dim()) + " does not match task dimension " +
                      std::to_string(task.param_dim()));
}

inline double dot_features(const std::vector<double>& a, const ParamVector& x) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * x[k];
  return s;
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

inline double example_loss(const Task& task, const Example& ex, const ParamVector& x) {
  switch (task.kind) {
    case TaskKind::quadratic: {
      const double r = dot_features(ex.features, x) - ex.target;
      return task.row_weight * 0.5 * r * r;
    }
    case TaskKind::logistic: {
      const double z = dot_features(ex.features, x);
      return softplus(z) - ex.target * z;
    }
    case TaskKind::mlp: {
      const std::size_t in = ex.features.size();
      const std::size_t hw = task.hidden;
      const std::size_t c_off = hw * in, v_off = c_off + hw, b_off = v_off + hw;
      double out = x[b_off];
      for (std::size_t j = 0; j < hw; ++j) {
        double pre = x[c_off + j];
        for (std::size_t k = 0; k < in; ++k) pre += x[j * in + k] * ex.features[k];
        out += x[v_off + j] * std::tanh(pre);
      }
      const double r = out - ex.target;
      return 0.5 * r * r;
    }
  }
  return 0.0;
}

/// grad += per-example gradient.
inline void accumulate_example_gradient(const Task& task, const Example& ex, const ParamVector& x,
                                        ParamVector& grad) {
  switch (task.kind) {
    case TaskKind::quadratic: {
      const double r = task.row_weight * (dot_features(ex.features, x) - ex.target);
      for (std::size_t k = 0; k < ex.features.size(); ++k) grad[k] += r * ex.features[k];
      return;
    }
    case TaskKind::logistic: {
      const double r = sigmoid(dot_features(ex.features, x)) - ex.target;
      for (std::size_t k = 0; k < ex.features.size(); ++k) grad[k] += r * ex.features[k];
      return;
    }
    case TaskKind::mlp: {
      const std::size_t in = ex.features.size();
      const std::size_t hw = task.hidden;
      const std::size_t c_off = hw * in, v_off = c_off + hw, b_off = v_off + hw;
      std::vector<double> act(hw);
      double out = x[b_off];
      for (std::size_t j = 0; j < hw; ++j) {
        double pre = x[c_off + j];
        for (std::size_t k = 0; k < in; ++k) pre += x[j * in + k] * ex.features[k];
        act[j] = std::tanh(pre);
        out += x[v_off + j] * act[j];
      }
      const double r = out - ex.target;
      grad[b_off] += r;
      for (std::size_t j = 0; j < hw; ++j) {
        grad[v_off + j] += r * act[j];
        const double back = r * x[v_off + j] * (1.0 - act[j] * act[j]);
        grad[c_off + j] += back;
        for (std::size_t k = 0; k < in; ++k) grad[j * in + k] += back * ex.features[k];
      }
      return;
    }
  }
}

}  // namespace detail

/// Average per-example loss over the shard.
inline double loss_eval(const Task& task, const ParamVector& x) {
  detail::check_param_dim(task, x);
  double s = 0.0;
  for (const auto& ex : task.shard.examples) s += detail::example_loss(task, ex, x);
  return s / static_cast<double>(task.shard.size());
}

/// Exact average gradient over the shard.
inline ParamVector full_gradient(const Task& task, const ParamVector& x) {
  detail::check_param_dim(task, x);
  ParamVector g(x.dim());
  for (const auto& ex : task.shard.examples) detail::accumulate_example_gradient(task, ex, x, g);
  return g / static_cast<double>(task.shard.size());
}

/// Unbiased stochastic gradient for draw `idx` of the shard's owner.
///
/// Minibatch examples are drawn uniformly with replacement. The result is a
/// pure function of (noise seed, owner client, idx, x), and with a full
/// shard batch and sigma = 0 it is exactly full_gradient(task, x).
inline ParamVector stochastic_gradient(const Task& task, const ParamVector& x, const NoiseModel& noise,
                                       DrawIndex idx) {
  if (!noise.seed) throw ConfigError("stochastic gradient requested with an uninitialized rng stream");
  detail::check_param_dim(task, x);
  const std::size_t m = task.shard.size();
  const std::size_t b = task.batch();
  const bool subsample = b < m;
  const bool additive = noise.source == NoiseSource::gaussian && noise.sigma > 0.0;
  if (!subsample && !additive) return full_gradient(task, x);

  KeyedStream rng(*noise.seed, task.shard.owner_client, idx);
  ParamVector g(x.dim());
  if (subsample) {
    for (std::size_t s = 0; s < b; ++s)
      detail::accumulate_example_gradient(task, task.shard.examples[rng.below(m)], x, g);
    g /= static_cast<double>(b);
  } else {
    g = full_gradient(task, x);
  }
  if (additive)
    for (std::size_t k = 0; k < g.dim(); ++k) g[k] += noise.sigma * rng.normal();
  return g;
}

/// Hessian of a quadratic task, (row_weight / m) * A^T A.
inline Eigen::MatrixXd quadratic_hessian(const Task& task) {
  if (task.kind != TaskKind::quadratic) throw ConfigError("hessian requested for a non-quadratic task");
  const auto d = static_cast<Eigen::Index>(task.param_dim());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (const auto& ex : task.shard.examples) {
    Eigen::Map<const Eigen::VectorXd> a(ex.features.data(), d);
    h.noalias() += a * a.transpose();
  }
  return h * (task.row_weight / static_cast<double>(task.shard.size()));
}

/// Linear term of a quadratic task, (row_weight / m) * A^T b.
inline Eigen::VectorXd quadratic_linear_term(const Task& task) {
  const auto d = static_cast<Eigen::Index>(task.param_dim());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  for (const auto& ex : task.shard.examples) {
    Eigen::Map<const Eigen::VectorXd> a(ex.features.data(), d);
    v += ex.target * a;
  }
  return v * (task.row_weight / static_cast<double>(task.shard.size()));
}

struct PowerIterationOptions {
  std::size_t max_iterations = 2000;
  double tolerance = 1e-9;
  double fd_step = 1e-5;
  std::uint64_t seed = 7;
};

/// Smoothness constant L of the task.
///
/// Quadratic: exact lambda_max of the Hessian. Otherwise: power iteration on
/// finite-difference Hessian-vector products at `probe` (default x = 0),
/// returning the dominant |eigenvalue|.
inline double lipschitz_constant(const Task& task, std::optional<ParamVector> probe = std::nullopt,
                                 const PowerIterationOptions& opts = {}) {
  task.validate();
  if (task.kind == TaskKind::quadratic) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(quadratic_hessian(task), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  const std::size_t d = task.param_dim();
  const ParamVector x0 = probe.value_or(ParamVector(d));
  detail::check_param_dim(task, x0);

  KeyedStream rng(opts.seed, 0);
  ParamVector v(d);
  for (std::size_t k = 0; k < d; ++k) v[k] = rng.normal();
  v /= v.norm();

  std::vector<double> trace;
  double prev = 0.0;
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    ParamVector plus = x0, minus = x0;
    plus.axpy(opts.fd_step, v);
    minus.axpy(-opts.fd_step, v);
    ParamVector hv = (full_gradient(task, plus) - full_gradient(task, minus)) / (2.0 * opts.fd_step);
    const double lambda = hv.norm();
    trace.push_back(lambda);
    if (!std::isfinite(lambda)) break;
    if (lambda == 0.0) return 0.0;
    v = hv / lambda;
    if (it > 0 && std::abs(lambda - prev) <= opts.tolerance * std::max(1.0, lambda)) return lambda;
    prev = lambda;
  }
  throw EstimateFailed("power iteration for the smoothness constant did not converge", std::move(trace));
}

}  // namespace mtgc

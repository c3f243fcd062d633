// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace mtgc;
using namespace mtgc::testing;

namespace {

Task identity2() { return diag_quadratic({1.0, 1.0}, {0.0, 0.0}); }

ParamVector fd_gradient(const Task& task, const ParamVector& x, double h = 1e-6) {
  ParamVector g(x.dim());
  for (std::size_t k = 0; k < x.dim(); ++k) {
    ParamVector p = x, m = x;
    p[k] += h;
    m[k] -= h;
    g[k] = (loss_eval(task, p) - loss_eval(task, m)) / (2.0 * h);
  }
  return g;
}

std::vector<Task> every_kind() {
  std::vector<Task> tasks;
  tasks.push_back(diag_quadratic({2.0, 1.0, 0.5}, {1.0, -1.0, 0.25}));
  tasks.push_back(make_least_squares(random_shard(12, 4, 1)));
  tasks.push_back(make_logistic(random_shard(12, 4, 2)));
  tasks.push_back(make_mlp(random_shard(12, 3, 3), 4));
  return tasks;
}

}  // namespace

TEST(ParamVector, ArithmeticRequiresMatchingDimension) {
  ParamVector a{1.0, 2.0};
  ParamVector b{1.0, 2.0, 3.0};
  EXPECT_THROW(a += b, ConfigError);
  EXPECT_THROW((void)a.dot(b), ConfigError);
  EXPECT_EQ(a + (ParamVector{1.0, 1.0}), (ParamVector{2.0, 3.0}));
}

TEST(LossEval, ZeroResidual) { EXPECT_EQ(loss_eval(identity2(), ParamVector{0.0, 0.0}), 0.0); }

TEST(LossEval, HalfSquaredDistance) { EXPECT_DOUBLE_EQ(loss_eval(identity2(), ParamVector{1.0, 0.0}), 0.5); }

TEST(LossEval, LogisticAtZeroIsLogTwo) {
  DataShard s;
  s.examples.push_back(Example{{0.0}, 0.0});
  EXPECT_NEAR(loss_eval(make_logistic(s), ParamVector{0.0}), std::log(2.0), 1e-15);
}

TEST(LossEval, DimensionMismatch) { EXPECT_THROW(loss_eval(identity2(), ParamVector{1.0}), ConfigError); }

TEST(FullGradient, IdentityQuadratic) { EXPECT_EQ(full_gradient(identity2(), ParamVector{1.0, 2.0}), (ParamVector{1.0, 2.0})); }

TEST(FullGradient, DiagonalQuadratic) {
  const Task t = diag_quadratic({2.0, 1.0}, {0.0, 0.0});
  EXPECT_EQ(full_gradient(t, ParamVector{1.0, 1.0}), (ParamVector{4.0, 1.0}));
}

TEST(FullGradient, MatchesFiniteDifferencesForEveryKind) {
  for (const Task& task : every_kind()) {
    for (std::uint64_t p = 0; p < 5; ++p) {
      const ParamVector x = random_point(task.param_dim(), 10 + p, 0.7);
      const ParamVector g = full_gradient(task, x);
      const ParamVector fd = fd_gradient(task, x);
      const double rel = (g - fd).norm() / std::max(1e-8, g.norm());
      EXPECT_LT(rel, 1e-5) << to_string(task.kind) << " point " << p;
    }
  }
}

TEST(FullGradient, AverageOfPerExampleGradients) {
  const Task task = make_logistic(random_shard(7, 3, 5));
  const ParamVector x = random_point(3, 6);
  ParamVector sum(3);
  for (const auto& ex : task.shard.examples) {
    Task one = task;
    one.shard.examples = {ex};
    sum += full_gradient(one, x);
  }
  sum /= 7.0;
  EXPECT_LT(max_abs_diff(sum, full_gradient(task, x)), 1e-14);
}

TEST(StochasticGradient, FullBatchWithoutNoiseIsExact) {
  for (const Task& task : every_kind()) {
    const ParamVector x = random_point(task.param_dim(), 3);
    EXPECT_EQ(stochastic_gradient(task, x, NoiseModel::seeded(1), DrawIndex{2, 1, 0}), full_gradient(task, x));
  }
}

TEST(StochasticGradient, UninitializedStreamIsRejected) {
  EXPECT_THROW(stochastic_gradient(identity2(), ParamVector{1.0, 1.0}, NoiseModel{}, DrawIndex{}), ConfigError);
}

TEST(StochasticGradient, SameKeySameBytes) {
  Task task = make_least_squares(random_shard(20, 4, 8, 3));
  task.minibatch_size = 3;
  const ParamVector x = random_point(4, 1);
  const auto noise = NoiseModel::seeded(77, 0.5);
  const ParamVector a = stochastic_gradient(task, x, noise, DrawIndex{4, 2, 1});
  const ParamVector b = stochastic_gradient(task, x, noise, DrawIndex{4, 2, 1});
  EXPECT_EQ(std::memcmp(a.values().data(), b.values().data(), sizeof(double) * a.dim()), 0);
  EXPECT_NE(a, stochastic_gradient(task, x, noise, DrawIndex{4, 2, 2}));
}

TEST(StochasticGradient, MonteCarloMeanIsUnbiased) {
  Task task = make_logistic(random_shard(10, 3, 9, 2));
  task.minibatch_size = 2;
  const ParamVector x = random_point(3, 2, 0.5);
  const auto noise = NoiseModel::seeded(5, 0.3);
  const std::size_t n = 10000;
  std::vector<ParamVector> draws;
  for (std::size_t k = 0; k < n; ++k) draws.push_back(stochastic_gradient(task, x, noise, DrawIndex{k, 0, 0}));
  const ParamVector mean = mean_of(draws);
  double var = 0.0;
  for (const auto& g : draws) var += distance_sq(g, mean);
  const double sigma = std::sqrt(var / static_cast<double>(n - 1));
  EXPECT_LT((mean - full_gradient(task, x)).norm(), 3.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST(Lipschitz, DiagonalQuadratic) { EXPECT_NEAR(lipschitz_constant(diag_quadratic({2.0, 1.0}, {0.0, 0.0})), 4.0, 1e-12); }

TEST(Lipschitz, Identity) { EXPECT_NEAR(lipschitz_constant(identity2()), 1.0, 1e-12); }

TEST(Lipschitz, LogisticWithinClassicalBound) {
  const Task task = make_logistic(random_shard(30, 4, 11));
  double r2 = 0.0;
  for (const auto& ex : task.shard.examples) {
    double s = 0.0;
    for (double f : ex.features) s += f * f;
    r2 = std::max(r2, s);
  }
  const double l = lipschitz_constant(task);
  EXPECT_GT(l, 0.0);
  EXPECT_LE(l, r2 / 4.0 * (1.0 + 1e-6));
}

TEST(Lipschitz, NonConvergenceCarriesTrace) {
  PowerIterationOptions opts;
  opts.max_iterations = 2;
  opts.tolerance = 0.0;
  try {
    (void)lipschitz_constant(make_mlp(random_shard(8, 3, 4), 3), std::nullopt, opts);
    FAIL() << "expected EstimateFailed";
  } catch (const EstimateFailed& e) {
    EXPECT_EQ(e.trace().size(), 2u);
  }
}

TEST(Lipschitz, SmoothnessHoldsOnRandomPairs) {
  const Task task = make_least_squares(random_shard(15, 5, 12));
  const double l = lipschitz_constant(task);
  for (std::uint64_t p = 0; p < 100; ++p) {
    const ParamVector x = random_point(5, 1000 + p, 2.0);
    const ParamVector y = random_point(5, 5000 + p, 2.0);
    EXPECT_LE((full_gradient(task, x) - full_gradient(task, y)).norm(), l * (x - y).norm() * (1.0 + 1e-12));
  }
}

TEST(ClosedFormOptimum, SymmetricPair) {
  const std::vector<Task> tasks{scalar_quadratic(1.0, 1.0), scalar_quadratic(1.0, -1.0)};
  EXPECT_NEAR(closed_form_optimum(tasks, {0.5, 0.5})[0], 0.0, 1e-15);
}

TEST(ClosedFormOptimum, MidpointOfTwoAndFour) {
  const std::vector<Task> tasks{scalar_quadratic(1.0, 2.0), scalar_quadratic(1.0, 4.0)};
  EXPECT_NEAR(closed_form_optimum(tasks, {0.5, 0.5})[0], 3.0, 1e-14);
}

TEST(ClosedFormOptimum, GradientVanishes) {
  const Topology topo = build_topology(3, std::vector<std::size_t>{2, 3, 1});
  QuadraticInstanceOptions opts;
  opts.curvature_spread = 0.8;
  const auto tasks = synth_heterogeneous_quadratics(topo, 6, 3.0, 2.0, 17, opts);
  const ParamVector xs = closed_form_optimum(tasks, topo);
  EXPECT_LT(global_gradient(tasks, topo, xs).norm(), 1e-10);
}

TEST(ClosedFormOptimum, SingularSystem) {
  const std::vector<Task> tasks{diag_quadratic({1.0, 0.0}, {1.0, 0.0})};
  EXPECT_THROW(closed_form_optimum(tasks, {1.0}), DegenerateInstance);
}

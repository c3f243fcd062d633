// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace mtgc;
using namespace mtgc::testing;

namespace {

const std::string kData = MTGC_TEST_DATA;

/// Labels k % n_labels, features (1, noise, noise).
LabeledDataset toy_labeled(std::size_t n, std::size_t n_labels, std::uint64_t seed) {
  KeyedStream rng(seed, 5);
  LabeledDataset ds;
  for (std::size_t k = 0; k < n; ++k)
    ds.examples.push_back(Example{{1.0, 0.1 * rng.normal(), 0.1 * rng.normal()}, static_cast<double>(k % n_labels)});
  return ds;
}

std::vector<Task> least_squares_tasks(std::vector<DataShard> shards) {
  std::vector<Task> tasks;
  for (auto& s : shards) tasks.push_back(make_least_squares(std::move(s)));
  return tasks;
}

std::string golden_text(const std::vector<std::vector<std::size_t>>& parts) {
  std::ostringstream o;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    o << c << ':';
    for (std::size_t i : parts[c]) o << ' ' << i;
    o << '\n';
  }
  return o.str();
}

}  // namespace

TEST(BuildTopology, SingleClient) {
  const Topology t = build_topology(1, std::vector<std::size_t>{1});
  EXPECT_EQ(t.n_groups(), 1u);
  EXPECT_EQ(t.n_clients(), 1u);
}

TEST(BuildTopology, HundredClientsInTenGroups) {
  const Topology t = build_topology(10, std::vector<std::size_t>(10, 10));
  EXPECT_EQ(t.n_clients(), 100u);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(t.group_size(j), 10u);
}

TEST(BuildTopology, UnequalGroupsAreDisjoint) {
  const Topology t = build_topology(2, std::vector<std::size_t>{3, 5});
  EXPECT_EQ(t.group_size(0), 3u);
  EXPECT_EQ(t.group_size(1), 5u);
  std::set<ClientId> seen;
  for (const auto& g : t.groups())
    for (ClientId c : g) EXPECT_TRUE(seen.insert(c).second);
  EXPECT_EQ(seen.size(), 8u);
}

TEST(BuildTopology, ZeroSizesRejected) {
  EXPECT_THROW(build_topology(0, std::vector<std::size_t>{}), ConfigError);
  EXPECT_THROW(build_topology(2, std::vector<std::size_t>{3, 0}), ConfigError);
  EXPECT_THROW(Topology({{0, 1}, {1}}), ConfigError);
}

TEST(MultiLevelTopology, PeriodsMustDivide) {
  EXPECT_NO_THROW((MultiLevelTopology{{2, 2, 2}, {8, 4, 2}}.validate()));
  EXPECT_THROW((MultiLevelTopology{{2, 2}, {6, 4}}.validate()), ConfigError);
  EXPECT_THROW((MultiLevelTopology{{2, 2}, {4, 4}}.validate()), ConfigError);
  EXPECT_THROW((MultiLevelTopology{{2, 2}, {4}}.validate()), ConfigError);
}

TEST(PartitionDataset, TenExamplesTwoClients) {
  const auto ds = toy_labeled(10, 2, 1);
  const Topology topo = build_topology(1, 2);
  for (auto regime : {Regime::group_iid_client_noniid, Regime::group_noniid_client_iid,
                      Regime::group_noniid_client_noniid}) {
    const auto shards = partition_dataset(ds, topo, PartitionPlan{regime, 0.5, 3});
    EXPECT_EQ(shards[0].size() + shards[1].size(), 10u);
  }
}

TEST(PartitionDataset, ConservationAndDisjointness) {
  const auto ds = toy_labeled(200, 5, 2);
  const Topology topo = build_topology(3, std::vector<std::size_t>{2, 3, 4});
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (auto regime : {Regime::group_iid_client_noniid, Regime::group_noniid_client_iid,
                        Regime::group_noniid_client_noniid}) {
      const auto parts = partition_indices(ds, topo, PartitionPlan{regime, 0.1, seed});
      std::vector<int> count(ds.size(), 0);
      for (const auto& p : parts) {
        EXPECT_FALSE(p.empty());
        for (std::size_t i : p) ++count[i];
      }
      for (int c : count) EXPECT_EQ(c, 1);
    }
}

TEST(PartitionDataset, Deterministic) {
  const auto ds = toy_labeled(60, 3, 4);
  const Topology topo = build_topology(2, 3);
  const PartitionPlan plan{Regime::group_noniid_client_noniid, 0.1, 9};
  EXPECT_EQ(partition_indices(ds, topo, plan), partition_indices(ds, topo, plan));
}

TEST(PartitionDataset, LargeAlphaMatchesGlobalHistogram) {
  const auto ds = toy_labeled(4000, 4, 6);
  const Topology topo = build_topology(2, 2);
  const auto shards = partition_dataset(ds, topo, PartitionPlan{Regime::group_noniid_client_noniid, 1e6, 1});
  for (const auto& s : shards) {
    std::vector<double> hist(4, 0.0);
    for (const auto& ex : s.examples) hist[static_cast<std::size_t>(ex.target)] += 1.0;
    for (double h : hist) EXPECT_NEAR(h / static_cast<double>(s.size()), 0.25, 0.05);
  }
}

TEST(PartitionDataset, EmptyClientsExhaustRetries) {
  const auto ds = toy_labeled(4, 2, 1);
  const Topology topo = build_topology(2, 2);
  PartitionPlan plan{Regime::group_noniid_client_noniid, 0.01, 3, 2};
  EXPECT_THROW(partition_dataset(ds, topo, plan), PartitionFailed);
}

TEST(PartitionDataset, GoldenAssignment) {
  const auto ds = load_labeled_csv(kData + "/toy4.csv");
  ASSERT_EQ(ds.size(), 20u);
  ASSERT_EQ(ds.labels().size(), 4u);
  const auto parts = partition_indices(ds, build_topology(2, 2), PartitionPlan{Regime::group_noniid_client_noniid, 0.1, 42});
  std::ifstream in(kData + "/partition_golden.txt");
  ASSERT_TRUE(in) << "missing golden file";
  std::stringstream golden;
  golden << in.rdbuf();
  EXPECT_EQ(golden_text(parts), golden.str());
}

TEST(PartitionDataset, RegimeOrderingOfDissimilarity) {
  const auto ds = toy_labeled(800, 4, 8);
  const Topology topo = build_topology(2, 4);
  auto measure = [&](Regime r) {
    DissimilarityReport sum;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto tasks = least_squares_tasks(partition_dataset(ds, topo, PartitionPlan{r, 0.1, seed}));
      const auto rep = gradient_dissimilarity(tasks, topo, closed_form_optimum(tasks, topo));
      sum.delta1_sq += rep.delta1_sq;
      sum.delta2_sq_max += std::accumulate(rep.delta2_sq_per_group.begin(), rep.delta2_sq_per_group.end(), 0.0);
    }
    return sum;
  };
  const auto client_skew = measure(Regime::group_iid_client_noniid);
  const auto group_skew = measure(Regime::group_noniid_client_iid);
  EXPECT_GT(client_skew.delta2_sq_max, group_skew.delta2_sq_max);
  EXPECT_GT(group_skew.delta1_sq, client_skew.delta1_sq);
}

TEST(LabeledCsv, HeaderBomAndRaggedRows) {
  std::istringstream ok("\xEF\xBB\xBFlabel,a,b\r\n1,0.5,2\n0,1,1\n");
  const auto ds = parse_labeled_csv(ok);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.examples[0].target, 1.0);
  EXPECT_EQ(ds.examples[0].features, (std::vector<double>{0.5, 2.0}));
  std::istringstream ragged("1,2,3\n0,1\n");
  EXPECT_THROW(parse_labeled_csv(ragged), ConfigError);
  EXPECT_THROW(load_labeled_csv(kData + "/does_not_exist.csv"), IoError);
}

TEST(SynthQuadratics, HomogeneousLimit) {
  const Topology topo = build_topology(3, 3);
  const auto tasks = synth_heterogeneous_quadratics(topo, 4, 0.0, 0.0, 5);
  const auto rep = gradient_dissimilarity(tasks, topo, closed_form_optimum(tasks, topo));
  EXPECT_LT(rep.delta1_sq, 1e-24);
  EXPECT_LT(rep.delta2_sq_max, 1e-24);
}

TEST(SynthQuadratics, ClientShiftOnlyAtOptimum) {
  const Topology topo = build_topology(3, 3);
  const auto tasks = synth_heterogeneous_quadratics(topo, 4, 0.0, 1.5, 5);
  const auto rep = gradient_dissimilarity(tasks, topo, closed_form_optimum(tasks, topo));
  EXPECT_LT(rep.delta1_sq, 1e-20);
  EXPECT_GT(rep.delta2_sq_max, 0.1);
}

TEST(SynthQuadratics, OneDimensionalGroupOptima) {
  const Topology topo = build_topology(2, 1);
  QuadraticInstanceOptions opts;
  opts.center = ParamVector{0.75};
  const auto tasks = synth_heterogeneous_quadratics(topo, 1, 1.0, 0.0, 3, opts);
  // two balanced directions in 1-D with unit RMS norm are +1 and -1
  const double a = full_gradient(tasks[0], ParamVector{0.75})[0];
  std::vector<double> optima;
  for (const auto& t : tasks) optima.push_back(closed_form_optimum({t}, {1.0})[0]);
  std::sort(optima.begin(), optima.end());
  EXPECT_NEAR(optima[0], -0.25, 1e-12);
  EXPECT_NEAR(optima[1], 1.75, 1e-12);
  EXPECT_NE(a, 0.0);
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mtgc/errors.hpp"
#include "mtgc/rng.hpp"
#include "mtgc/task.hpp"
#include "mtgc/topology.hpp"

namespace mtgc {

enum class Regime { group_iid_client_noniid, group_noniid_client_iid, group_noniid_client_noniid };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::group_iid_client_noniid: return "group-iid/client-noniid";
    case Regime::group_noniid_client_iid: return "group-noniid/client-iid";
    case Regime::group_noniid_client_noniid: return "group-noniid/client-noniid";
  }
  return "?";
}

struct PartitionPlan {
  Regime regime = Regime::group_noniid_client_noniid;
  double dirichlet_alpha = 0.1;
  std::uint64_t seed = 0;
  std::size_t max_retries = 100;
  bool operator==(const PartitionPlan&) const = default;
};

/// Labeled examples; the label is stored as Example::target.
struct LabeledDataset {
  std::vector<Example> examples;

  std::size_t size() const noexcept { return examples.size(); }
  std::vector<double> labels() const {
    std::vector<double> out;
    for (const auto& ex : examples) out.push_back(ex.target);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

/// Reads `label,feature_1,...,feature_d` lines. A first line whose label
/// field is not numeric is taken as a header. Blank lines are skipped.
inline LabeledDataset parse_labeled_csv(std::istream& in, const std::string& name = "<csv>") {
  LabeledDataset ds;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        fields.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (ds.examples.empty() && lineno == 1) continue;
      throw ConfigError(name + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (fields.size() < 2) throw ConfigError(name + ":" + std::to_string(lineno) + ": need a label and a feature");
    if (width == 0) width = fields.size();
    if (fields.size() != width) throw ConfigError(name + ":" + std::to_string(lineno) + ": ragged row");
    Example ex;
    ex.target = fields.front();
    ex.features.assign(fields.begin() + 1, fields.end());
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw ConfigError(name + ": no examples");
  return ds;
}

inline LabeledDataset load_labeled_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path);
  return parse_labeled_csv(in, path);
}

namespace detail {

/// Gamma(shape, 1) by Marsaglia-Tsang, boosted for shape < 1.
inline double gamma_sample(double shape, KeyedStream& rng) {
  if (shape < 1.0) {
    const double u = rng.uniform();
    return gamma_sample(shape + 1.0, rng) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline std::vector<double> dirichlet_sample(std::size_t k, double alpha, KeyedStream& rng) {
  std::vector<double> p(k);
  double s = 0.0;
  for (auto& v : p) s += (v = gamma_sample(alpha, rng));
  if (s > 0.0)
    for (auto& v : p) v /= s;
  else
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(k));
  return p;
}

/// Integer counts summing to `total`, proportional to `weights`, by largest
/// remainder (ties to the lower index).
inline std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = wsum > 0.0 ? static_cast<double>(total) * weights[k] / wsum
                                    : static_cast<double>(total) / static_cast<double>(weights.size());
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    rema.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[rema[r % rema.size()].second];
  return counts;
}

inline void shuffle(std::vector<std::size_t>& v, KeyedStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

/// Uniform random split of `items` into parts with sizes proportional to `weights`.
inline std::vector<std::vector<std::size_t>> uniform_split(std::vector<std::size_t> items,
                                                           const std::vector<double>& weights, KeyedStream& rng) {
  shuffle(items, rng);
  const auto counts = largest_remainder(items.size(), weights);
  std::vector<std::vector<std::size_t>> parts(weights.size());
  std::size_t pos = 0;
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (std::size_t c = 0; c < counts[k]; ++c) parts[k].push_back(items[pos++]);
  return parts;
}

/// Label-skewed split: each target draws a label-proportion vector from
/// Dirichlet(alpha); every label's examples are shared among targets in
/// proportion to the targets' weight on that label.
inline std::vector<std::vector<std::size_t>> dirichlet_split(const std::vector<std::size_t>& items,
                                                             std::size_t n_targets, const LabeledDataset& ds,
                                                             const std::vector<double>& label_values,
                                                             double alpha, KeyedStream& rng) {
  const std::size_t n_labels = label_values.size();
  std::vector<std::vector<double>> props(n_targets);
  for (auto& p : props) p = dirichlet_sample(n_labels, alpha, rng);

  std::vector<std::vector<std::size_t>> by_label(n_labels);
  for (std::size_t idx : items) {
    const auto it = std::lower_bound(label_values.begin(), label_values.end(), ds.examples[idx].target);
    by_label[static_cast<std::size_t>(it - label_values.begin())].push_back(idx);
  }
  std::vector<std::vector<std::size_t>> parts(n_targets);
  for (std::size_t c = 0; c < n_labels; ++c) {
    std::vector<double> w(n_targets);
    for (std::size_t k = 0; k < n_targets; ++k) w[k] = props[k][c];
    shuffle(by_label[c], rng);
    const auto counts = largest_remainder(by_label[c].size(), w);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < n_targets; ++k)
      for (std::size_t r = 0; r < counts[k]; ++r) parts[k].push_back(by_label[c][pos++]);
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

}  // namespace detail

/// Assigns every example to exactly one client following the plan's regime.
/// Draws that leave some client empty are retried with a fresh stream up to
/// plan.max_retries times before failing.
inline std::vector<DataShard> partition_dataset(const LabeledDataset& ds, const Topology& topo,
                                                const PartitionPlan& plan) {
  if (ds.examples.empty()) throw ConfigError("cannot partition an empty dataset");
  if (!(plan.dirichlet_alpha > 0.0)) throw ConfigError("dirichlet_alpha must be > 0");
  if (ds.size() < topo.n_clients())
    throw PartitionFailed("dataset has fewer examples than clients");
  const auto labels = ds.labels();
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> group_weights;
  for (std::size_t j = 0; j < topo.n_groups(); ++j) group_weights.push_back(static_cast<double>(topo.group_size(j)));

  for (std::size_t attempt = 0; attempt <= plan.max_retries; ++attempt) {
    KeyedStream rng(plan.seed, 0x9A27 + attempt);
    const bool group_skew = plan.regime != Regime::group_iid_client_noniid;
    const bool client_skew = plan.regime != Regime::group_noniid_client_iid;
    auto group_parts = group_skew
                           ? detail::dirichlet_split(all, topo.n_groups(), ds, labels, plan.dirichlet_alpha, rng)
                           : detail::uniform_split(all, group_weights, rng);
    std::vector<DataShard> shards(topo.n_clients());
    bool empty = false;
    for (std::size_t j = 0; j < topo.n_groups() && !empty; ++j) {
      const std::size_t nj = topo.group_size(j);
      auto client_parts =
          client_skew ? detail::dirichlet_split(group_parts[j], nj, ds, labels, plan.dirichlet_alpha, rng)
                      : detail::uniform_split(group_parts[j], std::vector<double>(nj, 1.0), rng);
      for (std::size_t i = 0; i < nj; ++i) {
        const ClientId c = topo.group(j)[i];
        if (client_parts[i].empty()) {
          empty = true;
          break;
        }
        std::sort(client_parts[i].begin(), client_parts[i].end());
        shards[c].owner_client = c;
        for (std::size_t idx : client_parts[i]) shards[c].examples.push_back(ds.examples[idx]);
      }
    }
    if (!empty) return shards;
  }
  throw PartitionFailed("every partition attempt left a client without examples (" +
                        std::to_string(plan.max_retries + 1) + " attempts)");
}

/// Example indices per client for the same draw as partition_dataset; used
/// by tests and the golden assignment file.
inline std::vector<std::vector<std::size_t>> partition_indices(const LabeledDataset& ds, const Topology& topo,
                                                               const PartitionPlan& plan) {
  LabeledDataset tagged = ds;
  for (std::size_t k = 0; k < tagged.examples.size(); ++k)
    tagged.examples[k].features.assign(1, static_cast<double>(k));
  // features are unused by the split; reuse them to carry the index
  const auto shards = partition_dataset(tagged, topo, plan);
  std::vector<std::vector<std::size_t>> out;
  for (const auto& s : shards) {
    std::vector<std::size_t> idx;
    for (const auto& ex : s.examples) idx.push_back(static_cast<std::size_t>(ex.features[0]));
    out.push_back(std::move(idx));
  }
  return out;
}

}  // namespace mtgc

// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"

using namespace mtgc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mtgc_cli_io_" + name + "_" + std::to_string(std::random_device{}()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

ExperimentSpec small_spec(const fs::path& dir) {
  ExperimentSpec s = parse_config(
      "[task]\ndimension = 4\ncurvature_spread = 0.3\n"
      "[topology]\ngroups = 2\nclients_per_group = 3\n"
      "[train]\ngamma = 0.02\nT = 30\nE = 2\nH = 3\nnoise_sigma = 0.1\n"
      "[output]\nseeds = 0, 1, 2\nthreshold = 1e-2\n");
  s.output.dir = dir.string();
  return s;
}

MetricTrace geometric(double start, double ratio, std::size_t rows) {
  MetricTrace tr;
  double v = start;
  for (std::size_t k = 0; k < rows; ++k, v *= ratio) {
    MetricRow r;
    r.t = k;
    r.e = 0;
    r.grad_norm_sq = v;
    r.loss = v;
    tr.rows.push_back(r);
  }
  return tr;
}

}  // namespace

TEST(ParseConfig, MinimalConfigFillsDefaults) {
  const auto s = parse_config("[train]\ngamma = 0.1\n");
  EXPECT_EQ(s.train.T, 1u);
  EXPECT_EQ(s.train.E, 1u);
  EXPECT_EQ(s.train.H, 1u);
  EXPECT_EQ(s.topology.groups, 1u);
  EXPECT_EQ(s.topology.clients_per_group, 1u);
  EXPECT_EQ(s.train.gamma, 0.1);
  EXPECT_EQ(s.train.mode, CorrectionMode::full);
  EXPECT_EQ(s.output.seeds, std::vector<std::uint64_t>{0});
}

TEST(ParseConfig, MissingGammaIsNamed) {
  try {
    (void)parse_config("[train]\nT = 5\n");
    FAIL() << "expected ConfigParseError";
  } catch (const ConfigParseError& e) {
    ASSERT_EQ(e.issues().size(), 1u);
    EXPECT_NE(e.issues()[0].message.find("train.gamma"), std::string::npos);
  }
}

TEST(ParseConfig, CollectsEveryIssueWithPositions) {
  const std::string text =
      "[train]\n"
      "gamma = 0.1\n"
      "T = ten\n"
      "  bogus = 3\n"
      "[nowhere]\n"
      "mode = sideways\n";
  try {
    (void)parse_config(text);
    FAIL() << "expected ConfigParseError";
  } catch (const ConfigParseError& e) {
    const auto& is = e.issues();
    ASSERT_EQ(is.size(), 4u);
    EXPECT_EQ(is[0].line, 3u);
    EXPECT_EQ(is[0].column, 5u);
    EXPECT_NE(is[0].message.find("non-negative integer"), std::string::npos);
    EXPECT_EQ(is[1].line, 4u);
    EXPECT_EQ(is[1].column, 3u);
    EXPECT_NE(is[1].message.find("train.bogus"), std::string::npos);
    EXPECT_EQ(is[2].line, 5u);
    EXPECT_EQ(is[3].line, 6u);
    EXPECT_NE(std::string(e.what()).find("line 3, col 5"), std::string::npos);
  }
}

TEST(ParseConfig, CrossFieldChecks) {
  EXPECT_THROW(parse_config("[train]\ngamma = -1\n"), ConfigParseError);
  EXPECT_THROW(parse_config("[train]\ngamma = 0.1\nE = 0\n"), ConfigParseError);
  EXPECT_THROW(parse_config("[train]\ngamma = 0.1\n[topology]\nfanouts = 2, 2\nperiods = 4, 3\n"), ConfigParseError);
  EXPECT_THROW(parse_config("[train]\ngamma = 0.1\n[topology]\nperiods = 4\n"), ConfigParseError);
  EXPECT_THROW(parse_config("[train]\ngamma = 0.1\n[task]\nkind = logistic\n"), ConfigParseError);
  EXPECT_THROW(parse_config("[train]\ngamma = 0.1\ngamma = 0.2\n"), ConfigParseError);
  EXPECT_THROW(parse_config("[train]\ngamma = 0.1\n[sweep]\nE = 1, 2\n"), ConfigParseError);
  EXPECT_NO_THROW(parse_config("[train]\ngamma = 0.1\n[topology]\nfanouts = 2, 2\nperiods = 4, 2\n"));
}

TEST(ParseConfig, AutoGammaAndComments) {
  const auto s = parse_config("# header\n[train]   # trailing\ngamma = auto # resolved later\n");
  EXPECT_TRUE(s.gamma_auto);
  EXPECT_EQ(serialize(s).find("gamma = auto") != std::string::npos, true);
}

TEST(ParseConfig, GoldenFile) {
  const auto s = parse_config(read_text_file(std::string(MTGC_CONFIG_DIR) + "/golden.cfg"));
  ExperimentSpec want;
  want.task.dimension = 6;
  want.task.group_shift = 2.5;
  want.task.client_shift = 0.5;
  want.task.curvature_spread = 0.25;
  want.task.instance_seed = 11;
  want.topology.groups = 3;
  want.topology.clients_per_group = 2;
  want.partition.regime = Regime::group_noniid_client_iid;
  want.train.gamma = 0.01;
  want.train.T = 40;
  want.train.E = 2;
  want.train.H = 4;
  want.train.mode = CorrectionMode::client_only;
  want.train.z_init = CorrectionInit::batch_gradient;
  want.train.y_init = CorrectionInit::batch_gradient;
  want.train.noise_sigma = 0.05;
  want.train.metrics.drift = true;
  want.output.dir = "out/golden";
  want.output.seeds = {1, 2, 3};
  want.output.threshold = 1e-6;
  want.output.metric = ThresholdMetric::loss;
  EXPECT_EQ(s, want);
  EXPECT_EQ(parse_config(serialize(s)), s);
}

TEST(ParseConfig, RoundTripsAwkwardValues) {
  ExperimentSpec s;
  s.train.gamma = 0.1 + 0.2;
  s.task.center_norm = 1.0 / 3.0;
  s.task.level_shifts = {0.7, 1e-300, 12345.678};
  s.topology.fanouts = {2, 3, 2};
  s.topology.periods = {12, 6, 3};
  s.output.seeds = {0, 18446744073709551615ULL};
  s.output.threshold = 5e-324;
  s.task.dimension = 3;
  EXPECT_EQ(parse_config(serialize(s)), s);
}

TEST(ParseSweep, ExpandsCartesianProductLastAxisFastest) {
  const auto sweep = parse_sweep_config(
      "[train]\ngamma = 0.1\n[sweep]\nE = 1, 2, 4\nH = 5, 10\ncorrection_mode = full, none\n");
  EXPECT_EQ(sweep.size(), 12u);
  const auto cells = expand_sweep(sweep);
  ASSERT_EQ(cells.size(), 12u);
  EXPECT_EQ(cells[0].spec.train.E, 1u);
  EXPECT_EQ(cells[0].spec.train.H, 5u);
  EXPECT_EQ(cells[1].spec.train.mode, CorrectionMode::none);
  EXPECT_EQ(cells[2].spec.train.H, 10u);
  EXPECT_EQ(cells[11].spec.train.E, 4u);
  EXPECT_EQ(parse_sweep_config(serialize(sweep)), sweep);
}

TEST(ParseSweep, RejectsBadAxes) {
  EXPECT_THROW(parse_sweep_config("[train]\ngamma = 0.1\n[sweep]\nT = 1, 2\n"), ConfigParseError);
  EXPECT_THROW(expand_sweep(parse_sweep_config("[train]\ngamma = 0.1\n[sweep]\nE = 0\n")), ConfigError);
  EXPECT_THROW(expand_sweep(parse_sweep_config("[train]\ngamma = 0.1\n[sweep]\nregime = mixed\n")), ConfigError);
}

TEST(RunExperiment, LayoutAndDeterminism) {
  const auto root = scratch("layout");
  const auto spec = small_spec(root / "a");
  const auto a = run_experiment(spec);
  auto spec_b = spec;
  spec_b.output.dir = (root / "b").string();
  spec_b.train.threads = 3;
  const auto b = run_experiment(spec_b);
  EXPECT_EQ(a.exit_code, exit_ok);
  EXPECT_EQ(a.directory.filename(), b.directory.filename());
  for (const char* seed : {"0", "1", "2"})
    EXPECT_EQ(slurp(a.directory / seed / "metrics.csv"), slurp(b.directory / seed / "metrics.csv"));
  EXPECT_EQ(parse_config(slurp(a.directory / "spec.cfg")), spec);
  fs::remove_all(root);
}

TEST(RunExperiment, ManifestListsEveryArtifact) {
  const auto root = scratch("manifest");
  const auto out = run_experiment(small_spec(root));
  const auto manifest = nlohmann::json::parse(slurp(out.directory / "manifest.json"));
  EXPECT_EQ(manifest.at("spec_hash").get<std::string>(), out.directory.filename().string());
  EXPECT_EQ(manifest.at("exit_code").get<int>(), 0);
  EXPECT_EQ(manifest.at("seeds").size(), 3u);
  EXPECT_GT(manifest.at("gamma").get<double>(), 0.0);
  EXPECT_GT(manifest.at("gamma_bound").get<double>(), 0.0);
  std::size_t listed = 0;
  for (const auto& art : manifest.at("artifacts")) {
    const auto content = slurp(out.directory / art.at("path").get<std::string>());
    EXPECT_EQ(art.at("bytes").get<std::size_t>(), content.size());
    EXPECT_EQ(art.at("fnv1a64").get<std::string>(), hex64(fnv1a64(content)));
    ++listed;
  }
  std::size_t on_disk = 0;
  for (const auto& e : fs::recursive_directory_iterator(out.directory))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") ++on_disk;
  EXPECT_EQ(listed, on_disk);
  EXPECT_EQ(listed, 5u);
  fs::remove_all(root);
}

TEST(RunExperiment, SummaryReportsMeanAndSpread) {
  const auto root = scratch("summary");
  const auto out = run_experiment(small_spec(root));
  ASSERT_EQ(out.summary.total, 3u);
  ASSERT_EQ(out.summary.reached, 3u);
  std::vector<double> r;
  for (const auto& s : out.seeds) r.push_back(static_cast<double>(*s.rounds));
  const double mean = (r[0] + r[1] + r[2]) / 3.0;
  double ss = 0.0;
  for (double x : r) ss += (x - mean) * (x - mean);
  EXPECT_DOUBLE_EQ(out.summary.mean, mean);
  EXPECT_DOUBLE_EQ(out.summary.stddev, std::sqrt(ss / 2.0));
  EXPECT_NE(slurp(out.directory / "summary.csv").find(out.summary.display()), std::string::npos);
  fs::remove_all(root);
}

TEST(RunExperiment, DivergenceExitCode) {
  const auto root = scratch("diverge");
  auto spec = small_spec(root);
  spec.train.gamma = 50.0;
  spec.output.seeds = {0};
  const auto out = run_experiment(spec);
  EXPECT_EQ(out.exit_code, exit_divergence);
  EXPECT_FALSE(out.message.empty());
  EXPECT_TRUE(fs::exists(out.directory / "0" / "metrics.csv"));
  fs::remove_all(root);
}

TEST(RunExperiment, MultilevelWritesEventLog) {
  const auto root = scratch("multilevel");
  auto spec = parse_config(
      "[task]\ndimension = 3\n[topology]\nfanouts = 2, 2\nperiods = 4, 2\n[train]\ngamma = 0.05\nT = 3\n");
  spec.output.dir = root.string();
  const auto out = run_experiment(spec);
  const auto events = slurp(out.directory / "0" / "events.csv");
  EXPECT_EQ(events.substr(0, events.find('\n')), "r,level,node_path");
  EXPECT_EQ(out.seeds[0].trace.rows.size(), 1u + 3u * 2u);
  fs::remove_all(root);
}

TEST(RunSweep, CorrectionModesOrderOnHeterogeneousData) {
  const auto root = scratch("sweep");
  auto sweep = parse_sweep_config(
      "[task]\ndimension = 5\ngroup_shift = 1\nclient_shift = 1\ncurvature_spread = 0.5\n"
      "[topology]\ngroups = 3\nclients_per_group = 3\n"
      "[train]\ngamma = 0.02\nT = 400\nE = 2\nH = 5\n"
      "[output]\nthreshold = 1e-8\n"
      "[sweep]\ncorrection_mode = full, none\n");
  sweep.base.output.dir = root.string();
  const auto out = run_sweep(sweep);
  ASSERT_EQ(out.results.size(), 2u);
  ASSERT_TRUE(out.results[0].seeds[0].rounds);
  EXPECT_FALSE(out.results[1].seeds[0].rounds);
  const auto table = slurp(root / "sweep_summary.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), "correction_mode,spec_hash,reached,seeds,rounds_mean,rounds_std,rounds");
  fs::remove_all(root);
}

TEST(CompareReport, SelfComparisonIsUnity) {
  const auto tr = geometric(1.0, 0.5, 20);
  const auto rows = compare_report({tr, tr}, {"a", "b"}, 1e-3);
  EXPECT_EQ(rows[0].speedup_text, "1×");
  EXPECT_EQ(rows[1].speedup_text, "1×");
  EXPECT_EQ(rows[1].rounds, rows[0].rounds);
}

TEST(CompareReport, FourTimesFaster) {
  // 0.5^k <= 2^-16 at k = 16; 0.5^(4k) at k = 4
  const auto slow = geometric(1.0, 0.5, 40);
  const auto fast = geometric(1.0, 0.0625, 10);
  const auto rows = compare_report({slow, fast}, {"slow", "fast"}, std::ldexp(1.0, -16));
  EXPECT_EQ(*rows[0].rounds, 16u);
  EXPECT_EQ(*rows[1].rounds, 4u);
  EXPECT_EQ(rows[1].speedup_text, "4×");
  EXPECT_EQ(comparison_csv(rows), "label,rounds,speedup\nslow,16,1×\nfast,4,4×\n");
}

TEST(CompareReport, NeverCrossingReportsHorizon) {
  const auto flat = geometric(1.0, 1.0, 11);
  const auto fast = geometric(1.0, 0.5, 11);
  const auto rows = compare_report({flat, fast}, {"flat", "fast"}, 0.01);
  EXPECT_EQ(rows[0].rounds_text, ">10");
  EXPECT_EQ(rows[1].rounds_text, "7");
  EXPECT_EQ(rows[1].speedup_text, ">1.43×");
}

TEST(CompareReport, Errors) {
  EXPECT_THROW(compare_report({}, {}, 1.0), ComparisonError);
  EXPECT_THROW(compare_report({geometric(1, 1, 2)}, {"a", "b"}, 1.0), ComparisonError);
  EXPECT_THROW(compare_report({MetricTrace{}}, {"a"}, 1.0), ComparisonError);
  auto bad = geometric(1, 1, 3);
  bad.rows[1].grad_norm_sq = std::nan("");
  EXPECT_THROW(compare_report({bad}, {"a"}, 1.0), ComparisonError);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(SpecWarnings, StepLevelAggregation) {
  EXPECT_TRUE(spec_warnings(parse_config("[train]\ngamma = 0.1\n[topology]\nfanouts = 2, 2\nperiods = 4, 2\n")).empty());
  EXPECT_EQ(spec_warnings(parse_config("[train]\ngamma = 0.1\n[topology]\nfanouts = 2, 2\nperiods = 4, 1\n")).size(), 1u);
}

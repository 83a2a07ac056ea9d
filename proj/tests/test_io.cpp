#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qcfg/bench.hpp"
#include "qcfg/json_io.hpp"
#include "qcfg/sampling.hpp"
#include "test_util.hpp"

using namespace qcfg;

namespace {

std::string temp_prefix(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("qcfg_test_" + name)).string();
}

struct Fixture {
  SymbolConfig cfg{2, 2, 6, 3};
  SourceTree tree = random_binary_tree(3, 5);
  EmbeddingParams params = EmbeddingParams::random(cfg, tree.num_nodes(), 4, 9);
};

}  // namespace

TEST(TableFile, DenseRoundTripIsBitExact) {
  Fixture f;
  const auto t = parameterize_dense(f.cfg, f.tree, f.params);
  const auto prefix = temp_prefix("dense");
  write_table_file(prefix, table_file(t, f.tree));
  const auto back = table_from_file(read_table_file(prefix));
  EXPECT_EQ(back.num_nodes, t.num_nodes);
  EXPECT_TRUE(std::equal(t.binary.begin(), t.binary.end(), back.binary.begin()));
  EXPECT_TRUE(std::equal(t.start.begin(), t.start.end(), back.start.begin()));
  EXPECT_TRUE(std::equal(t.terminal.begin(), t.terminal.end(), back.terminal.begin()));
  const std::vector<int> target{0, 1, 2};
  EXPECT_EQ(inside_vanilla(back, f.tree, target), inside_vanilla(t, f.tree, target));
}

TEST(TableFile, FactorRoundTrips) {
  Fixture f;
  const auto e = parameterize_e(f.cfg, f.tree, f.params);
  const auto p = parameterize_p(f.cfg, f.tree, f.params);
  write_table_file(temp_prefix("e"), table_file(e, f.tree));
  write_table_file(temp_prefix("p"), table_file(p, f.tree));
  const auto e2 = factors_e_from_file(read_table_file(temp_prefix("e")));
  const auto p2 = factors_p_from_file(read_table_file(temp_prefix("p")));
  EXPECT_TRUE(std::equal(e.head.begin(), e.head.end(), e2.head.begin()));
  EXPECT_TRUE(std::equal(e.right.begin(), e.right.end(), e2.right.begin()));
  EXPECT_TRUE(std::equal(p.triple.begin(), p.triple.end(), p2.triple.begin()));
  EXPECT_TRUE(std::equal(p.left_sym.begin(), p.left_sym.end(), p2.left_sym.begin()));
}

TEST(TableFile, RejectsMismatchedSections) {
  Fixture f;
  auto tf = table_file(parameterize_dense(f.cfg, f.tree, f.params), f.tree);
  tf.sections["start"].pop_back();
  EXPECT_THROW(table_from_file(tf), std::runtime_error);
  EXPECT_THROW(read_table_file(temp_prefix("missing_file")), std::runtime_error);
}

TEST(TableFile, TruncatedBinary) {
  Fixture f;
  const auto prefix = temp_prefix("trunc");
  write_table_file(prefix, table_file(parameterize_dense(f.cfg, f.tree, f.params), f.tree));
  std::filesystem::resize_file(prefix + ".bin", 16);
  EXPECT_THROW(read_table_file(prefix), std::runtime_error);
}

TEST(DerivationJson, NestsSpansAndConsumesEveryRule) {
  const auto inst = synth::two_way_instance(0.9, 0.1);
  for (const auto& d : sample_target_trees(inst.table, inst.tree, inst.target, 5, 1)) {
    const auto j = derivation_to_json(inst.table, d);
    const auto& root = j.at("tree");
    EXPECT_EQ(root.at("span"), json::array({0, 2}));
    ASSERT_EQ(root.at("children").size(), 2u);
    EXPECT_EQ(root.at("children")[0].at("span"), json::array({0, 1}));
    EXPECT_EQ(root.at("children")[1].at("word"), 0);
    EXPECT_DOUBLE_EQ(static_cast<double>(j.at("log_weight")), d.log_weight);
  }
}

TEST(DerivationJson, RejectsMissingStart) {
  const auto inst = synth::two_way_instance(0.5, 0.5);
  Derivation d;
  EXPECT_THROW(derivation_to_json(inst.table, d), std::invalid_argument);
}

TEST(Bench, SlopeOfPowerLaw) {
  const std::vector<double> xs{2, 4, 8, 16};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(3.0 * x * x * x);
  EXPECT_NEAR(loglog_slope(xs, ys), 3.0, 1e-12);
}

TEST(Bench, EstimateTracksMeasuredPeak) {
  BenchConfig cfg;
  cfg.lengths = {6, 8};
  cfg.repeats = 3;
  cfg.vanilla = {4, 4, 500, 0};
  cfg.low_rank = {8, 8, 500, 16};
  for (const auto& rec : run_benchmark(cfg)) {
    ASSERT_FALSE(rec.skipped);
    const double ratio = static_cast<double>(rec.mem_bytes) / rec.estimate_bytes;
    EXPECT_GT(ratio, 0.5) << rec.model << " x=" << rec.length;
    EXPECT_LT(ratio, 2.0) << rec.model << " x=" << rec.length;
  }
}

TEST(Bench, SkipsOverBudgetAndWritesEmptyFields) {
  BenchConfig cfg;
  cfg.lengths = {4};
  cfg.models = {"vanilla"};
  cfg.memory_budget = 1;
  const auto recs = run_benchmark(cfg);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(recs[0].skipped);
  std::ostringstream os;
  write_benchmark_csv(os, recs);
  EXPECT_EQ(os.str(), "model,length,time_s,mem_bytes,slope\nvanilla,4,,,nan\n");
}

TEST(Bench, ValidatesConfig) {
  BenchConfig cfg;
  cfg.repeats = 2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = BenchConfig{};
  cfg.lengths = {8, 8};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = BenchConfig{};
  cfg.models = {"cky"};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

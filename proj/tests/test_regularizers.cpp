#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qcfg/oracle.hpp"
#include "qcfg/regularizers.hpp"
#include "test_util.hpp"

namespace qcfg {
namespace {

std::vector<testing::TinyInstance> finite_instances(int count, std::uint64_t seed0) {
  std::vector<testing::TinyInstance> out;
  for (std::uint64_t s = seed0; static_cast<int>(out.size()) < count; ++s) {
    auto inst = testing::random_tiny_instance(s);
    if (oracle::enumerate(inst.table, inst.tree, inst.target).empty()) continue;
    out.push_back(std::move(inst));
  }
  return out;
}

double log_zeta(Distance d) { return std::log(default_reward(d)); }

// "(a b)", T = 3, no alignment mask: start, binary and preterminal choices
// all lean toward the root, so the posterior piles most alignments onto it.
// Derivations avoiding the root entirely keep u = 1 strictly feasible.
testing::TinyInstance root_heavy_instance() {
  testing::TinyInstance inst{parse_bracketed("(a b)", 2), {}, {0, 1, 0}};
  QcfgRuleTable t = testing::random_dense_table(SymbolConfig{1, 1, 2, 0}, inst.tree.num_nodes(), 4);
  const int root = inst.tree.root();
  t.start[t.lhs_index(0, root)] += 4.0;
  for (int a = 0; a < t.num_lhs(); ++a)
    for (int b = 0; b < t.num_children(); ++b)
      for (int c = 0; c < t.num_children(); ++c) {
        if (t.node_of(b) == root) t.binary[t.binary_index(a, b, c)] += 2.0;
        if (t.node_of(c) == root) t.binary[t.binary_index(a, b, c)] += 2.0;
      }
  t.normalized = false;
  inst.table = std::move(t);
  return inst;
}

TEST(Reward, Values) {
  EXPECT_NEAR(default_reward(Distance::finite(1)), 0.367879, 1e-6);
  EXPECT_NEAR(default_reward(Distance::finite(2)), 0.270671, 1e-6);
  EXPECT_EQ(default_reward(Distance::infinite()), 0.0);
  EXPECT_NEAR(default_reward(Distance::finite(1)) * default_reward(Distance::finite(3)), 0.054947, 1e-6);
  EXPECT_NEAR(std::pow(default_reward(Distance::finite(2)), 2), 0.073263, 1e-6);
  const auto v = reward_values(4);
  ASSERT_EQ(v.size(), 5u);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_DOUBLE_EQ(v[3], 3 * std::exp(-3.0));
  EXPECT_THROW(reward_values(0), std::invalid_argument);
}

TEST(Reward, Axioms) {
  auto z = [](int d) { return default_reward(Distance::finite(d)); };
  for (int d = 1; d < 16; ++d) EXPECT_GT(z(d), z(d + 1));
  int quads = 0;
  for (int a = 1; a <= 15; ++a)
    for (int b = 1; a + b <= 16; ++b)
      for (int c = 1; c < a + b; ++c) {
        const int d = a + b - c;
        if (std::max(a, b) >= std::max(c, d)) continue;
        EXPECT_GT(z(a) * z(b), z(c) * z(d)) << a << ' ' << b << ' ' << c << ' ' << d;
        ++quads;
      }
  EXPECT_GT(quads, 100);
}

TEST(RewardObjective, UnitRewardIsInsideValue) {
  for (const auto& inst : finite_instances(10, 40)) {
    RewardConfig cfg{[](Distance) { return 1.0; }, 0.0};
    const auto obj = expected_reward_objective(inst.table, inst.tree, inst.target, cfg);
    EXPECT_EQ(obj.objective, inside_vanilla(inst.table, inst.tree, inst.target));
  }
}

TEST(RewardObjective, SingleDerivationWithUnitDistance) {
  const auto inst = testing::two_way_instance(1.0, 0.0);
  const auto obj = expected_reward_objective(inst.table, inst.tree, inst.target, RewardConfig{});
  EXPECT_NEAR(obj.log_expected_reward, obj.log_z - 1.0, 1e-12);
  EXPECT_NEAR(obj.entropy, 0.0, 1e-12);
}

TEST(RewardObjective, MatchesOracle) {
  for (const auto& inst : finite_instances(30, 60)) {
    const auto ds = oracle::enumerate(inst.table, inst.tree, inst.target);
    const auto obj = expected_reward_objective(inst.table, inst.tree, inst.target, RewardConfig{default_reward, 0.5});
    const double want_r = oracle::log_expected_reward(ds, inst.table, inst.tree, log_zeta);
    if (want_r == kNegInf) {
      EXPECT_EQ(obj.log_expected_reward, kNegInf);
    } else {
      EXPECT_NEAR(obj.log_expected_reward, want_r, 1e-8);
    }
    EXPECT_NEAR(obj.entropy, oracle::entropy(ds), 1e-8);
    EXPECT_DOUBLE_EQ(obj.objective, obj.log_expected_reward + 0.5 * obj.entropy);
  }
}

TEST(Kl, TwoPointClosedForm) {
  const auto p = testing::two_way_instance(0.5, 0.5);
  const auto q = testing::two_way_instance(0.9, 0.1);
  const double want = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
  EXPECT_NEAR(kl_factored(q.table, p.table, p.tree, p.target), want, 1e-12);
  const auto dq = oracle::enumerate(q.table, q.tree, q.target);
  const auto dp = oracle::enumerate(p.table, p.tree, p.target);
  EXPECT_NEAR(oracle::kl(dq, dp), want, 1e-12);
}

TEST(Kl, SelfIsZeroAndSupportChecked) {
  for (const auto& inst : finite_instances(10, 80)) EXPECT_NEAR(kl_factored(inst.table, inst.table, inst.tree, inst.target), 0.0, 1e-9);
  const auto p = testing::two_way_instance(1.0, 0.0);
  const auto q = testing::two_way_instance(0.5, 0.5);
  EXPECT_THROW(kl_factored(q.table, p.table, p.tree, p.target), std::domain_error);
}

TEST(Kl, MatchesOracleForReweightedTables) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lam(0.0, 2.0);
  for (const auto& inst : finite_instances(30, 120)) {
    std::vector<double> lambda(inst.table.num_nodes);
    for (double& x : lambda) x = lam(rng);
    const QcfgRuleTable q = coverage_weighted_table(inst.table, lambda);
    const double got = kl_factored(q, inst.table, inst.tree, inst.target);
    const double want = oracle::kl(oracle::enumerate(q, inst.tree, inst.target),
                                   oracle::enumerate(inst.table, inst.tree, inst.target));
    EXPECT_NEAR(got, want, 1e-8);
    EXPECT_GE(got, 0.0);
  }
}

TEST(PrSolve, SlackBoundLeavesPosteriorAlone) {
  for (const auto& inst : finite_instances(10, 200)) {
    CoverageConfig cfg;
    cfg.upper_bound = 2.0 * inst.target.size();
    const PrSolution sol = pr_solve(inst.table, inst.tree, inst.target, cfg);
    for (double l : sol.state.lambda) EXPECT_EQ(l, 0.0);
    EXPECT_LE(kl_factored(sol.q, inst.table, inst.tree, inst.target), 1e-9);
    const auto obj = pr_objective(inst.table, inst.tree, inst.target, cfg);
    EXPECT_NEAR(obj.combined, obj.log_likelihood, 1e-9);
  }
}

TEST(PrSolve, TightBoundOnConstructedInstance) {
  const auto inst = root_heavy_instance();
  const int root = inst.tree.root();
  const auto before = expected_rule_counts(inst.table, inst.tree, inst.target).alignments_per_node(inst.table);
  ASSERT_GT(before[root], 1.5);
  // Bound 1 at the root only: every derivation has 2T - 1 aligned rules, so a
  // uniform u = 1 over three nodes would be infeasible.
  CoverageConfig cfg;
  cfg.xi = {1.0, 1.0, 1.0};
  for (int i = 0; i < 3; ++i)
    if (i != root) cfg.xi[i] = 2.0 * inst.target.size();
  const PrSolution sol = pr_solve(inst.table, inst.tree, inst.target, cfg);
  EXPECT_TRUE(sol.state.converged);
  EXPECT_LE(sol.state.expected_phi[root], 1.0 + 1e-3);
  EXPECT_GT(sol.state.lambda[root], 0.0);

  const auto obj = pr_objective(inst.table, inst.tree, inst.target, cfg);
  EXPECT_GT(obj.kl, 0.0);
  EXPECT_NEAR(obj.kl, kl_factored(sol.q, inst.table, inst.tree, inst.target), 1e-12);
  EXPECT_DOUBLE_EQ(obj.combined, obj.log_likelihood - obj.kl);
  cfg.penalize = false;
  EXPECT_DOUBLE_EQ(pr_objective(inst.table, inst.tree, inst.target, cfg).combined, obj.log_likelihood + obj.kl);
  cfg.gamma = 0.0;
  EXPECT_DOUBLE_EQ(pr_objective(inst.table, inst.tree, inst.target, cfg).combined, obj.log_likelihood);
}

TEST(PrSolve, ReportsNonConvergence) {
  const auto inst = root_heavy_instance();
  CoverageConfig cfg;
  cfg.max_iterations = 1;
  try {
    pr_solve(inst.table, inst.tree, inst.target, cfg);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_FALSE(e.state().converged);
    EXPECT_GT(e.state().gradient_norm, cfg.tolerance);
  }
  // u = 1 everywhere cannot hold: each derivation aligns 2T - 1 = 5 rules to 3 nodes.
  cfg.max_iterations = 500;
  EXPECT_THROW(pr_solve(inst.table, inst.tree, inst.target, cfg), ConvergenceError);
}

TEST(PrSolve, RejectsBadBounds) {
  const auto inst = testing::two_way_instance(0.5, 0.5);
  CoverageConfig cfg;
  cfg.upper_bound = 0.5;
  EXPECT_THROW(pr_solve(inst.table, inst.tree, inst.target, cfg), std::invalid_argument);
  cfg.upper_bound = 1.0;
  cfg.xi = {1.0};
  EXPECT_THROW(pr_solve(inst.table, inst.tree, inst.target, cfg), std::invalid_argument);
}

TEST(PrSolve, ActiveBoundsOnRandomInstances) {
  std::mt19937_64 rng(3);
  int solved = 0;
  for (std::uint64_t s = 300; solved < 15; ++s) {
    const auto inst = testing::random_tiny_instance(s);
    const auto u = testing::active_coverage_bound(inst);
    if (!u) continue;
    CoverageConfig cfg;
    cfg.upper_bound = *u;
    const PrSolution sol = pr_solve(inst.table, inst.tree, inst.target, cfg);
    ++solved;
    const auto& st = sol.state;
    for (int i = 0; i < inst.table.num_nodes; ++i) {
      EXPECT_LE(st.expected_phi[i], st.xi[i] + 1e-3);
      EXPECT_LE(std::abs(st.lambda[i] * (st.expected_phi[i] - st.xi[i])), 1e-2);
    }
    std::exponential_distribution<double> probe(1.0);
    for (int p = 0; p < 20; ++p) {
      std::vector<double> lam(inst.table.num_nodes);
      for (double& x : lam) x = probe(rng);
      EXPECT_GE(st.dual_value, coverage_dual_value(inst.table, inst.tree, inst.target, lam, st.xi) - 1e-9);
    }
    EXPECT_GE(st.dual_value, 0.0);  // the dual at lambda = 0 is 0
  }
}

}  // namespace
}  // namespace qcfg

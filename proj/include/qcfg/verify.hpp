#pragma once

// Self-check suites run from the command line: brute-force agreement of the
// chart algorithms on tiny random instances, reported as per-property pass
// counts.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcfg/inside.hpp"
#include "qcfg/instances.hpp"
#include "qcfg/oracle.hpp"
#include "qcfg/outside.hpp"
#include "qcfg/regularizers.hpp"
#include "qcfg/sampling.hpp"
#include "qcfg/semiring.hpp"

namespace qcfg {

struct VerifyOptions {
  std::string scope = "all";  // inside | rank | p-model | rewards | pr | sampling | all
  int seeds = 20;
  std::uint64_t base_seed = 0;
  bool corrupt_factor = false;  // perturb one factor entry after composing (sensitivity check)
};

struct VerifyReport {
  std::map<std::string, std::pair<int, int>> properties;  // name -> (passed, total)
  bool passed() const {
    for (const auto& [_, pt] : properties)
      if (pt.first != pt.second) return false;
    return true;
  }
  void record(const std::string& name, bool ok) {
    auto& pt = properties[name];
    pt.first += ok;
    ++pt.second;
  }
  nlohmann::json to_json(const VerifyOptions& o) const {
    nlohmann::json props = nlohmann::json::object();
    for (const auto& [name, pt] : properties) props[name] = {{"passed", pt.first}, {"total", pt.second}};
    return {{"scope", o.scope}, {"seeds", o.seeds}, {"passed", passed()}, {"properties", props}};
  }
};

namespace detail {

inline bool near(double a, double b, double tol) {
  if (a == kNegInf || b == kNegInf) return a == b;
  return std::abs(a - b) <= tol;
}

// Next tiny instance (from `seed` on) that has at least one derivation.
inline synth::TinyInstance next_finite_instance(std::uint64_t& seed) {
  for (;;) {
    auto inst = synth::random_tiny_instance(seed++);
    if (!oracle::enumerate(inst.table, inst.tree, inst.target).empty()) return inst;
  }
}

inline void verify_inside(const VerifyOptions& o, VerifyReport& rep) {
  std::uint64_t seed = o.base_seed;
  for (int s = 0; s < o.seeds; ++s) {
    const auto inst = next_finite_instance(seed);
    const auto ds = oracle::enumerate(inst.table, inst.tree, inst.target);
    rep.record("inside.log_z_vs_oracle", near(inside_vanilla(inst.table, inst.tree, inst.target), oracle::log_z(ds), 1e-9));
    rep.record("inside.count_vs_oracle",
               inside_generic<CountingSemiring>(inst.table, inst.tree, inst.target) == static_cast<double>(ds.size()));
    rep.record("inside.viterbi_vs_oracle",
               near(inside_generic<MaxSemiring>(inst.table, inst.tree, inst.target), oracle::max_log_weight(ds), 1e-12));
    const auto got = expected_rule_counts(inst.table, inst.tree, inst.target);
    const auto want = oracle::expected_counts(ds, inst.table);
    bool ok = true;
    for (std::size_t i = 0; i < want.binary.size(); ++i) ok = ok && std::abs(got.binary[i] - want.binary[i]) <= 1e-8;
    for (std::size_t i = 0; i < want.terminal.size(); ++i) ok = ok && std::abs(got.terminal[i] - want.terminal[i]) <= 1e-8;
    rep.record("inside.expected_counts_vs_oracle", ok);
  }
}

// Low-rank instance sizes cycle through |R| in {1, 2, 4}.
struct LowRankInstance {
  SymbolConfig cfg;
  SourceTree tree;
  EmbeddingParams params;
  std::vector<int> target;
};

inline LowRankInstance low_rank_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  static constexpr int kRanks[] = {1, 2, 4};
  SymbolConfig cfg{pick(1, 3), pick(1, 3), 4, kRanks[seed % 3]};
  SourceTree tree = random_binary_tree(pick(2, 4), rng());
  EmbeddingParams params = EmbeddingParams::random(cfg, tree.num_nodes(), 4, rng());
  std::vector<int> target = synth::random_target(pick(2, 4), cfg.vocab_size, rng());
  return {cfg, std::move(tree), std::move(params), std::move(target)};
}

inline void verify_rank(const VerifyOptions& o, VerifyReport& rep) {
  for (int s = 0; s < o.seeds; ++s) {
    const auto in = low_rank_instance(o.base_seed + s);
    const QcfgRuleTable lex = parameterize_lexical(in.cfg, in.tree, in.params);
    FactorTablesE f = parameterize_e(in.cfg, in.tree, in.params);
    const double dense = inside_vanilla(lex.with_binary(compose_e(f)), in.tree, in.target);
    if (o.corrupt_factor) f.head[0] += 1.0;
    rep.record("rank.naive_vs_dense", near(inside_e_naive(f, lex, in.tree, in.target), dense, 1e-9));
    rep.record("rank.rank_space_vs_dense", near(inside_e_rank(f, lex, in.tree, in.target), dense, 1e-9));
  }
}

inline void verify_p(const VerifyOptions& o, VerifyReport& rep) {
  for (int s = 0; s < o.seeds; ++s) {
    const auto in = low_rank_instance(o.base_seed + 7919 + s);
    const QcfgRuleTable lex = parameterize_lexical(in.cfg, in.tree, in.params);
    FactorTablesP f = parameterize_p(in.cfg, in.tree, in.params);
    const double dense = inside_vanilla(lex.with_binary(compose_p(f)), in.tree, in.target);
    if (o.corrupt_factor) f.head[0] += 1.0;
    rep.record("p_model.cached_vs_dense", near(inside_p(f, lex, in.tree, in.target), dense, 1e-9));
  }
}

inline void verify_rewards(const VerifyOptions& o, VerifyReport& rep) {
  auto z = [](int d) { return default_reward(Distance::finite(d)); };
  bool mono = true, order = true;
  for (int d = 1; d < 16; ++d) mono = mono && z(d) > z(d + 1);
  for (int a = 1; a <= 15; ++a)
    for (int b = 1; a + b <= 16; ++b)
      for (int c = 1; c < a + b; ++c)
        if (std::max(a, b) < std::max(c, a + b - c)) order = order && z(a) * z(b) > z(c) * z(a + b - c);
  rep.record("rewards.monotone_decrease", mono);
  rep.record("rewards.product_ordering", order);

  std::uint64_t seed = o.base_seed + 104729;
  auto log_zeta = [](Distance d) { return std::log(default_reward(d)); };
  for (int s = 0; s < o.seeds; ++s) {
    const auto inst = next_finite_instance(seed);
    const auto ds = oracle::enumerate(inst.table, inst.tree, inst.target);
    const auto obj = expected_reward_objective(inst.table, inst.tree, inst.target, RewardConfig{});
    rep.record("rewards.expected_reward_vs_oracle",
               near(obj.log_expected_reward, oracle::log_expected_reward(ds, inst.table, inst.tree, log_zeta), 1e-8));
    rep.record("rewards.entropy_vs_oracle", near(obj.entropy, oracle::entropy(ds), 1e-8));
    const auto unit = expected_reward_objective(inst.table, inst.tree, inst.target,
                                                RewardConfig{[](Distance) { return 1.0; }, 0.0});
    rep.record("rewards.unit_reward_is_log_z", unit.objective == inside_vanilla(inst.table, inst.tree, inst.target));
  }
}

inline void verify_pr(const VerifyOptions& o, VerifyReport& rep) {
  std::mt19937_64 rng(o.base_seed + 17);
  std::uint64_t seed = o.base_seed + 1299709;
  for (int s = 0; s < o.seeds;) {
    const auto inst = synth::random_tiny_instance(seed++);
    const auto u = synth::active_coverage_bound(inst);
    if (!u) continue;
    ++s;
    CoverageConfig cfg;
    cfg.upper_bound = *u;
    PrSolution sol;
    try {
      sol = pr_solve(inst.table, inst.tree, inst.target, cfg);
    } catch (const ConvergenceError&) {
      rep.record("pr.converged", false);
      continue;
    }
    rep.record("pr.converged", true);
    const auto& st = sol.state;
    bool feasible = true, slack = true;
    for (std::size_t i = 0; i < st.xi.size(); ++i) {
      feasible = feasible && st.expected_phi[i] <= st.xi[i] + 1e-3;
      slack = slack && std::abs(st.lambda[i] * (st.expected_phi[i] - st.xi[i])) <= 1e-2;
    }
    rep.record("pr.feasible", feasible);
    rep.record("pr.complementary_slackness", slack);
    bool beats = true;
    std::exponential_distribution<double> probe(1.0);
    for (int p = 0; p < 20; ++p) {
      std::vector<double> lam(st.lambda.size());
      for (double& x : lam) x = probe(rng);
      beats = beats && st.dual_value >= coverage_dual_value(inst.table, inst.tree, inst.target, lam, st.xi) - 1e-9;
    }
    rep.record("pr.dual_beats_probes", beats);
    const double kl = kl_factored(sol.q, inst.table, inst.tree, inst.target);
    const double want = oracle::kl(oracle::enumerate(sol.q, inst.tree, inst.target),
                                   oracle::enumerate(inst.table, inst.tree, inst.target));
    rep.record("pr.kl_vs_oracle", std::abs(kl - want) <= 1e-8 && kl >= 0.0);

    CoverageConfig loose;
    loose.upper_bound = 2.0 * inst.target.size();
    const auto free_sol = pr_solve(inst.table, inst.tree, inst.target, loose);
    bool zero = true;
    for (double l : free_sol.state.lambda) zero = zero && l == 0.0;
    rep.record("pr.slack_bound_zero_lambda",
               zero && kl_factored(free_sol.q, inst.table, inst.tree, inst.target) <= 1e-9);
  }
}

inline void verify_sampling(const VerifyOptions& o, VerifyReport& rep) {
  std::uint64_t seed = o.base_seed + 15485863;
  for (int s = 0; s < o.seeds;) {
    const auto inst = synth::random_tiny_instance(seed++);
    const auto ds = oracle::enumerate(inst.table, inst.tree, inst.target);
    // few enough outcomes that 20000 draws resolve the posterior to 0.03 TV
    if (ds.empty() || ds.size() > 40) continue;
    ++s;
    const auto post = oracle::posterior(ds);
    std::map<std::vector<AppliedRule>, double> want, got;
    for (std::size_t i = 0; i < ds.size(); ++i) want[ds[i].rules] += post[i];
    const int n = 20'000;
    bool inside_support = true;
    for (const auto& d : sample_target_trees(inst.table, inst.tree, inst.target, n, seed)) {
      inside_support = inside_support && want.count(d.rules);
      got[d.rules] += 1.0 / n;
    }
    double tv = 0.0;
    for (const auto& [k, p] : want) tv += std::abs(p - (got.count(k) ? got[k] : 0.0));
    rep.record("sampling.total_variation", inside_support && 0.5 * tv <= 0.03);
  }
}

}  // namespace detail

inline VerifyReport run_verify(const VerifyOptions& o) {
  static const std::vector<std::string> scopes{"inside", "rank", "p-model", "rewards", "pr", "sampling"};
  if (o.scope != "all" && std::find(scopes.begin(), scopes.end(), o.scope) == scopes.end())
    throw std::invalid_argument("unknown verify scope: " + o.scope);
  if (o.seeds < 1) throw std::invalid_argument("verify needs seeds >= 1");
  VerifyReport rep;
  auto on = [&](const char* s) { return o.scope == "all" || o.scope == s; };
  if (on("inside")) detail::verify_inside(o, rep);
  if (on("rank")) detail::verify_rank(o, rep);
  if (on("p-model")) detail::verify_p(o, rep);
  if (on("rewards")) detail::verify_rewards(o, rep);
  if (on("pr")) detail::verify_pr(o, rep);
  if (on("sampling")) detail::verify_sampling(o, rep);
  return rep;
}

}  // namespace qcfg

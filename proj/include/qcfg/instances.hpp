#pragma once

// Random and hand-built instances for tests, verification and the CLI.

#include <cmath>
#include <cstdint>
#include <optional>
#include <algorithm>
#include <random>
#include <vector>

#include "qcfg/grammar.hpp"
#include "qcfg/log_math.hpp"
#include "qcfg/oracle.hpp"
#include "qcfg/tree.hpp"

namespace qcfg::synth {

/// Dense table with i.i.d. Gaussian logits, normalized per left-hand side.
/// Unlike the embedding parameterization, its binary rows do not factor into
/// independent left and right children.
inline QcfgRuleTable random_dense_table(const SymbolConfig& cfg, int num_nodes, std::uint64_t seed,
                                        double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  QcfgRuleTable t;
  t.cfg = cfg;
  t.num_nodes = num_nodes;
  t.start.resize(t.num_lhs());
  t.binary.resize(QcfgRuleTable::binary_size(cfg, num_nodes));
  t.terminal.resize(static_cast<std::size_t>(t.num_preterminal_rows()) * cfg.vocab_size);
  for (double& x : t.start) x = g(rng);
  for (double& x : t.binary) x = g(rng);
  for (double& x : t.terminal) x = g(rng);
  log_normalize(t.start);
  const std::size_t row = static_cast<std::size_t>(t.num_children()) * t.num_children();
  for (int a = 0; a < t.num_lhs(); ++a) log_normalize(std::span<double>(t.binary).subspan(a * row, row));
  const std::size_t v = cfg.vocab_size;
  for (int r = 0; r < t.num_preterminal_rows(); ++r) log_normalize(std::span<double>(t.terminal).subspan(r * v, v));
  return t;
}

/// Drops each binary rule independently with probability `drop` (never
/// raises a weight). The result is unnormalized.
inline QcfgRuleTable sparsify(QcfgRuleTable t, double drop, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution off(drop);
  for (double& x : t.binary)
    if (off(rng)) x = kNegInf;
  t.normalized = false;
  return t;
}

inline std::vector<int> random_target(int len, int vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> w(0, vocab - 1);
  std::vector<int> out(len);
  for (int& x : out) x = w(rng);
  return out;
}

inline double catalan(int n) {
  double c = 1.0;
  for (int i = 0; i < n; ++i) c = c * 2.0 * (2.0 * i + 1.0) / (i + 2.0);
  return c;
}

/// Upper bound on the number of derivations the oracle would list.
inline double derivation_bound(const QcfgRuleTable& t, int target_len) {
  const double lhs_rows = t.num_lhs();
  const double pt_rows = t.num_preterminal_rows();
  // every one of the T-1 binary nodes chooses an lhs row, every leaf a preterminal row
  return catalan(target_len - 1) * std::pow(lhs_rows, target_len - 1) * std::pow(pt_rows, target_len);
}

/// A random tiny instance whose derivation count the oracle can list.
struct TinyInstance {
  SourceTree tree;
  QcfgRuleTable table;
  std::vector<int> target;
};

/// Random sizes within the oracle caps. Larger configurations get the basic
/// alignment mask and random rule dropping so that enumeration stays cheap.
inline TinyInstance random_tiny_instance(std::uint64_t seed, int max_s = 4, int max_t = 4, int max_sym = 3,
                                         double budget = 60'000) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int s = pick(2, max_s), t = pick(2, max_t);
  SymbolConfig cfg{pick(1, max_sym), pick(1, max_sym), pick(2, 4), 0};
  SourceTree tree = random_binary_tree(s, rng());
  QcfgRuleTable table = random_dense_table(cfg, tree.num_nodes(), rng(), 1.0);
  std::vector<int> target = random_target(t, cfg.vocab_size, rng());
  if (derivation_bound(table, t) > budget) {
    table = apply_basic_alignment_mask(table, tree);
    double bound = catalan(t - 1) * std::pow(cfg.num_nonterminals * (s - 1), t - 1) *
                   std::pow(cfg.num_preterminals * s, t);
    if (bound > budget) {
      const double keep = std::pow(budget / bound, 1.0 / std::max(1, t - 1));
      table = sparsify(std::move(table), 1.0 - keep, rng());
    }
  }
  return {std::move(tree), std::move(table), std::move(target)};
}

/// Tree "(a b)", one NT and one PT, vocabulary {0, 1}. Only the root may
/// start, and the root rewrites to D[l] D[r] with probability `p_lr` or to
/// D[r] D[l] with `p_rl`. Both leaves emit word 0 with probability 1, so the
/// target {0, 0} has at most two derivations.
inline TinyInstance two_way_instance(double p_lr, double p_rl) {
  TinyInstance inst{parse_bracketed("(a b)", 2), QcfgRuleTable{}, {0, 0}};
  QcfgRuleTable& t = inst.table;
  t.cfg = SymbolConfig{1, 1, 2, 0};
  t.num_nodes = 3;
  t.start.assign(t.num_lhs(), kNegInf);
  t.binary.assign(QcfgRuleTable::binary_size(t.cfg, 3), kNegInf);
  t.terminal.assign(static_cast<std::size_t>(t.num_preterminal_rows()) * 2, kNegInf);
  const int root = inst.tree.root();
  auto [l, r] = inst.tree.children(root);
  t.start[t.lhs_index(0, root)] = 0.0;
  t.binary[t.binary_index(t.lhs_index(0, root), t.preterminal_child(0, l), t.preterminal_child(0, r))] = std::log(p_lr);
  t.binary[t.binary_index(t.lhs_index(0, root), t.preterminal_child(0, r), t.preterminal_child(0, l))] = std::log(p_rl);
  for (int leaf : {l, r}) t.terminal[static_cast<std::size_t>(t.preterminal_row(0, leaf)) * 2 + 0] = 0.0;
  t.normalized = std::abs(p_lr + p_rl - 1.0) < 1e-12;
  return inst;
}

/// "((a b) (c d))", target {0, 1, 0}, no alignment mask. Start, binary and
/// preterminal choices all lean toward the root, so the posterior aligns far
/// more than one target node to it, while derivations with at most one
/// alignment per source node (5 aligned rules over 7 nodes) keep a uniform
/// bound u = 1 strictly feasible.
inline TinyInstance tight_coverage_instance(std::uint64_t seed = 4) {
  TinyInstance inst{parse_bracketed("((a b) (c d))", 4), {}, {0, 1, 0}};
  QcfgRuleTable t = random_dense_table(SymbolConfig{1, 1, 2, 0}, inst.tree.num_nodes(), seed);
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

/// A coverage bound u >= 1 that the posterior violates at some node while a
/// derivation strictly inside the bound still exists, so the dual is bounded
/// and at least one constraint is active. Empty when no such u exists.
inline std::optional<double> active_coverage_bound(const TinyInstance& inst) {
  const auto ds = oracle::enumerate(inst.table, inst.tree, inst.target);
  if (ds.empty()) return std::nullopt;
  const auto phi = oracle::expected_alignments(ds, inst.table);
  double worst = 0.0;
  for (double x : phi) worst = std::max(worst, x);
  double best_max = 1e300;  // min over derivations of max per-node count
  for (const auto& d : ds) {
    std::vector<int> c(inst.table.num_nodes, 0);
    for (const auto& r : d.rules)
      if (r.kind != RuleKind::Start) ++c[lhs_node(inst.table, r)];
    best_max = std::min(best_max, static_cast<double>(*std::max_element(c.begin(), c.end())));
  }
  const double lo = std::max(1.0, best_max);
  if (worst - lo < 0.2) return std::nullopt;
  return 0.5 * (lo + worst);
}

}  // namespace qcfg::synth

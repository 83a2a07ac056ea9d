#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qcfg/grammar.hpp"
#include "test_util.hpp"

namespace qcfg {
namespace {

constexpr double kNormTol = 1e-6;

SymbolConfig small_cfg(int ranks = 3) { return SymbolConfig{2, 2, 5, ranks}; }

// Direct sum over R in linear space; independent of compose_e's logsumexp path.
double compose_e_scalar(const FactorTablesE& f, int a, int b, int c) {
  const int ranks = f.num_ranks(), kids = f.num_children();
  double s = 0.0;
  for (int r = 0; r < ranks; ++r)
    s += std::exp(f.head[a * ranks + r]) * std::exp(f.left[r * kids + b]) * std::exp(f.right[r * kids + c]);
  return std::log(s);
}

double compose_p_scalar(const FactorTablesP& f, int a, int b, int c) {
  const int n = f.num_nodes, ranks = f.num_ranks();
  const int i = a % n, j = b % n, k = c % n;
  double s = 0.0;
  for (int r = 0; r < ranks; ++r)
    s += std::exp(f.head[a * ranks + r]) * std::exp(f.triple[f.triple_index(r, i, j, k)]) *
         std::exp(f.left_sym[f.sym_index(r, j, b / n)]) * std::exp(f.right_sym[f.sym_index(r, k, c / n)]);
  return std::log(s);
}

double row_logsum(const tracked_vector<double>& binary, int row, int kids) {
  const std::size_t w = static_cast<std::size_t>(kids) * kids;
  return log_sum_exp(std::span<const double>(binary).subspan(row * w, w));
}

TEST(ParameterizeDense, ZeroEmbeddingsGiveUniformDistributions) {
  const SymbolConfig cfg = small_cfg(0);
  const SourceTree tree = parse_bracketed("((a b) c)", 3);
  const auto params = EmbeddingParams::zeros(cfg, tree.num_nodes(), 1);
  const QcfgRuleTable t = parameterize_dense(cfg, tree, params);
  const double kids = t.num_children();
  for (double x : t.binary) EXPECT_NEAR(x, -std::log(kids * kids), 1e-12);
  for (double x : t.start) EXPECT_NEAR(x, -std::log(t.num_lhs()), 1e-12);
  for (double x : t.terminal) EXPECT_NEAR(x, -std::log(cfg.vocab_size), 1e-12);
}

TEST(ParameterizeDense, DeterministicAndNormalized) {
  const SymbolConfig cfg = small_cfg(0);
  const SourceTree tree = random_binary_tree(4, 3);
  const auto p1 = EmbeddingParams::random(cfg, tree.num_nodes(), 6, 17);
  const auto p2 = EmbeddingParams::random(cfg, tree.num_nodes(), 6, 17);
  const QcfgRuleTable a = parameterize_dense(cfg, tree, p1);
  const QcfgRuleTable b = parameterize_dense(cfg, tree, p2);
  EXPECT_TRUE(a.binary == b.binary && a.start == b.start && a.terminal == b.terminal);
  EXPECT_LT(normalization_error(a), kNormTol);
}

TEST(ParameterizeDense, LeftAndRightChildrenDiffer) {
  const SymbolConfig cfg = small_cfg(0);
  const SourceTree tree = random_binary_tree(3, 1);
  const QcfgRuleTable t = parameterize_dense(cfg, tree, EmbeddingParams::random(cfg, tree.num_nodes(), 4, 5));
  EXPECT_NE(t.binary_at(0, 0, 1), t.binary_at(0, 1, 0));
}

TEST(ParameterizeDense, RejectsMismatchedParams) {
  const SymbolConfig cfg = small_cfg(0);
  const SourceTree tree = random_binary_tree(3, 1);
  const auto params = EmbeddingParams::random(cfg, tree.num_nodes() + 1, 4, 5);
  EXPECT_THROW(parameterize_dense(cfg, tree, params), std::invalid_argument);
  auto bad_temp = EmbeddingParams::random(cfg, tree.num_nodes(), 4, 5);
  bad_temp.temperature = 0.0;
  EXPECT_THROW(parameterize_dense(cfg, tree, bad_temp), std::invalid_argument);
}

TEST(ParameterizeFactors, ZeroEmbeddingsGiveUniformFactors) {
  const SymbolConfig cfg = small_cfg(4);
  const SourceTree tree = random_binary_tree(3, 2);
  const auto params = EmbeddingParams::zeros(cfg, tree.num_nodes(), 2);
  const FactorTablesE e = parameterize_e(cfg, tree, params);
  for (double x : e.head) EXPECT_NEAR(x, -std::log(4.0), 1e-12);
  for (double x : e.left) EXPECT_NEAR(x, -std::log(e.num_children()), 1e-12);
  const FactorTablesP p = parameterize_p(cfg, tree, params);
  const double n = tree.num_nodes();
  for (double x : p.triple) EXPECT_NEAR(x, -std::log(n * n), 1e-12);
  for (double x : p.right_sym) EXPECT_NEAR(x, -std::log(cfg.num_child_symbols()), 1e-12);
}

TEST(ParameterizeFactors, FactorsNormalizedPerLhs) {
  const SymbolConfig cfg = small_cfg(3);
  const SourceTree tree = random_binary_tree(4, 9);
  const auto params = EmbeddingParams::random(cfg, tree.num_nodes(), 5, 11);
  const FactorTablesE e = parameterize_e(cfg, tree, params);
  const FactorTablesP p = parameterize_p(cfg, tree, params);
  auto check_rows = [](const tracked_vector<double>& v, std::size_t width) {
    for (std::size_t r = 0; r * width < v.size(); ++r)
      EXPECT_NEAR(log_sum_exp(std::span<const double>(v).subspan(r * width, width)), 0.0, kNormTol);
  };
  check_rows(e.head, 3);
  check_rows(e.left, e.num_children());
  check_rows(e.right, e.num_children());
  const std::size_t n = tree.num_nodes();
  check_rows(p.head, 3);
  check_rows(p.triple, n * n);
  check_rows(p.left_sym, cfg.num_child_symbols());
  check_rows(p.right_sym, cfg.num_child_symbols());
}

TEST(ParameterizeFactors, NeedRanks) {
  const SymbolConfig cfg = small_cfg(0);
  const SourceTree tree = random_binary_tree(2, 0);
  const auto params = EmbeddingParams::random(cfg, tree.num_nodes(), 2, 1);
  EXPECT_THROW(parameterize_e(cfg, tree, params), std::invalid_argument);
  EXPECT_THROW(parameterize_p(cfg, tree, params), std::invalid_argument);
}

TEST(ComposeE, OneHotRankOneGivesSingleRulePerLhs) {
  const SymbolConfig cfg{2, 1, 3, 1};
  const SourceTree tree = parse_bracketed("(a b)", 2);
  FactorTablesE f = parameterize_e(cfg, tree, EmbeddingParams::zeros(cfg, tree.num_nodes(), 1));
  std::fill(f.left.begin(), f.left.end(), kNegInf);
  std::fill(f.right.begin(), f.right.end(), kNegInf);
  f.left[4] = 0.0;
  f.right[7] = 0.0;
  const auto dense = compose_e(f);
  const int kids = f.num_children();
  for (int a = 0; a < f.num_lhs(); ++a)
    for (int b = 0; b < kids; ++b)
      for (int c = 0; c < kids; ++c)
        EXPECT_EQ(dense[(a * kids + b) * kids + c], (b == 4 && c == 7) ? 0.0 : kNegInf);
}

TEST(ComposeE, UniformFactorsGiveUniformTable) {
  const SymbolConfig cfg = small_cfg(3);
  const SourceTree tree = random_binary_tree(3, 4);
  const FactorTablesE f = parameterize_e(cfg, tree, EmbeddingParams::zeros(cfg, tree.num_nodes(), 1));
  const double kids = f.num_children();
  for (double x : compose_e(f)) EXPECT_NEAR(x, -2.0 * std::log(kids), 1e-12);
}

TEST(ComposeE, MatchesScalarLoopAndIsNormalized) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SymbolConfig cfg{2, 1, 3, 1 + static_cast<int>(seed % 4)};
    const SourceTree tree = random_binary_tree(2 + seed % 2, seed);
    const FactorTablesE f = parameterize_e(cfg, tree, EmbeddingParams::random(cfg, tree.num_nodes(), 3, seed));
    const auto dense = compose_e(f);
    const int kids = f.num_children();
    for (int a = 0; a < f.num_lhs(); ++a) {
      EXPECT_NEAR(row_logsum(dense, a, kids), 0.0, kNormTol);
      for (int b = 0; b < kids; ++b)
        for (int c = 0; c < kids; ++c) {
          const double want = compose_e_scalar(f, a, b, c);
          EXPECT_LE(std::abs(dense[(a * kids + b) * kids + c] - want), 1e-10 * std::abs(want));
        }
    }
  }
}

TEST(ComposeP, OneHotAndUniformCases) {
  const SymbolConfig cfg{1, 1, 2, 1};
  const SourceTree tree = parse_bracketed("(a b)", 2);
  FactorTablesP f = parameterize_p(cfg, tree, EmbeddingParams::zeros(cfg, tree.num_nodes(), 1));
  const double n = tree.num_nodes(), m = cfg.num_child_symbols();
  for (double x : compose_p(f)) EXPECT_NEAR(x, -2.0 * std::log(n * m), 1e-12);

  // Deterministic: (R, i) -> (i, i); (R, node) -> symbol 0 on both sides.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) f.triple[f.triple_index(0, i, j, k)] = (j == i && k == i) ? 0.0 : kNegInf;
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < m; ++s) {
      f.left_sym[f.sym_index(0, i, s)] = s == 0 ? 0.0 : kNegInf;
      f.right_sym[f.sym_index(0, i, s)] = s == 0 ? 0.0 : kNegInf;
    }
  const auto dense = compose_p(f);
  const int kids = cfg.num_child_symbols() * tree.num_nodes();
  for (int a = 0; a < f.num_lhs(); ++a)
    for (int b = 0; b < kids; ++b)
      for (int c = 0; c < kids; ++c) EXPECT_EQ(dense[(a * kids + b) * kids + c], (b == a && c == a) ? 0.0 : kNegInf);
}

TEST(ComposeP, MatchesScalarLoopAndIsNormalized) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SymbolConfig cfg{2, 2, 3, 1 + static_cast<int>(seed % 3)};
    const SourceTree tree = random_binary_tree(2 + seed % 2, seed + 7);
    const FactorTablesP f = parameterize_p(cfg, tree, EmbeddingParams::random(cfg, tree.num_nodes(), 3, seed + 1));
    const auto dense = compose_p(f);
    const int kids = cfg.num_child_symbols() * tree.num_nodes();
    for (int a = 0; a < f.num_lhs(); ++a) {
      EXPECT_NEAR(row_logsum(dense, a, kids), 0.0, kNormTol);
      for (int b = 0; b < kids; ++b)
        for (int c = 0; c < kids; ++c) {
          const double want = compose_p_scalar(f, a, b, c);
          EXPECT_LE(std::abs(dense[(a * kids + b) * kids + c] - want), 1e-10 * std::abs(want));
        }
    }
  }
}

TEST(CountRules, PublishedFormulas) {
  const SymbolConfig cfg{10, 1, 1, 5};
  EXPECT_EQ(count_rules(cfg, 4, Model::E), 640u);
  EXPECT_EQ(count_rules(cfg, 4, Model::P), 960u);
  EXPECT_EQ(count_rules(SymbolConfig{1, 1, 1, 0}, 1, Model::Vanilla), 4u);
}

TEST(CountRules, OrderedForBenchmarkConfigs) {
  for (int s : {8, 12, 16, 24, 32, 40}) {
    const SymbolConfig low{50, 50, 5000, 200};
    const SymbolConfig van{8, 8, 5000, 0};
    EXPECT_LT(count_rules(low, s, Model::E), count_rules(low, s, Model::P));
    EXPECT_LT(count_rules(low, s, Model::P), count_rules(van, s, Model::Vanilla));
  }
}

TEST(HierarchyMask, DirectChildOnThreeNodeTree) {
  const SourceTree tree = parse_bracketed("(a b)", 2);
  const SymbolConfig cfg{1, 1, 2, 0};
  const QcfgRuleTable t = testing::random_dense_table(cfg, tree.num_nodes(), 3);
  const QcfgRuleTable m = apply_hierarchy_mask(t, tree, HierarchyMode::DirectChild);
  EXPECT_FALSE(m.normalized);
  const int n = 3, kids = t.num_children();
  auto [l, r] = tree.children(tree.root());
  int survivors = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        // Reference: both children have parent i and differ. Only (root, l, r), (root, r, l).
        const bool keep = tree.parent(j) == i && tree.parent(k) == i && j != k;
        if (keep) {
          ++survivors;
          EXPECT_EQ(i, tree.root());
          EXPECT_TRUE((j == l && k == r) || (j == r && k == l));
        }
        for (int b = 0; b < 2; ++b)
          for (int c = 0; c < 2; ++c) {
            const double w = m.binary_at(i, b * n + j, c * n + k);
            if (keep) {
              EXPECT_EQ(w, t.binary_at(i, b * n + j, c * n + k));
            } else {
              EXPECT_EQ(w, kNegInf);
            }
          }
      }
  EXPECT_EQ(survivors, 2);
  (void)kids;
}

TEST(HierarchyMask, IdempotentAndOnlyLowers) {
  const SourceTree tree = random_binary_tree(4, 5);
  const SymbolConfig cfg{2, 1, 2, 0};
  const QcfgRuleTable t = testing::random_dense_table(cfg, tree.num_nodes(), 8);
  for (auto mode : {HierarchyMode::Descendant, HierarchyMode::DirectChild}) {
    const QcfgRuleTable once = apply_hierarchy_mask(t, tree, mode);
    const QcfgRuleTable twice = apply_hierarchy_mask(once, tree, mode);
    EXPECT_EQ(once.binary, twice.binary);
    for (std::size_t i = 0; i < t.binary.size(); ++i) EXPECT_TRUE(once.binary[i] == t.binary[i] || once.binary[i] == kNegInf);
  }
}

TEST(HierarchyMask, SingleLeafTreeKeepsSelfAlignedRules) {
  // One node: every rule is A[root] -> B[root] C[root] with d(r) = 0 < inf.
  const SourceTree tree = parse_bracketed("a", 1);
  const SymbolConfig cfg{2, 1, 2, 0};
  const QcfgRuleTable t = testing::random_dense_table(cfg, 1, 2);
  EXPECT_EQ(apply_hierarchy_mask(t, tree, HierarchyMode::Descendant).binary, t.binary);
  for (double w : apply_hierarchy_mask(t, tree, HierarchyMode::DirectChild).binary) EXPECT_EQ(w, kNegInf);
}

TEST(HierarchyMask, RenormalizeOption) {
  const SourceTree tree = random_binary_tree(3, 2);
  const SymbolConfig cfg{2, 2, 2, 0};
  const QcfgRuleTable t = testing::random_dense_table(cfg, tree.num_nodes(), 1);
  const QcfgRuleTable m = apply_hierarchy_mask(t, tree, HierarchyMode::Descendant, true);
  EXPECT_TRUE(m.normalized);
  EXPECT_LT(normalization_error(m), kNormTol);
}

TEST(HierarchyMask, PFactorMaskMatchesDenseMask) {
  const SymbolConfig cfg{2, 1, 2, 2};
  const SourceTree tree = random_binary_tree(3, 6);
  const FactorTablesP f = parameterize_p(cfg, tree, EmbeddingParams::random(cfg, tree.num_nodes(), 3, 4));
  for (auto mode : {HierarchyMode::Descendant, HierarchyMode::DirectChild}) {
    const auto via_factor = compose_p(apply_hierarchy_mask(f, tree, mode));
    QcfgRuleTable dense = parameterize_lexical(cfg, tree, EmbeddingParams::random(cfg, tree.num_nodes(), 3, 4))
                              .with_binary(compose_p(f));
    const auto via_dense = apply_hierarchy_mask(dense, tree, mode).binary;
    ASSERT_EQ(via_factor.size(), via_dense.size());
    for (std::size_t i = 0; i < via_dense.size(); ++i) {
      if (via_dense[i] == kNegInf) {
        EXPECT_EQ(via_factor[i], kNegInf);
      } else {
        EXPECT_NEAR(via_factor[i], via_dense[i], 1e-12);
      }
    }
  }
}

TEST(BasicAlignmentMask, StartAndTerminalRoles) {
  const SourceTree tree = parse_bracketed("(a b)", 2);
  const SymbolConfig cfg{2, 2, 3, 0};
  const QcfgRuleTable t = testing::random_dense_table(cfg, tree.num_nodes(), 4);
  const QcfgRuleTable m = apply_basic_alignment_mask(t, tree);
  for (int a = 0; a < cfg.num_nonterminals; ++a)
    for (int i = 0; i < tree.num_nodes(); ++i)
      EXPECT_EQ(m.start[m.lhs_index(a, i)] != kNegInf, i == tree.root());
  for (int d = 0; d < cfg.num_preterminals; ++d)
    for (int w = 0; w < cfg.vocab_size; ++w) EXPECT_EQ(m.terminal_at(m.preterminal_row(d, tree.root()), w), kNegInf);
}

TEST(BasicAlignmentMask, SurvivingBinaryCountMatchesEnumeration) {
  const SourceTree tree = random_binary_tree(4, 21);
  ASSERT_EQ(tree.num_nodes(), 7);
  const SymbolConfig cfg{3, 2, 2, 0};
  const QcfgRuleTable t = testing::random_dense_table(cfg, tree.num_nodes(), 5);
  const QcfgRuleTable m = apply_basic_alignment_mask(t, tree);
  std::size_t finite = 0;
  for (double w : m.binary) finite += w != kNegInf;
  // Brute force over (A, i) x (B, j) x (C, k) with the role rules spelled out.
  std::size_t expect = 0;
  const int n = 7, nt = 3, sym = 5;
  for (int a = 0; a < nt; ++a)
    for (int i = 0; i < n; ++i)
      for (int b = 0; b < sym; ++b)
        for (int j = 0; j < n; ++j)
          for (int c = 0; c < sym; ++c)
            for (int k = 0; k < n; ++k) {
              const bool lhs = !tree.is_leaf(i);
              const bool left = (b >= nt) == tree.is_leaf(j);
              const bool right = (c >= nt) == tree.is_leaf(k);
              expect += lhs && left && right;
            }
  EXPECT_EQ(finite, expect);
  const std::size_t role_pairs = nt * 3 + 2 * 4;  // NT x internal + PT x leaves
  EXPECT_EQ(finite, static_cast<std::size_t>(nt * 3) * role_pairs * role_pairs);
}

TEST(BasicAlignmentMask, SingleLeafTreeRejected) {
  const SourceTree tree = parse_bracketed("a", 1);
  const SymbolConfig cfg{1, 1, 2, 0};
  EXPECT_THROW(apply_basic_alignment_mask(testing::random_dense_table(cfg, 1, 0), tree), std::invalid_argument);
}

TEST(BasicAlignmentMask, FactorMasksCommuteWithComposition) {
  const SymbolConfig cfg{2, 2, 2, 3};
  const SourceTree tree = random_binary_tree(3, 8);
  const auto params = EmbeddingParams::random(cfg, tree.num_nodes(), 3, 9);
  const QcfgRuleTable lex = parameterize_lexical(cfg, tree, params);
  const FactorTablesE e = parameterize_e(cfg, tree, params);
  const FactorTablesP p = parameterize_p(cfg, tree, params);
  auto same = [](const auto& x, const auto& y) {
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (y[i] == kNegInf) {
        EXPECT_EQ(x[i], kNegInf);
      } else {
        EXPECT_NEAR(x[i], y[i], 1e-12);
      }
    }
  };
  same(compose_e(apply_basic_alignment_mask(e, tree)),
       apply_basic_alignment_mask(lex.with_binary(compose_e(e)), tree).binary);
  same(compose_p(apply_basic_alignment_mask(p, tree)),
       apply_basic_alignment_mask(lex.with_binary(compose_p(p)), tree).binary);
}

}  // namespace
}  // namespace qcfg

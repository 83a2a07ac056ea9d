#include <gtest/gtest.h>

#include <map>
#include <set>
#include <string>

#include "qcfg/tree.hpp"

namespace qcfg {
namespace {

std::vector<Span> spans_of(const SourceTree& t) { return t.nodes(); }

TEST(ParseBracketed, ReadsThreeLeafTree) {
  const SourceTree t = parse_bracketed("((a b) c)", 3);
  const std::vector<Span> expect{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {2, 3}};
  EXPECT_EQ(spans_of(t), expect);
  EXPECT_EQ(t.num_nodes(), 5);
  EXPECT_EQ(t.span(t.root()), (Span{0, 3}));
}

TEST(ParseBracketed, SingleLeafIsRootAndLeaf) {
  const SourceTree t = parse_bracketed("a", 1);
  ASSERT_EQ(t.num_nodes(), 1);
  EXPECT_EQ(t.root(), 0);
  EXPECT_TRUE(t.is_leaf(0));
  EXPECT_EQ(t.parent(0), SourceTree::kNone);
}

TEST(ParseBracketed, BalancedFourLeaves) {
  const SourceTree t = parse_bracketed("((a b) (c d))", 4);
  EXPECT_EQ(t.num_nodes(), 7);
  auto [l, r] = t.children(t.root());
  EXPECT_EQ(t.span(l), (Span{0, 2}));
  EXPECT_EQ(t.span(r), (Span{2, 4}));
}

TEST(ParseBracketed, ReportsErrorsWithPosition) {
  auto fails_at = [](const std::string& text, int leaves) -> std::size_t {
    try {
      parse_bracketed(text, leaves);
    } catch (const ParseError& e) {
      return e.position();
    }
    ADD_FAILURE() << "no error for " << text;
    return 0;
  };
  EXPECT_EQ(fails_at("((a b) c", 3), 0u);      // unclosed
  EXPECT_EQ(fails_at("(a b c)", 3), 5u);       // third child
  EXPECT_EQ(fails_at("(a)", 1), 0u);           // unary
  EXPECT_EQ(fails_at("((a b) c)", 4), 9u);     // leaf count
  EXPECT_EQ(fails_at("(a b))", 2), 5u);        // trailing
  EXPECT_THROW(parse_bracketed("", 1), ParseError);
  EXPECT_THROW(parse_bracketed(")", 1), ParseError);
}

TEST(ParseBracketed, RenderRoundTrip) {
  for (int s = 1; s <= 9; ++s)
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const SourceTree t = random_binary_tree(s, seed);
      EXPECT_EQ(parse_bracketed(t.render(), s), t);
    }
}

TEST(RandomBinaryTree, DegenerateSizes) {
  EXPECT_EQ(random_binary_tree(1, 42).num_nodes(), 1);
  const SourceTree two = random_binary_tree(2, 7);
  EXPECT_EQ(two, parse_bracketed("(a b)", 2));
}

TEST(RandomBinaryTree, HitsAllFiveShapesOfFourLeaves) {
  // The five bracketings of four leaves, enumerated by hand.
  const std::set<std::string> shapes{"(((0 1) 2) 3)", "((0 (1 2)) 3)", "((0 1) (2 3))", "(0 ((1 2) 3))",
                                     "(0 (1 (2 3)))"};
  std::map<std::string, int> hits;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) hits[random_binary_tree(4, seed).render()]++;
  EXPECT_EQ(hits.size(), 5u);
  for (const auto& s : shapes) EXPECT_GT(hits[s], 0) << s;
}

TEST(RandomBinaryTree, DeterministicInSeed) {
  EXPECT_EQ(random_binary_tree(12, 99), random_binary_tree(12, 99));
}

TEST(NodeDistance, Examples) {
  const SourceTree t = parse_bracketed("((a b) c)", 3);
  const int root = t.root();
  const int a = t.index_of({0, 1});
  EXPECT_EQ(node_distance(t, root, root), Distance::finite(0));
  EXPECT_EQ(node_distance(t, root, a), Distance::finite(2));
  EXPECT_TRUE(node_distance(t, a, root).is_infinite());
  EXPECT_THROW(node_distance(t, 0, 5), std::out_of_range);
  EXPECT_THROW(node_distance(t, -1, 0), std::out_of_range);
}

TEST(NodeDistance, InfiniteValueCannotBeRead) {
  EXPECT_THROW((void)Distance::infinite().value(), std::logic_error);
  EXPECT_LT(Distance::finite(1000), Distance::infinite());
}

TEST(RuleDistance, Examples) {
  const SourceTree t = parse_bracketed("((a b) c)", 3);
  const int root = t.root();
  auto [l, r] = t.children(root);
  EXPECT_EQ(rule_distance(t, root, l, r), Distance::finite(1));
  EXPECT_EQ(rule_distance(t, root, t.index_of({0, 1}), t.index_of({2, 3})), Distance::finite(2));
  EXPECT_TRUE(rule_distance(t, t.index_of({0, 1}), root, root).is_infinite());
}

TEST(NodeDistance, PropertiesOnRandomTrees) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const SourceTree t = random_binary_tree(1 + static_cast<int>(seed % 8), seed);
    const auto dm = distance_matrix(t);
    const int n = t.num_nodes();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const Distance d = node_distance(t, i, j);
        EXPECT_EQ(d, dm[i * n + j]);
        EXPECT_EQ(d.is_finite(), t.span(i).contains(t.span(j)));
        EXPECT_EQ(d == Distance::finite(1), t.parent(j) == i);
        for (int k = 0; k < n; ++k) EXPECT_EQ(rule_distance(t, i, j, k), rule_distance(t, i, k, j));
      }
  }
}

TEST(SourceTree, RejectsNonTrees) {
  EXPECT_THROW(SourceTree::from_spans(3, {{0, 3}, {0, 1}, {1, 2}, {2, 3}}), std::invalid_argument);
  EXPECT_THROW(SourceTree::from_spans(3, {{0, 3}, {0, 2}, {1, 3}, {0, 1}, {2, 3}}), std::invalid_argument);
  EXPECT_THROW(random_binary_tree(0, 1), std::invalid_argument);
}

}  // namespace
}  // namespace qcfg

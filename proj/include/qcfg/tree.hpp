#pragma once

// Source-side binary parse trees as sets of spans, plus the downward node
// distance that every hierarchy constraint is built on.

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qcfg {

struct Span {
  int start = 0;  // inclusive
  int end = 0;    // exclusive

  int width() const { return end - start; }
  bool contains(const Span& o) const { return start <= o.start && o.end <= end; }
  auto operator<=>(const Span&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Edge count of a downward path, or infinity when no such path exists.
/// Reading the value of an infinite distance throws, so it cannot leak into
/// arithmetic by accident.
class Distance {
 public:
  static constexpr Distance infinite() { return Distance(); }
  static constexpr Distance finite(int edges) { return Distance(edges); }

  constexpr bool is_finite() const { return edges_ >= 0; }
  constexpr bool is_infinite() const { return edges_ < 0; }
  int value() const {
    if (!is_finite()) throw std::logic_error("value() of an infinite distance");
    return edges_;
  }

  constexpr bool operator==(const Distance&) const = default;
  constexpr std::strong_ordering operator<=>(const Distance& o) const {
    if (is_infinite() || o.is_infinite()) {
      return is_infinite() == o.is_infinite() ? std::strong_ordering::equal
             : is_infinite()                  ? std::strong_ordering::greater
                                              : std::strong_ordering::less;
    }
    return edges_ <=> o.edges_;
  }

 private:
  constexpr Distance() : edges_(-1) {}
  constexpr explicit Distance(int e) : edges_(e) {}
  int edges_;
};

inline std::string to_string(const Distance& d) {
  return d.is_finite() ? std::to_string(d.value()) : std::string("inf");
}

/// Binary tree over S leaves with 2S-1 nodes. Nodes are indexed by their span
/// in (start, end) order, which is stable across runs and serializations.
class SourceTree {
 public:
  static constexpr int kNone = -1;

  /// Builds a tree from its set of spans. Throws std::invalid_argument unless
  /// the spans form a full binary bracketing of [0, num_leaves).
  static SourceTree from_spans(int num_leaves, std::vector<Span> spans) {
    if (num_leaves < 1) throw std::invalid_argument("tree needs at least one leaf");
    std::sort(spans.begin(), spans.end());
    if (std::adjacent_find(spans.begin(), spans.end()) != spans.end())
      throw std::invalid_argument("duplicate span");
    if (static_cast<int>(spans.size()) != 2 * num_leaves - 1)
      throw std::invalid_argument("binary tree over " + std::to_string(num_leaves) + " leaves needs " +
                                  std::to_string(2 * num_leaves - 1) + " spans, got " +
                                  std::to_string(spans.size()));
    for (const Span& s : spans) {
      if (s.start < 0 || s.start >= s.end || s.end > num_leaves)
        throw std::invalid_argument("span out of range");
    }

    SourceTree t;
    t.num_leaves_ = num_leaves;
    t.nodes_ = std::move(spans);
    const int n = t.num_nodes();
    t.parent_.assign(n, kNone);
    t.children_.assign(n, {kNone, kNone});
    t.root_ = t.index_of({0, num_leaves});
    if (t.root_ == kNone) throw std::invalid_argument("missing root span");

    for (int i = 0; i < n; ++i) {
      const Span s = t.nodes_[i];
      if (s.width() == 1) continue;
      bool found = false;
      for (int mid = s.start + 1; mid < s.end && !found; ++mid) {
        const int l = t.index_of({s.start, mid});
        const int r = t.index_of({mid, s.end});
        if (l != kNone && r != kNone) {
          t.children_[i] = {l, r};
          found = true;
        }
      }
      if (!found) throw std::invalid_argument("span has no binary split into child spans");
    }
    for (int i = 0; i < n; ++i) {
      auto [l, r] = t.children_[i];
      if (l == kNone) continue;
      if (t.parent_[l] != kNone || t.parent_[r] != kNone)
        throw std::invalid_argument("spans do not form a tree");
      t.parent_[l] = i;
      t.parent_[r] = i;
    }
    for (int i = 0; i < n; ++i) {
      if (i != t.root_ && t.parent_[i] == kNone) throw std::invalid_argument("crossing or orphan span");
    }
    return t;
  }

  int num_leaves() const { return num_leaves_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int root() const { return root_; }
  const std::vector<Span>& nodes() const { return nodes_; }
  const Span& span(int node) const { return nodes_.at(check(node)); }
  int parent(int node) const { return parent_.at(check(node)); }
  std::pair<int, int> children(int node) const { return children_.at(check(node)); }
  bool is_leaf(int node) const { return children_.at(check(node)).first == kNone; }

  int index_of(const Span& s) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), s);
    return it != nodes_.end() && *it == s ? static_cast<int>(it - nodes_.begin()) : kNone;
  }

  /// Node indices of the leaves, left to right.
  std::vector<int> leaves() const {
    std::vector<int> out;
    for (int i = 0; i < num_nodes(); ++i)
      if (is_leaf(i)) out.push_back(i);
    return out;
  }

  /// Canonical bracketing; leaves are written as their token positions.
  std::string render() const { return render_node(root_); }

  /// FNV-1a over the span list; identifies the tree in serialized headers.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    };
    mix(static_cast<std::uint64_t>(num_leaves_));
    for (const Span& s : nodes_) {
      mix(static_cast<std::uint64_t>(s.start));
      mix(static_cast<std::uint64_t>(s.end));
    }
    return h;
  }

  bool operator==(const SourceTree& o) const { return num_leaves_ == o.num_leaves_ && nodes_ == o.nodes_; }

 private:
  int check(int node) const {
    if (node < 0 || node >= num_nodes())
      throw std::out_of_range("node index " + std::to_string(node) + " out of range [0, " +
                              std::to_string(num_nodes()) + ")");
    return node;
  }

  std::string render_node(int node) const {
    if (is_leaf(node)) return std::to_string(nodes_[node].start);
    auto [l, r] = children_[node];
    return "(" + render_node(l) + " " + render_node(r) + ")";
  }

  int num_leaves_ = 0;
  int root_ = kNone;
  std::vector<Span> nodes_;
  std::vector<int> parent_;
  std::vector<std::pair<int, int>> children_;
};

namespace detail {

class BracketParser {
 public:
  explicit BracketParser(std::string_view text) : text_(text) {}

  SourceTree parse(int num_leaves) {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("empty bracketing", pos_);
    parse_node();
    skip_ws();
    if (pos_ != text_.size()) throw ParseError("trailing input after tree", pos_);
    if (leaves_ != num_leaves)
      throw ParseError("leaf count mismatch: expected " + std::to_string(num_leaves) + ", found " +
                           std::to_string(leaves_),
                       pos_);
    return SourceTree::from_spans(num_leaves, std::move(spans_));
  }

 private:
  Span parse_node() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    if (text_[pos_] == ')') throw ParseError("unbalanced ')'", pos_);
    if (text_[pos_] != '(') {
      const std::size_t begin = pos_;
      while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
             text_[pos_] != '(' && text_[pos_] != ')')
        ++pos_;
      if (pos_ == begin) throw ParseError("expected token", pos_);
      Span s{leaves_, leaves_ + 1};
      ++leaves_;
      spans_.push_back(s);
      return s;
    }
    const std::size_t open = pos_++;
    std::vector<Span> kids;
    for (;;) {
      skip_ws();
      if (pos_ >= text_.size()) throw ParseError("unclosed '(' opened", open);
      if (text_[pos_] == ')') break;
      if (kids.size() == 2) throw ParseError("non-binary node (more than two children)", pos_);
      kids.push_back(parse_node());
    }
    if (kids.size() != 2)
      throw ParseError("non-binary node (" + std::to_string(kids.size()) + " children)", open);
    ++pos_;
    Span s{kids[0].start, kids[1].end};
    spans_.push_back(s);
    return s;
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int leaves_ = 0;
  std::vector<Span> spans_;
};

}  // namespace detail

/// Parses e.g. "((a b) c)". Every bracket must hold exactly two subtrees.
inline SourceTree parse_bracketed(std::string_view text, int num_leaves) {
  return detail::BracketParser(text).parse(num_leaves);
}

/// Recursive random split points; deterministic in the seed.
inline SourceTree random_binary_tree(int num_leaves, std::uint64_t seed) {
  if (num_leaves < 1) throw std::invalid_argument("random_binary_tree needs num_leaves >= 1");
  std::mt19937_64 rng(seed);
  std::vector<Span> spans;
  std::vector<Span> stack{{0, num_leaves}};
  while (!stack.empty()) {
    Span s = stack.back();
    stack.pop_back();
    spans.push_back(s);
    if (s.width() == 1) continue;
    std::uniform_int_distribution<int> pick(s.start + 1, s.end - 1);
    const int mid = pick(rng);
    stack.push_back({mid, s.end});
    stack.push_back({s.start, mid});
  }
  return SourceTree::from_spans(num_leaves, std::move(spans));
}

/// Edges on the downward path ancestor -> descendant; infinite when the
/// second node is not in the first node's subtree.
inline Distance node_distance(const SourceTree& tree, int ancestor, int descendant) {
  tree.span(ancestor);
  int cur = descendant;
  int edges = 0;
  while (cur != SourceTree::kNone) {
    if (cur == ancestor) return Distance::finite(edges);
    cur = tree.parent(cur);
    ++edges;
  }
  return Distance::infinite();
}

inline Distance rule_distance(const SourceTree& tree, int parent, int left, int right) {
  return std::max(node_distance(tree, parent, left), node_distance(tree, parent, right));
}

/// All-pairs node distances, row-major [ancestor][descendant].
inline std::vector<Distance> distance_matrix(const SourceTree& tree) {
  const int n = tree.num_nodes();
  std::vector<Distance> out(static_cast<std::size_t>(n) * n, Distance::infinite());
  for (int d = 0; d < n; ++d) {
    int cur = d;
    int edges = 0;
    while (cur != SourceTree::kNone) {
      out[static_cast<std::size_t>(cur) * n + d] = Distance::finite(edges);
      cur = tree.parent(cur);
      ++edges;
    }
  }
  return out;
}

}  // namespace qcfg

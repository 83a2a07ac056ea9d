#pragma once

// A target-side derivation: the rules applied while generating t2, in
// preorder, each carrying the span (and split point) it covers so that
// rule-level features can be recomputed without re-parsing.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qcfg/grammar.hpp"

namespace qcfg {

enum class RuleKind : std::uint8_t { Start, Binary, Terminal };

struct AppliedRule {
  RuleKind kind = RuleKind::Start;
  int row = -1;    // Start/Binary: lhs row (A, node). Terminal: preterminal row (D, node).
  int left = -1;   // Binary: left child column (B, node)
  int right = -1;  // Binary: right child column (C, node)
  int begin = 0;   // span start
  int split = -1;  // Binary only
  int end = 0;     // span end (exclusive)
  int word = -1;   // Terminal only

  bool operator==(const AppliedRule&) const = default;
  auto operator<=>(const AppliedRule&) const = default;
};

struct Derivation {
  std::vector<AppliedRule> rules;
  double log_weight = 0.0;
};

/// Log-weight of one rule application under a table.
inline double rule_log_weight(const QcfgRuleTable& t, const AppliedRule& r) {
  switch (r.kind) {
    case RuleKind::Start:
      return t.start[r.row];
    case RuleKind::Binary:
      return t.binary_at(r.row, r.left, r.right);
    case RuleKind::Terminal:
      return t.terminal_at(r.row, r.word);
  }
  throw std::logic_error("bad rule kind");
}

inline double derivation_log_weight(const QcfgRuleTable& t, const Derivation& d) {
  double s = 0.0;
  for (const auto& r : d.rules) s += rule_log_weight(t, r);
  return s;
}

/// Source node on the left-hand side of a rule, or -1 for start rules.
inline int lhs_node(const QcfgRuleTable& t, const AppliedRule& r) {
  return r.kind == RuleKind::Start ? -1 : r.row % t.num_nodes;
}

}  // namespace qcfg

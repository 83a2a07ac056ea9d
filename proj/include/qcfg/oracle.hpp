#pragma once

// Brute-force ground truth for tiny instances: every finite-weight, labeled,
// aligned target derivation is listed explicitly, and partition values,
// posteriors, entropies, expected counts, rewards and KLs are computed by
// their definitional sums. Nothing here touches the chart code.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "qcfg/derivation.hpp"
#include "qcfg/grammar.hpp"
#include "qcfg/log_math.hpp"
#include "qcfg/tree.hpp"

namespace qcfg::oracle {

struct Caps {
  int max_nonterminals = 4;
  int max_preterminals = 4;
  int max_source_leaves = 4;
  int max_target_len = 4;
  std::size_t max_derivations = 400'000;
};

class CapExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

namespace detail {

struct Enumerator {
  const QcfgRuleTable& table;
  std::span<const int> target;
  std::size_t cap;
  std::map<std::tuple<int, int, int>, std::vector<Derivation>> memo;

  // Sub-derivations rooted at column `col` over [i, k), rules in preorder.
  const std::vector<Derivation>& expand(int i, int k, int col) {
    const auto key = std::make_tuple(i, k, col);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::vector<Derivation> out;
    const int nt_cols = table.cfg.num_nonterminals * table.num_nodes;
    if (k - i == 1) {
      if (col >= nt_cols) {
        const int row = col - nt_cols;
        const double w = table.terminal_at(row, target[i]);
        if (w != kNegInf) out.push_back({{{RuleKind::Terminal, row, -1, -1, i, -1, k, target[i]}}, w});
      }
    } else if (col < nt_cols) {
      const int kids = table.num_children();
      for (int j = i + 1; j < k; ++j)
        for (int b = 0; b < kids; ++b)
          for (int c = 0; c < kids; ++c) {
            const double w = table.binary_at(col, b, c);
            if (w == kNegInf) continue;
            const auto& ls = expand(i, j, b);
            if (ls.empty()) continue;
            const auto& rs = expand(j, k, c);
            for (const auto& l : ls)
              for (const auto& r : rs) {
                Derivation d;
                d.rules.reserve(1 + l.rules.size() + r.rules.size());
                d.rules.push_back({RuleKind::Binary, col, b, c, i, j, k, -1});
                d.rules.insert(d.rules.end(), l.rules.begin(), l.rules.end());
                d.rules.insert(d.rules.end(), r.rules.begin(), r.rules.end());
                d.log_weight = w + l.log_weight + r.log_weight;
                out.push_back(std::move(d));
                if (out.size() > cap) throw CapExceeded("oracle derivation cap exceeded");
              }
          }
    }
    return memo.emplace(key, std::move(out)).first->second;
  }
};

}  // namespace detail

/// Every derivation of `target` with finite weight. Throws CapExceeded when
/// the instance is larger than the caps allow.
inline std::vector<Derivation> enumerate(const QcfgRuleTable& table, const SourceTree& tree,
                                         std::span<const int> target, const Caps& caps = {}) {
  if (!table.has_binary()) throw std::invalid_argument("oracle needs a dense binary table");
  if (tree.num_nodes() != table.num_nodes) throw std::invalid_argument("source tree does not match grammar");
  if (target.empty()) throw std::invalid_argument("empty target sequence");
  if (table.cfg.num_nonterminals > caps.max_nonterminals || table.cfg.num_preterminals > caps.max_preterminals ||
      tree.num_leaves() > caps.max_source_leaves || static_cast<int>(target.size()) > caps.max_target_len)
    throw CapExceeded("instance exceeds oracle caps (|NT|,|PT| <= " + std::to_string(caps.max_nonterminals) +
                      ", S <= " + std::to_string(caps.max_source_leaves) +
                      ", T <= " + std::to_string(caps.max_target_len) + ")");
  for (int w : target)
    if (w < 0 || w >= table.cfg.vocab_size) throw std::out_of_range("target token outside vocabulary");

  detail::Enumerator e{table, target, caps.max_derivations, {}};
  const int t_len = static_cast<int>(target.size());
  std::vector<Derivation> out;
  for (int a = 0; a < table.num_lhs(); ++a) {
    if (table.start[a] == kNegInf) continue;
    for (const auto& sub : e.expand(0, t_len, a)) {
      Derivation d;
      d.rules.reserve(sub.rules.size() + 1);
      d.rules.push_back({RuleKind::Start, a, -1, -1, 0, -1, t_len, -1});
      d.rules.insert(d.rules.end(), sub.rules.begin(), sub.rules.end());
      d.log_weight = table.start[a] + sub.log_weight;
      out.push_back(std::move(d));
      if (out.size() > caps.max_derivations) throw CapExceeded("oracle derivation cap exceeded");
    }
  }
  return out;
}

inline double log_z(std::span<const Derivation> ds) {
  double m = kNegInf;
  for (const auto& d : ds) m = std::max(m, d.log_weight);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (const auto& d : ds) s += std::exp(d.log_weight - m);
  return m + std::log(s);
}

inline double max_log_weight(std::span<const Derivation> ds) {
  double m = kNegInf;
  for (const auto& d : ds) m = std::max(m, d.log_weight);
  return m;
}

/// Normalized derivation probabilities, in list order.
inline std::vector<double> posterior(std::span<const Derivation> ds) {
  if (ds.empty()) throw std::invalid_argument("posterior of an empty derivation list");
  const double z = log_z(ds);
  std::vector<double> p;
  p.reserve(ds.size());
  for (const auto& d : ds) p.push_back(std::exp(d.log_weight - z));
  return p;
}

inline double entropy(std::span<const Derivation> ds) {
  if (ds.empty()) throw std::invalid_argument("entropy of an empty derivation list");
  const double z = log_z(ds);
  double h = 0.0;
  for (const auto& d : ds) {
    const double lp = d.log_weight - z;
    h -= std::exp(lp) * lp;
  }
  return h;
}

/// Posterior-weighted rule counts, laid out like the rule table.
struct Counts {
  std::vector<double> start, binary, terminal;
};

inline Counts expected_counts(std::span<const Derivation> ds, const QcfgRuleTable& table) {
  if (ds.empty()) throw std::invalid_argument("expected counts of an empty derivation list");
  Counts c{std::vector<double>(table.start.size(), 0.0), std::vector<double>(table.binary.size(), 0.0),
           std::vector<double>(table.terminal.size(), 0.0)};
  const auto p = posterior(ds);
  for (std::size_t n = 0; n < ds.size(); ++n)
    for (const auto& r : ds[n].rules) {
      switch (r.kind) {
        case RuleKind::Start:
          c.start[r.row] += p[n];
          break;
        case RuleKind::Binary:
          c.binary[table.binary_index(r.row, r.left, r.right)] += p[n];
          break;
        case RuleKind::Terminal:
          c.terminal[static_cast<std::size_t>(r.row) * table.cfg.vocab_size + r.word] += p[n];
          break;
      }
    }
  return c;
}

/// log sum_t p(t) prod_{binary r in t} zeta(d(r)), with d computed from the
/// rule's aligned source nodes. `log_reward` maps a distance to log zeta.
inline double log_expected_reward(std::span<const Derivation> ds, const QcfgRuleTable& table, const SourceTree& tree,
                                  const std::function<double(Distance)>& log_reward) {
  std::vector<double> terms;
  terms.reserve(ds.size());
  const int n = table.num_nodes;
  for (const auto& d : ds) {
    double lw = d.log_weight;
    for (const auto& r : d.rules) {
      if (r.kind != RuleKind::Binary) continue;
      lw += log_reward(rule_distance(tree, r.row % n, r.left % n, r.right % n));
    }
    terms.push_back(lw);
  }
  return log_sum_exp(terms);
}

/// sum_t q(t) log(q(t) / p(t)) over derivations matched by their rule sequence.
inline double kl(std::span<const Derivation> q, std::span<const Derivation> p) {
  if (q.empty() || p.empty()) throw std::invalid_argument("KL of an empty derivation list");
  const double zq = log_z(q), zp = log_z(p);
  std::map<std::vector<AppliedRule>, double> p_log;
  for (const auto& d : p) p_log[d.rules] = d.log_weight - zp;
  double total = 0.0;
  for (const auto& d : q) {
    const double lq = d.log_weight - zq;
    if (lq == kNegInf) continue;
    auto it = p_log.find(d.rules);
    if (it == p_log.end()) throw std::domain_error("q has support outside p");
    total += std::exp(lq) * (lq - it->second);
  }
  return total;
}

/// Per source node, expected number of target nodes aligned to it.
inline std::vector<double> expected_alignments(std::span<const Derivation> ds, const QcfgRuleTable& table) {
  const auto p = posterior(ds);
  std::vector<double> phi(table.num_nodes, 0.0);
  for (std::size_t n = 0; n < ds.size(); ++n)
    for (const auto& r : ds[n].rules)
      if (r.kind != RuleKind::Start) phi[lhs_node(table, r)] += p[n];
  return phi;
}

}  // namespace qcfg::oracle

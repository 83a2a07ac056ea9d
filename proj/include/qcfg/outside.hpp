#pragma once

// Inside-outside expected rule counts under p(t2 | t1, s2).
//
// The outside pass propagates posterior marginals of chart items instead of
// raw outside scores: an item's marginal is in [0, 1], and each binary
// application contributes m(parent) * p(r) * beta(left) * beta(right) / beta(parent).

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "qcfg/chart.hpp"
#include "qcfg/grammar.hpp"
#include "qcfg/inside.hpp"
#include "qcfg/log_math.hpp"
#include "qcfg/tree.hpp"

namespace qcfg {

/// Linear-space expectations laid out exactly like the rule table.
struct ExpectedCounts {
  double log_z = kNegInf;
  std::vector<double> start;
  std::vector<double> binary;
  std::vector<double> terminal;

  static ExpectedCounts zeros_like(const QcfgRuleTable& t) {
    ExpectedCounts c;
    c.start.assign(t.start.size(), 0.0);
    c.binary.assign(t.binary.size(), 0.0);
    c.terminal.assign(t.terminal.size(), 0.0);
    return c;
  }

  /// Expected number of target nodes aligned to each source node (the
  /// left-hand-side node of every binary and terminal rule).
  std::vector<double> alignments_per_node(const QcfgRuleTable& t) const {
    std::vector<double> phi(t.num_nodes, 0.0);
    const std::size_t kk = static_cast<std::size_t>(t.num_children()) * t.num_children();
    for (std::size_t i = 0; i < binary.size(); ++i) phi[(i / kk) % t.num_nodes] += binary[i];
    const std::size_t v = t.cfg.vocab_size;
    for (std::size_t i = 0; i < terminal.size(); ++i) phi[(i / v) % t.num_nodes] += terminal[i];
    return phi;
  }
};

inline double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

inline ExpectedCounts expected_rule_counts(const QcfgRuleTable& table, const SourceTree& tree,
                                           std::span<const int> target) {
  const VanillaInside kernel(table);
  const Chart<double> beta = kernel.chart(tree, target);
  const double log_z = chart_log_partition(table, beta);
  if (log_z == kNegInf) throw std::domain_error("target has no derivation (inside value is -inf)");

  const int t_len = static_cast<int>(target.size());
  const int n = table.num_nodes;
  ExpectedCounts out = ExpectedCounts::zeros_like(table);
  out.log_z = log_z;
  Chart<double> marg(t_len, table.num_children(), 0.0);

  {
    auto top = marg.cell(0, t_len);
    const auto b = beta.cell(0, t_len);
    for (int a = 0; a < table.num_lhs(); ++a) {
      if (table.start[a] == kNegInf || b[a] == kNegInf) continue;
      const double m = std::exp(table.start[a] + b[a] - log_z);
      top[a] = m;
      out.start[a] = m;
    }
  }

  for (int w = t_len; w >= 2; --w)
    for (int i = 0; i + w <= t_len; ++i) {
      const int k = i + w;
      const auto parent = marg.cell(i, k);
      const auto pb = beta.cell(i, k);
      for (int a = 0; a < table.num_lhs(); ++a) {
        if (parent[a] == 0.0) continue;
        for (int j = i + 1; j < k; ++j) {
          const auto lb = detail::child_block(table.cfg, n, j - i);
          const auto rb = detail::child_block(table.cfg, n, k - j);
          const auto bl = beta.cell(i, j);
          const auto br = beta.cell(j, k);
          auto ml = marg.cell(i, j);
          auto mr = marg.cell(j, k);
          for (int b = lb.lo; b < lb.hi; ++b) {
            if (bl[b] == kNegInf) continue;
            for (int c = rb.lo; c < rb.hi; ++c) {
              const std::size_t idx = table.binary_index(a, b, c);
              const double wt = table.binary[idx];
              if (wt == kNegInf || br[c] == kNegInf) continue;
              const double mu = parent[a] * std::exp(wt + bl[b] + br[c] - pb[a]);
              out.binary[idx] += mu;
              ml[b] += mu;
              mr[c] += mu;
            }
          }
        }
      }
    }

  const std::size_t v = table.cfg.vocab_size;
  for (int i = 0; i < t_len; ++i) {
    const auto m = marg.cell(i, i + 1);
    for (int d = 0; d < table.cfg.num_preterminals; ++d)
      for (int node = 0; node < n; ++node)
        out.terminal[table.preterminal_row(d, node) * v + target[i]] += m[table.preterminal_child(d, node)];
  }
  return out;
}

}  // namespace qcfg

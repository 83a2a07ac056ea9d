#pragma once

// Constraints on alignments: the soft tree-hierarchy reward with an entropy
// bonus, and the coverage constraint solved by posterior regularization.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcfg/grammar.hpp"
#include "qcfg/inside.hpp"
#include "qcfg/log_math.hpp"
#include "qcfg/outside.hpp"
#include "qcfg/tree.hpp"

namespace qcfg {

/// zeta(d) = d e^{-d}; zeta(inf) = 0.
inline double default_reward(Distance d) {
  if (d.is_infinite()) return 0.0;
  const double x = d.value();
  return x * std::exp(-x);
}

/// zeta(0..max_d); index d holds zeta(d).
inline std::vector<double> reward_values(int max_d) {
  if (max_d < 1) throw std::invalid_argument("reward_values needs max_d >= 1");
  std::vector<double> out;
  for (int d = 0; d <= max_d; ++d) out.push_back(default_reward(Distance::finite(d)));
  return out;
}

struct RewardConfig {
  std::function<double(Distance)> reward = default_reward;
  double tau = 0.0;  // entropy weight
};

/// Binary rules rescaled by zeta(d(r)); start and terminal rules unchanged.
inline QcfgRuleTable reward_weighted_table(const QcfgRuleTable& table, const SourceTree& tree,
                                           const std::function<double(Distance)>& reward) {
  if (tree.num_nodes() != table.num_nodes) throw std::invalid_argument("tree does not match table");
  const int n = table.num_nodes, nt = table.cfg.num_nonterminals, m = table.cfg.num_child_symbols();
  const auto dist = distance_matrix(tree);
  std::vector<double> log_zeta(static_cast<std::size_t>(n) * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Distance d = std::max(dist[static_cast<std::size_t>(i) * n + j], dist[static_cast<std::size_t>(i) * n + k]);
        const double z = reward(d);
        if (z < 0.0) throw std::invalid_argument("reward must be non-negative");
        log_zeta[(static_cast<std::size_t>(i) * n + j) * n + k] = z > 0.0 ? std::log(z) : kNegInf;
      }
  QcfgRuleTable out = table;
  out.normalized = false;
  for (int a = 0; a < nt; ++a)
    for (int i = 0; i < n; ++i)
      for (int b = 0; b < m; ++b)
        for (int j = 0; j < n; ++j)
          for (int c = 0; c < m; ++c)
            for (int k = 0; k < n; ++k) {
              double& w = out.binary[out.binary_index(a * n + i, b * n + j, c * n + k)];
              const double lz = log_zeta[(static_cast<std::size_t>(i) * n + j) * n + k];
              w = (w == kNegInf || lz == kNegInf) ? kNegInf : w + lz;
            }
  return out;
}

/// H(p(t2 | t1, s2)) = log Z - E[sum_r log w_r], from one inside-outside pass.
inline double posterior_entropy(const QcfgRuleTable& table, const ExpectedCounts& counts) {
  double expected_log_weight = 0.0;
  auto accumulate = [&](const auto& weights, const std::vector<double>& c) {
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c[i] > 0.0) expected_log_weight += c[i] * weights[i];
  };
  accumulate(table.start, counts.start);
  accumulate(table.binary, counts.binary);
  accumulate(table.terminal, counts.terminal);
  return counts.log_z - expected_log_weight;
}

struct RewardObjective {
  double log_z = kNegInf;
  double log_expected_reward = kNegInf;
  double entropy = 0.0;
  double objective = kNegInf;  // log_expected_reward + tau * entropy
};

inline RewardObjective expected_reward_objective(const QcfgRuleTable& table, const SourceTree& tree,
                                                 std::span<const int> target, const RewardConfig& cfg) {
  RewardObjective out;
  const ExpectedCounts counts = expected_rule_counts(table, tree, target);
  out.log_z = counts.log_z;
  out.entropy = posterior_entropy(table, counts);
  out.log_expected_reward = inside_vanilla(reward_weighted_table(table, tree, cfg.reward), tree, target);
  out.objective = out.log_expected_reward + cfg.tau * out.entropy;
  return out;
}

// ---------------------------------------------------------------------------
// Coverage constraint via posterior regularization.

struct CoverageConfig {
  double upper_bound = 1.0;  // u
  std::vector<double> xi;    // per-node bounds; empty means u * 1
  double gamma = 1.0;
  bool penalize = true;  // combined = log p - gamma * KL when set, + gamma * KL otherwise
  double step = 1.0;
  int max_iterations = 500;
  double tolerance = 1e-4;

  std::vector<double> bounds(int num_nodes) const {
    if (upper_bound < 1.0) throw std::invalid_argument("coverage upper bound u must be >= 1");
    if (xi.empty()) return std::vector<double>(num_nodes, upper_bound);
    if (static_cast<int>(xi.size()) != num_nodes) throw std::invalid_argument("xi length must equal node count");
    return xi;
  }
};

struct DualState {
  std::vector<double> lambda;
  double dual_value = kNegInf;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;        // inf-norm of the projected gradient
  std::vector<double> expected_phi;  // E_q[phi] at lambda
  std::vector<double> xi;
  std::vector<double> trajectory;  // dual value after each accepted step, starting at lambda = 0
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, DualState state) : std::runtime_error(what), state_(std::move(state)) {}
  const DualState& state() const { return state_; }

 private:
  DualState state_;
};

/// Rule weights p(r) exp(-lambda . phi(r)); phi(r) is the indicator of the
/// source node on the rule's left-hand side (binary and terminal rules).
inline QcfgRuleTable coverage_weighted_table(const QcfgRuleTable& table, std::span<const double> lambda) {
  if (static_cast<int>(lambda.size()) != table.num_nodes) throw std::invalid_argument("lambda length mismatch");
  QcfgRuleTable q = table;
  q.normalized = false;
  const std::size_t kk = static_cast<std::size_t>(q.num_children()) * q.num_children();
  for (int a = 0; a < q.num_lhs(); ++a) {
    const double l = lambda[q.node_of(a)];
    if (l == 0.0) continue;
    for (std::size_t x = 0; x < kk; ++x) q.binary[a * kk + x] -= l;
  }
  const std::size_t v = q.cfg.vocab_size;
  for (int r = 0; r < q.num_preterminal_rows(); ++r) {
    const double l = lambda[r % q.num_nodes];
    if (l == 0.0) continue;
    for (std::size_t w = 0; w < v; ++w) q.terminal[r * v + w] -= l;
  }
  return q;
}

struct PrSolution {
  DualState state;
  QcfgRuleTable q;  // factored q* weights
};

namespace detail {

struct DualEval {
  double value;
  std::vector<double> grad;
  std::vector<double> phi;
};

inline DualEval evaluate_dual(const QcfgRuleTable& table, const SourceTree& tree, std::span<const int> target,
                              std::span<const double> lambda, std::span<const double> xi, double log_z_p) {
  const QcfgRuleTable q = coverage_weighted_table(table, lambda);
  const ExpectedCounts c = expected_rule_counts(q, tree, target);
  DualEval e;
  e.phi = c.alignments_per_node(q);
  e.value = -(c.log_z - log_z_p);
  e.grad.resize(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    e.value -= xi[i] * lambda[i];
    e.grad[i] = e.phi[i] - xi[i];
  }
  return e;
}

inline double projected_gradient_norm(std::span<const double> lambda, std::span<const double> grad) {
  double g = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) g = std::max(g, std::abs(lambda[i] > 0.0 ? grad[i] : std::max(grad[i], 0.0)));
  return g;
}

}  // namespace detail

/// Dual value -xi . lambda - log Z(lambda) with Z normalized by the model's
/// own partition function.
inline double coverage_dual_value(const QcfgRuleTable& table, const SourceTree& tree, std::span<const int> target,
                                  std::span<const double> lambda, std::span<const double> xi) {
  const double log_z_p = inside_vanilla(table, tree, target);
  double v = -(inside_vanilla(coverage_weighted_table(table, lambda), tree, target) - log_z_p);
  for (std::size_t i = 0; i < lambda.size(); ++i) v -= xi[i] * lambda[i];
  return v;
}

/// Projected gradient ascent on the concave dual, halving the step whenever a
/// step would decrease the dual. Throws ConvergenceError (carrying the final
/// state) if the projected gradient does not reach the tolerance.
inline PrSolution pr_solve(const QcfgRuleTable& table, const SourceTree& tree, std::span<const int> target,
                           const CoverageConfig& cfg) {
  const int n = table.num_nodes;
  const std::vector<double> xi = cfg.bounds(n);
  const double log_z_p = inside_vanilla(table, tree, target);
  if (log_z_p == kNegInf) throw std::domain_error("target has no derivation (inside value is -inf)");

  DualState st;
  st.xi = xi;
  st.lambda.assign(n, 0.0);
  auto cur = detail::evaluate_dual(table, tree, target, st.lambda, xi, log_z_p);
  st.trajectory.push_back(cur.value);
  double step = cfg.step;

  for (st.iterations = 0; st.iterations < cfg.max_iterations; ++st.iterations) {
    st.gradient_norm = detail::projected_gradient_norm(st.lambda, cur.grad);
    if (st.gradient_norm <= cfg.tolerance) {
      st.converged = true;
      break;
    }
    for (;;) {
      std::vector<double> next(n);
      for (int i = 0; i < n; ++i) next[i] = std::max(0.0, st.lambda[i] + step * cur.grad[i]);
      auto cand = detail::evaluate_dual(table, tree, target, next, xi, log_z_p);
      if (cand.value >= cur.value || step < 1e-12) {
        st.lambda = std::move(next);
        cur = std::move(cand);
        break;
      }
      step *= 0.5;
    }
    st.trajectory.push_back(cur.value);
  }
  if (!st.converged) {
    st.gradient_norm = detail::projected_gradient_norm(st.lambda, cur.grad);
    st.converged = st.gradient_norm <= cfg.tolerance;
  }
  st.dual_value = cur.value;
  st.expected_phi = cur.phi;
  if (!st.converged)
    throw ConvergenceError("posterior regularization did not converge: projected gradient norm " +
                               std::to_string(st.gradient_norm) + " after " + std::to_string(st.iterations) +
                               " iterations",
                           st);
  return {st, coverage_weighted_table(table, st.lambda)};
}

/// KL(q || p) between the target-tree posteriors of two tables over the same
/// derivation space: sum_r E_q[c_r] (log q_r - log p_r) - log Z_q + log Z_p.
inline double kl_factored(const QcfgRuleTable& q, const QcfgRuleTable& p, const SourceTree& tree,
                          std::span<const int> target) {
  if (q.num_nodes != p.num_nodes || !(q.cfg == p.cfg)) throw std::invalid_argument("q and p tables differ in shape");
  const ExpectedCounts cq = expected_rule_counts(q, tree, target);
  const double log_z_p = inside_vanilla(p, tree, target);
  double total = log_z_p - cq.log_z;
  auto accumulate = [&](const auto& qw, const auto& pw, const std::vector<double>& c) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i] <= 0.0) continue;
      if (pw[i] == kNegInf) throw std::domain_error("q has support where p is -inf");
      total += c[i] * (qw[i] - pw[i]);
    }
  };
  accumulate(q.start, p.start, cq.start);
  accumulate(q.binary, p.binary, cq.binary);
  accumulate(q.terminal, p.terminal, cq.terminal);
  if (total < 0.0 && total > -1e-12) total = 0.0;
  return total;
}

struct PrObjective {
  double log_likelihood = kNegInf;
  double kl = 0.0;
  double combined = kNegInf;
  DualState state;
};

inline PrObjective pr_objective(const QcfgRuleTable& table, const SourceTree& tree, std::span<const int> target,
                                const CoverageConfig& cfg) {
  PrObjective out;
  const PrSolution sol = pr_solve(table, tree, target, cfg);
  out.state = sol.state;
  out.log_likelihood = inside_vanilla(table, tree, target);
  out.kl = kl_factored(sol.q, table, tree, target);
  out.combined = out.log_likelihood + (cfg.penalize ? -cfg.gamma : cfg.gamma) * out.kl;
  return out;
}

}  // namespace qcfg

#pragma once

// Exact ancestral sampling of target derivations from p(t2 | t1, s2).
// Top-down over the inside chart: the root item is drawn proportional to
// start * beta, and each item (i, k, A[a]) expands to (j, B[b], C[c]) with
// probability p(r) beta_ij(b) beta_jk(c) / beta_ik(a).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "qcfg/chart.hpp"
#include "qcfg/derivation.hpp"
#include "qcfg/grammar.hpp"
#include "qcfg/inside.hpp"

namespace qcfg {

class PosteriorSampler {
 public:
  PosteriorSampler(const QcfgRuleTable& table, const SourceTree& tree, std::span<const int> target)
      : table_(table), target_(target.begin(), target.end()), beta_(VanillaInside(table).chart(tree, target)) {
    log_z_ = chart_log_partition(table_, beta_);
    if (log_z_ == kNegInf) throw std::domain_error("target has no derivation (inside value is -inf)");
    const auto top = beta_.cell(0, len());
    for (int a = 0; a < table_.num_lhs(); ++a) {
      const double lw = (table_.start[a] == kNegInf || top[a] == kNegInf) ? kNegInf : table_.start[a] + top[a];
      push(root_, lw - log_z_, Choice{a, -1, -1, -1});
    }
  }

  double log_partition() const { return log_z_; }

  template <typename Rng>
  Derivation sample(Rng& rng) {
    Derivation d;
    const Choice& root = draw(root_, rng);
    d.rules.push_back({RuleKind::Start, root.row, -1, -1, 0, -1, len(), -1});
    expand(0, len(), root.row, rng, d);
    d.log_weight = derivation_log_weight(table_, d);
    return d;
  }

 private:
  struct Choice {
    int row, split, left, right;
  };
  struct Cdf {
    std::vector<double> cum;
    std::vector<Choice> choices;
  };

  int len() const { return static_cast<int>(target_.size()); }

  static void push(Cdf& cdf, double log_p, Choice c) {
    if (log_p == kNegInf) return;
    const double prev = cdf.cum.empty() ? 0.0 : cdf.cum.back();
    cdf.cum.push_back(prev + std::exp(log_p));
    cdf.choices.push_back(c);
  }

  template <typename Rng>
  const Choice& draw(const Cdf& cdf, Rng& rng) const {
    if (cdf.choices.empty()) throw std::logic_error("sampling from an item with no expansions");
    std::uniform_real_distribution<double> u(0.0, cdf.cum.back());
    const double x = u(rng);
    auto it = std::upper_bound(cdf.cum.begin(), cdf.cum.end(), x);
    if (it == cdf.cum.end()) --it;
    return cdf.choices[static_cast<std::size_t>(it - cdf.cum.begin())];
  }

  const Cdf& expansions(int i, int k, int a) {
    const std::size_t key = beta_.span_index(i, k) * static_cast<std::size_t>(table_.num_lhs()) + a;
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Cdf cdf;
    const int n = table_.num_nodes;
    const double parent = beta_.cell(i, k)[a];
    for (int j = i + 1; j < k; ++j) {
      const auto lb = detail::child_block(table_.cfg, n, j - i);
      const auto rb = detail::child_block(table_.cfg, n, k - j);
      const auto bl = beta_.cell(i, j);
      const auto br = beta_.cell(j, k);
      for (int b = lb.lo; b < lb.hi; ++b) {
        if (bl[b] == kNegInf) continue;
        for (int c = rb.lo; c < rb.hi; ++c) {
          const double w = table_.binary_at(a, b, c);
          if (w == kNegInf || br[c] == kNegInf) continue;
          push(cdf, w + bl[b] + br[c] - parent, Choice{a, j, b, c});
        }
      }
    }
    return cache_.emplace(key, std::move(cdf)).first->second;
  }

  template <typename Rng>
  void expand(int i, int k, int column, Rng& rng, Derivation& d) {
    if (k - i == 1) {
      const int row = column - table_.cfg.num_nonterminals * table_.num_nodes;
      d.rules.push_back({RuleKind::Terminal, row, -1, -1, i, -1, k, target_[i]});
      return;
    }
    const Choice c = draw(expansions(i, k, column), rng);
    d.rules.push_back({RuleKind::Binary, column, c.left, c.right, i, c.split, k, -1});
    expand(i, c.split, c.left, rng, d);
    expand(c.split, k, c.right, rng, d);
  }

  const QcfgRuleTable& table_;
  std::vector<int> target_;
  Chart<double> beta_;
  double log_z_ = kNegInf;
  Cdf root_;
  std::unordered_map<std::size_t, Cdf> cache_;
};

inline std::vector<Derivation> sample_target_trees(const QcfgRuleTable& table, const SourceTree& tree,
                                                   std::span<const int> target, int count, std::uint64_t seed) {
  PosteriorSampler sampler(table, tree, target);
  std::mt19937_64 rng(seed);
  std::vector<Derivation> out;
  out.reserve(count);
  for (int s = 0; s < count; ++s) out.push_back(sampler.sample(rng));
  return out;
}

inline Derivation sample_target_tree(const QcfgRuleTable& table, const SourceTree& tree, std::span<const int> target,
                                     std::uint64_t seed) {
  return sample_target_trees(table, tree, target, 1, seed).front();
}

}  // namespace qcfg

#pragma once

// Inside algorithms over a fixed source tree.
//
// The specialized log-space routines keep every chart cell in log space and
// run contractions in "scaled linear" form: a cell is exponentiated once
// after subtracting its max, products are accumulated in linear space, and
// the shifts are added back when the result is logged. Rule tables are
// exponentiated once per kernel. The semiring-generic routines run the same
// recursions with plus/times and are meant for small instances.
//
// Spans are visited by width ascending, then start. Width-1 cells carry only
// preterminal entries and wider cells only nonterminal entries, so each
// contraction touches one symbol block per child.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcfg/chart.hpp"
#include "qcfg/grammar.hpp"
#include "qcfg/log_math.hpp"
#include "qcfg/memory.hpp"
#include "qcfg/semiring.hpp"
#include "qcfg/tree.hpp"

namespace qcfg {

namespace detail {

inline void check_lexical(const QcfgRuleTable& lex, const SymbolConfig& cfg, int num_nodes) {
  if (lex.num_nodes != num_nodes || lex.cfg.num_nonterminals != cfg.num_nonterminals ||
      lex.cfg.num_preterminals != cfg.num_preterminals)
    throw std::invalid_argument("lexical rules do not match grammar dimensions");
  if (lex.start.size() != static_cast<std::size_t>(lex.num_lhs()) ||
      lex.terminal.size() != static_cast<std::size_t>(lex.num_preterminal_rows()) * lex.cfg.vocab_size)
    throw std::invalid_argument("lexical rule tables have wrong size");
}

inline void check_instance(const QcfgRuleTable& lex, const SourceTree& tree, std::span<const int> target) {
  if (tree.num_nodes() != lex.num_nodes) throw std::invalid_argument("source tree does not match grammar");
  if (target.empty()) throw std::invalid_argument("empty target sequence");
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target[i] < 0 || target[i] >= lex.cfg.vocab_size)
      throw std::out_of_range("target token " + std::to_string(target[i]) + " at position " + std::to_string(i) +
                              " outside vocabulary of size " + std::to_string(lex.cfg.vocab_size));
}

struct Block {
  int lo = 0;
  int hi = 0;
  int size() const { return hi - lo; }
};

// Child columns that can be non-zero in a cell of the given width.
inline Block child_block(const SymbolConfig& cfg, int num_nodes, int width) {
  const int nt_cols = cfg.num_nonterminals * num_nodes;
  return width == 1 ? Block{nt_cols, cfg.num_child_symbols() * num_nodes} : Block{0, nt_cols};
}

// exp(x - shift) over a block of a log cell; shift is the block max.
struct ScaledCell {
  double shift = kNegInf;
  std::vector<double> u;
};

inline ScaledCell scale_block(std::span<const double> logs) {
  ScaledCell out;
  for (double x : logs) out.shift = std::max(out.shift, x);
  out.u.assign(logs.size(), 0.0);
  if (out.shift == kNegInf) return out;
  for (std::size_t i = 0; i < logs.size(); ++i) out.u[i] = std::exp(logs[i] - out.shift);
  return out;
}

inline double log_scaled(double linear, double shift) {
  return linear > 0.0 ? std::log(linear) + shift : kNegInf;
}

template <typename Alloc>
tracked_vector<double> exp_all(const std::vector<double, Alloc>& logs) {
  tracked_vector<double> out(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) out[i] = std::exp(logs[i]);
  return out;
}

// Four independent accumulators so the compiler can vectorize without
// reassociation flags.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void fill_terminals(Chart<double>& chart, const QcfgRuleTable& lex, std::span<const int> target) {
  const int n = lex.num_nodes;
  for (int i = 0; i < static_cast<int>(target.size()); ++i) {
    auto cell = chart.cell(i, i + 1);
    for (int d = 0; d < lex.cfg.num_preterminals; ++d)
      for (int node = 0; node < n; ++node)
        cell[lex.preterminal_child(d, node)] = lex.terminal_at(lex.preterminal_row(d, node), target[i]);
  }
}

inline double root_value(const QcfgRuleTable& lex, const Chart<double>& chart) {
  const auto top = chart.cell(0, chart.target_len());
  LogAccumulator acc;
  for (int a = 0; a < lex.num_lhs(); ++a) {
    if (lex.start[a] == kNegInf || top[a] == kNegInf) continue;
    acc.add(lex.start[a] + top[a]);
  }
  return acc.value();
}

}  // namespace detail

/// Log partition of the target string from a finished chart.
inline double chart_log_partition(const QcfgRuleTable& lex, const Chart<double>& chart) {
  return detail::root_value(lex, chart);
}

/// Dense CKY over (symbol, node) pairs. Cost O(|NT|(|NT|+|PT|)^2 S^3 T^3).
class VanillaInside {
 public:
  explicit VanillaInside(const QcfgRuleTable& table) : VanillaInside(QcfgRuleTable(table)) {}

  /// Takes ownership and exponentiates the binary table in place.
  explicit VanillaInside(QcfgRuleTable&& table) : table_(std::move(table)) {
    if (table_.binary.size() != QcfgRuleTable::binary_size(table_.cfg, table_.num_nodes))
      throw std::invalid_argument("vanilla inside needs a dense binary table");
    for (double& x : table_.binary) x = std::exp(x);
  }

  const QcfgRuleTable& lexical() const { return table_; }

  Chart<double> chart(const SourceTree& tree, std::span<const int> target) const {
    detail::check_instance(table_, tree, target);
    const int t_len = static_cast<int>(target.size());
    const int n = table_.num_nodes;
    const int rows = table_.num_lhs();
    const std::size_t kids = table_.num_children();
    Chart<double> chart(t_len, table_.num_children(), kNegInf);
    detail::fill_terminals(chart, table_, target);

    std::vector<detail::ScaledCell> scaled(static_cast<std::size_t>(t_len) * (t_len + 1) / 2);
    auto finish = [&](int i, int k) {
      const auto blk = detail::child_block(table_.cfg, n, k - i);
      scaled[chart.span_index(i, k)] = detail::scale_block(chart.cell(i, k).subspan(blk.lo, blk.size()));
    };
    for (int i = 0; i < t_len; ++i) finish(i, i + 1);

    std::vector<double> acc(rows);
    for (int w = 2; w <= t_len; ++w) {
      for (int i = 0; i + w <= t_len; ++i) {
        const int k = i + w;
        double top = kNegInf;
        for (int j = i + 1; j < k; ++j)
          top = std::max(top, scaled[chart.span_index(i, j)].shift + scaled[chart.span_index(j, k)].shift);
        auto out = chart.cell(i, k);
        if (top == kNegInf) continue;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int a = 0; a < rows; ++a) {
          const double* row = table_.binary.data() + static_cast<std::size_t>(a) * kids * kids;
          double total = 0.0;
          for (int j = i + 1; j < k; ++j) {
            const auto& lc = scaled[chart.span_index(i, j)];
            const auto& rc = scaled[chart.span_index(j, k)];
            const double scale = std::exp(lc.shift + rc.shift - top);
            if (scale == 0.0) continue;
            const auto lb = detail::child_block(table_.cfg, n, j - i);
            const auto rb = detail::child_block(table_.cfg, n, k - j);
            const double* ur = rc.u.data();
            double s = 0.0;
            for (int b = 0; b < lb.size(); ++b) {
              const double ul = lc.u[b];
              if (ul == 0.0) continue;
              const double* p = row + static_cast<std::size_t>(lb.lo + b) * kids + rb.lo;
              s += ul * detail::dot(p, ur, rb.size());
            }
            total += scale * s;
          }
          out[a] = detail::log_scaled(total, top);
        }
        finish(i, k);
      }
    }
    return chart;
  }

  double log_partition(const SourceTree& tree, std::span<const int> target) const {
    return detail::root_value(table_, chart(tree, target));
  }

 private:
  QcfgRuleTable table_;  // binary part holds probabilities, not logs
};

inline double inside_vanilla(const QcfgRuleTable& table, const SourceTree& tree, std::span<const int> target) {
  return VanillaInside(table).log_partition(tree, target);
}

/// E model inside, either directly over the decomposed rules (projections
/// recomputed for every split, O(G_E T^3)) or in rank space (each cell is
/// projected once, O(|R| T^3 + (|NT|+|PT|) S |R| T^2)).
class EInside {
 public:
  EInside(const FactorTablesE& f, const QcfgRuleTable& lexical)
      : lex_(lexical), cfg_(f.cfg), n_(f.num_nodes), head_(detail::exp_all(f.head)),
        left_(detail::exp_all(f.left)), right_(detail::exp_all(f.right)) {
    detail::check_lexical(lexical, f.cfg, f.num_nodes);
    if (f.num_ranks() < 1 || f.head.size() != static_cast<std::size_t>(f.num_lhs()) * f.num_ranks() ||
        f.left.size() != static_cast<std::size_t>(f.num_ranks()) * f.num_children() || f.right.size() != f.left.size())
      throw std::invalid_argument("malformed E factor tables");
  }

  Chart<double> chart(const SourceTree& tree, std::span<const int> target, bool rank_space) const {
    detail::check_instance(lex_, tree, target);
    const int t_len = static_cast<int>(target.size());
    const int ranks = cfg_.num_ranks;
    const int kids = cfg_.num_child_symbols() * n_;
    const int rows = cfg_.num_nonterminals * n_;
    Chart<double> chart(t_len, kids, kNegInf);
    detail::fill_terminals(chart, lex_, target);

    // log sum_b factor[R][b] * exp(cell[b]) for every R.
    auto project = [&](int i, int k, const tracked_vector<double>& factor, std::vector<double>& out) {
      const auto blk = detail::child_block(cfg_, n_, k - i);
      const auto sc = detail::scale_block(chart.cell(i, k).subspan(blk.lo, blk.size()));
      out.assign(ranks, kNegInf);
      if (sc.shift == kNegInf) return;
      for (int r = 0; r < ranks; ++r) {
        const double* p = factor.data() + static_cast<std::size_t>(r) * kids + blk.lo;
        out[r] = detail::log_scaled(detail::dot(p, sc.u.data(), blk.size()), sc.shift);
      }
    };

    const std::size_t num_spans = static_cast<std::size_t>(t_len) * (t_len + 1) / 2;
    std::vector<std::vector<double>> proj_left, proj_right;
    if (rank_space) {
      proj_left.resize(num_spans);
      proj_right.resize(num_spans);
    }
    auto finish = [&](int i, int k) {
      if (!rank_space) return;
      const std::size_t s = chart.span_index(i, k);
      project(i, k, left_, proj_left[s]);
      project(i, k, right_, proj_right[s]);
    };
    for (int i = 0; i < t_len; ++i) finish(i, i + 1);

    std::vector<LogAccumulator> rank_acc(ranks);
    std::vector<double> pl, pr, rank_val(ranks);
    for (int w = 2; w <= t_len; ++w) {
      for (int i = 0; i + w <= t_len; ++i) {
        const int k = i + w;
        std::fill(rank_acc.begin(), rank_acc.end(), LogAccumulator{});
        for (int j = i + 1; j < k; ++j) {
          const std::vector<double>* l;
          const std::vector<double>* r;
          if (rank_space) {
            l = &proj_left[chart.span_index(i, j)];
            r = &proj_right[chart.span_index(j, k)];
          } else {
            project(i, j, left_, pl);
            project(j, k, right_, pr);
            l = &pl;
            r = &pr;
          }
          for (int q = 0; q < ranks; ++q)
            if ((*l)[q] != kNegInf && (*r)[q] != kNegInf) rank_acc[q].add((*l)[q] + (*r)[q]);
        }
        double top = kNegInf;
        for (int q = 0; q < ranks; ++q) {
          rank_val[q] = rank_acc[q].value();
          top = std::max(top, rank_val[q]);
        }
        if (top == kNegInf) {
          finish(i, k);
          continue;
        }
        for (int q = 0; q < ranks; ++q) rank_val[q] = std::exp(rank_val[q] - top);
        auto out = chart.cell(i, k);
        for (int a = 0; a < rows; ++a) {
          const double* h = head_.data() + static_cast<std::size_t>(a) * ranks;
          out[a] = detail::log_scaled(detail::dot(h, rank_val.data(), ranks), top);
        }
        finish(i, k);
      }
    }
    return chart;
  }

  double log_partition(const SourceTree& tree, std::span<const int> target, bool rank_space) const {
    return detail::root_value(lex_, chart(tree, target, rank_space));
  }

 private:
  const QcfgRuleTable& lex_;
  SymbolConfig cfg_;
  int n_;
  tracked_vector<double> head_, left_, right_;
};

inline double inside_e_naive(const FactorTablesE& f, const QcfgRuleTable& lexical, const SourceTree& tree,
                             std::span<const int> target) {
  return EInside(f, lexical).log_partition(tree, target, false);
}

inline double inside_e_rank(const FactorTablesE& f, const QcfgRuleTable& lexical, const SourceTree& tree,
                            std::span<const int> target) {
  return EInside(f, lexical).log_partition(tree, target, true);
}

/// P model inside with cached per-span projections:
///   tilde(R, a)       = sum_B p(R, a -> B) beta(B, a)          per finished cell
///   hat_ik(R, a2, a3) = sum_j tilde_ij(R, a2) tilde_jk(R, a3)
///   beta_ik(A, a1)    = sum_R p(A[a1] -> R) sum_{a2,a3} p(R, a1 -> a2, a3) hat_ik(R, a2, a3)
/// Cost O(|R| S^2 T^3 + ((2|NT|+|PT|) |R| S + |R| S^3) T^2).
class PInside {
 public:
  PInside(const FactorTablesP& f, const QcfgRuleTable& lexical)
      : lex_(lexical), cfg_(f.cfg), n_(f.num_nodes), head_(detail::exp_all(f.head)),
        triple_(detail::exp_all(f.triple)), left_(detail::exp_all(f.left_sym)), right_(detail::exp_all(f.right_sym)) {
    detail::check_lexical(lexical, f.cfg, f.num_nodes);
    const std::size_t rn = static_cast<std::size_t>(f.num_ranks()) * f.num_nodes;
    if (f.num_ranks() < 1 || f.head.size() != static_cast<std::size_t>(f.num_lhs()) * f.num_ranks() ||
        f.triple.size() != rn * f.num_nodes * f.num_nodes || f.left_sym.size() != rn * f.cfg.num_child_symbols() ||
        f.right_sym.size() != f.left_sym.size())
      throw std::invalid_argument("malformed P factor tables");
  }

  Chart<double> chart(const SourceTree& tree, std::span<const int> target) const {
    detail::check_instance(lex_, tree, target);
    const int t_len = static_cast<int>(target.size());
    const int n = n_, ranks = cfg_.num_ranks, m = cfg_.num_child_symbols(), nt = cfg_.num_nonterminals;
    const std::size_t rn = static_cast<std::size_t>(ranks) * n;
    const std::size_t nn = static_cast<std::size_t>(n) * n;
    Chart<double> chart(t_len, m * n, kNegInf);
    detail::fill_terminals(chart, lex_, target);

    // Scaled-linear tilde projections, [R][node], one shift per span.
    auto project = [&](int i, int k, const tracked_vector<double>& factor) {
      const auto blk = detail::child_block(cfg_, n, k - i);
      const auto sc = detail::scale_block(chart.cell(i, k).subspan(blk.lo, blk.size()));
      detail::ScaledCell out;
      out.shift = sc.shift;
      out.u.assign(rn, 0.0);
      if (sc.shift == kNegInf) return out;
      const int sym_lo = blk.lo / n, sym_hi = blk.hi / n;
      for (int r = 0; r < ranks; ++r)
        for (int a = 0; a < n; ++a) {
          const double* p = factor.data() + (static_cast<std::size_t>(r) * n + a) * m;
          double s = 0.0;
          for (int b = sym_lo; b < sym_hi; ++b) s += p[b] * sc.u[static_cast<std::size_t>(b - sym_lo) * n + a];
          out.u[static_cast<std::size_t>(r) * n + a] = s;
        }
      return out;
    };

    const std::size_t num_spans = static_cast<std::size_t>(t_len) * (t_len + 1) / 2;
    std::vector<detail::ScaledCell> tilde_left(num_spans), tilde_right(num_spans);
    auto finish = [&](int i, int k) {
      const std::size_t s = chart.span_index(i, k);
      tilde_left[s] = project(i, k, left_);
      tilde_right[s] = project(i, k, right_);
    };
    for (int i = 0; i < t_len; ++i) finish(i, i + 1);

    tracked_vector<double> hat(rn * n);  // [R][a2][a3]
    std::vector<double> gamma(rn);      // [R][a1]
    for (int w = 2; w <= t_len; ++w) {
      for (int i = 0; i + w <= t_len; ++i) {
        const int k = i + w;
        double top = kNegInf;
        for (int j = i + 1; j < k; ++j)
          top = std::max(top, tilde_left[chart.span_index(i, j)].shift + tilde_right[chart.span_index(j, k)].shift);
        if (top == kNegInf) {
          finish(i, k);
          continue;
        }
        std::fill(hat.begin(), hat.end(), 0.0);
        for (int j = i + 1; j < k; ++j) {
          const auto& tl = tilde_left[chart.span_index(i, j)];
          const auto& tr = tilde_right[chart.span_index(j, k)];
          const double scale = std::exp(tl.shift + tr.shift - top);
          if (scale == 0.0) continue;
          for (int r = 0; r < ranks; ++r) {
            const double* ur = tr.u.data() + static_cast<std::size_t>(r) * n;
            for (int a2 = 0; a2 < n; ++a2) {
              const double ul = scale * tl.u[static_cast<std::size_t>(r) * n + a2];
              if (ul == 0.0) continue;
              double* h = hat.data() + (static_cast<std::size_t>(r) * n + a2) * n;
              for (int a3 = 0; a3 < n; ++a3) h[a3] += ul * ur[a3];
            }
          }
        }
        for (int r = 0; r < ranks; ++r) {
          const double* h = hat.data() + static_cast<std::size_t>(r) * nn;
          for (int a1 = 0; a1 < n; ++a1) {
            const double* p = triple_.data() + (static_cast<std::size_t>(r) * n + a1) * nn;
            gamma[static_cast<std::size_t>(r) * n + a1] = detail::dot(p, h, nn);
          }
        }
        auto out = chart.cell(i, k);
        for (int a = 0; a < nt; ++a)
          for (int a1 = 0; a1 < n; ++a1) {
            const double* hd = head_.data() + (static_cast<std::size_t>(a) * n + a1) * ranks;
            double s = 0.0;
            for (int r = 0; r < ranks; ++r) s += hd[r] * gamma[static_cast<std::size_t>(r) * n + a1];
            out[a * n + a1] = detail::log_scaled(s, top);
          }
        finish(i, k);
      }
    }
    return chart;
  }

  double log_partition(const SourceTree& tree, std::span<const int> target) const {
    return detail::root_value(lex_, chart(tree, target));
  }

 private:
  const QcfgRuleTable& lex_;
  SymbolConfig cfg_;
  int n_;
  tracked_vector<double> head_, triple_, left_, right_;
};

inline double inside_p(const FactorTablesP& f, const QcfgRuleTable& lexical, const SourceTree& tree,
                       std::span<const int> target) {
  return PInside(f, lexical).log_partition(tree, target);
}

// ---------------------------------------------------------------------------
// Semiring-generic recursions.

namespace detail {

template <typename S>
Chart<typename S::value_type> generic_leaf_chart(const QcfgRuleTable& lex, std::span<const int> target) {
  using V = typename S::value_type;
  const int t_len = static_cast<int>(target.size());
  Chart<V> chart(t_len, lex.num_children(), S::zero());
  for (int i = 0; i < t_len; ++i) {
    auto cell = chart.cell(i, i + 1);
    for (int d = 0; d < lex.cfg.num_preterminals; ++d)
      for (int node = 0; node < lex.num_nodes; ++node)
        cell[lex.preterminal_child(d, node)] = S::from_log(lex.terminal_at(lex.preterminal_row(d, node), target[i]));
  }
  return chart;
}

template <typename S>
typename S::value_type generic_root(const QcfgRuleTable& lex, const Chart<typename S::value_type>& chart) {
  auto total = S::zero();
  const auto top = chart.cell(0, chart.target_len());
  for (int a = 0; a < lex.num_lhs(); ++a) total = S::plus(total, S::times(S::from_log(lex.start[a]), top[a]));
  return total;
}

}  // namespace detail

/// Dense recursion in an arbitrary semiring.
template <typename S>
typename S::value_type inside_generic(const QcfgRuleTable& table, const SourceTree& tree,
                                      std::span<const int> target) {
  detail::check_instance(table, tree, target);
  if (!table.has_binary()) throw std::invalid_argument("inside_generic needs a dense binary table");
  const int t_len = static_cast<int>(target.size());
  const int n = table.num_nodes;
  auto chart = detail::generic_leaf_chart<S>(table, target);
  for (int w = 2; w <= t_len; ++w)
    for (int i = 0; i + w <= t_len; ++i) {
      const int k = i + w;
      auto out = chart.cell(i, k);
      for (int a = 0; a < table.num_lhs(); ++a) {
        auto acc = S::zero();
        for (int j = i + 1; j < k; ++j) {
          const auto lb = detail::child_block(table.cfg, n, j - i);
          const auto rb = detail::child_block(table.cfg, n, k - j);
          const auto left = chart.cell(i, j);
          const auto right = chart.cell(j, k);
          for (int b = lb.lo; b < lb.hi; ++b)
            for (int c = rb.lo; c < rb.hi; ++c)
              acc = S::plus(acc, S::times(S::from_log(table.binary_at(a, b, c)), S::times(left[b], right[c])));
        }
        out[a] = acc;
      }
    }
  return detail::generic_root<S>(table, chart);
}

/// E-model recursion in an arbitrary semiring, naive or rank-space.
template <typename S>
typename S::value_type inside_generic(const FactorTablesE& f, const QcfgRuleTable& lexical, const SourceTree& tree,
                                      std::span<const int> target, bool rank_space) {
  using V = typename S::value_type;
  detail::check_lexical(lexical, f.cfg, f.num_nodes);
  detail::check_instance(lexical, tree, target);
  const int t_len = static_cast<int>(target.size());
  const int n = f.num_nodes, ranks = f.num_ranks(), kids = f.num_children();
  auto chart = detail::generic_leaf_chart<S>(lexical, target);

  auto project = [&](int i, int k, const tracked_vector<double>& factor) {
    const auto blk = detail::child_block(f.cfg, n, k - i);
    const auto cell = chart.cell(i, k);
    std::vector<V> out(ranks, S::zero());
    for (int r = 0; r < ranks; ++r)
      for (int b = blk.lo; b < blk.hi; ++b)
        out[r] = S::plus(out[r], S::times(S::from_log(factor[static_cast<std::size_t>(r) * kids + b]), cell[b]));
    return out;
  };
  const std::size_t num_spans = static_cast<std::size_t>(t_len) * (t_len + 1) / 2;
  std::vector<std::vector<V>> pl(num_spans), pr(num_spans);
  auto finish = [&](int i, int k) {
    if (!rank_space) return;
    pl[chart.span_index(i, k)] = project(i, k, f.left);
    pr[chart.span_index(i, k)] = project(i, k, f.right);
  };
  for (int i = 0; i < t_len; ++i) finish(i, i + 1);

  for (int w = 2; w <= t_len; ++w)
    for (int i = 0; i + w <= t_len; ++i) {
      const int k = i + w;
      std::vector<V> rank_val(ranks, S::zero());
      for (int j = i + 1; j < k; ++j) {
        const auto l = rank_space ? pl[chart.span_index(i, j)] : project(i, j, f.left);
        const auto r = rank_space ? pr[chart.span_index(j, k)] : project(j, k, f.right);
        for (int q = 0; q < ranks; ++q) rank_val[q] = S::plus(rank_val[q], S::times(l[q], r[q]));
      }
      auto out = chart.cell(i, k);
      for (int a = 0; a < f.num_lhs(); ++a) {
        auto acc = S::zero();
        for (int q = 0; q < ranks; ++q)
          acc = S::plus(acc, S::times(S::from_log(f.head[static_cast<std::size_t>(a) * ranks + q]), rank_val[q]));
        out[a] = acc;
      }
      finish(i, k);
    }
  return detail::generic_root<S>(lexical, chart);
}

/// P-model recursion (cached projections) in an arbitrary semiring.
template <typename S>
typename S::value_type inside_generic(const FactorTablesP& f, const QcfgRuleTable& lexical, const SourceTree& tree,
                                      std::span<const int> target) {
  using V = typename S::value_type;
  detail::check_lexical(lexical, f.cfg, f.num_nodes);
  detail::check_instance(lexical, tree, target);
  const int t_len = static_cast<int>(target.size());
  const int n = f.num_nodes, ranks = f.num_ranks(), nt = f.cfg.num_nonterminals;
  auto chart = detail::generic_leaf_chart<S>(lexical, target);

  auto project = [&](int i, int k, const tracked_vector<double>& factor) {
    const auto blk = detail::child_block(f.cfg, n, k - i);
    const auto cell = chart.cell(i, k);
    std::vector<V> out(static_cast<std::size_t>(ranks) * n, S::zero());
    for (int r = 0; r < ranks; ++r)
      for (int a = 0; a < n; ++a)
        for (int b = blk.lo / n; b < blk.hi / n; ++b)
          out[static_cast<std::size_t>(r) * n + a] =
              S::plus(out[static_cast<std::size_t>(r) * n + a],
                      S::times(S::from_log(factor[f.sym_index(r, a, b)]), cell[b * n + a]));
    return out;
  };
  const std::size_t num_spans = static_cast<std::size_t>(t_len) * (t_len + 1) / 2;
  std::vector<std::vector<V>> tl(num_spans), tr(num_spans);
  auto finish = [&](int i, int k) {
    tl[chart.span_index(i, k)] = project(i, k, f.left_sym);
    tr[chart.span_index(i, k)] = project(i, k, f.right_sym);
  };
  for (int i = 0; i < t_len; ++i) finish(i, i + 1);

  for (int w = 2; w <= t_len; ++w)
    for (int i = 0; i + w <= t_len; ++i) {
      const int k = i + w;
      std::vector<V> hat(static_cast<std::size_t>(ranks) * n * n, S::zero());
      for (int j = i + 1; j < k; ++j) {
        const auto& l = tl[chart.span_index(i, j)];
        const auto& r = tr[chart.span_index(j, k)];
        for (int q = 0; q < ranks; ++q)
          for (int a2 = 0; a2 < n; ++a2)
            for (int a3 = 0; a3 < n; ++a3) {
              auto& h = hat[(static_cast<std::size_t>(q) * n + a2) * n + a3];
              h = S::plus(h, S::times(l[static_cast<std::size_t>(q) * n + a2], r[static_cast<std::size_t>(q) * n + a3]));
            }
      }
      auto out = chart.cell(i, k);
      for (int a = 0; a < nt; ++a)
        for (int a1 = 0; a1 < n; ++a1) {
          auto acc = S::zero();
          for (int q = 0; q < ranks; ++q) {
            auto inner = S::zero();
            for (int a2 = 0; a2 < n; ++a2)
              for (int a3 = 0; a3 < n; ++a3)
                inner = S::plus(inner, S::times(S::from_log(f.triple[f.triple_index(q, a1, a2, a3)]),
                                                hat[(static_cast<std::size_t>(q) * n + a2) * n + a3]));
            acc = S::plus(acc, S::times(S::from_log(f.head[static_cast<std::size_t>(a * n + a1) * ranks + q]), inner));
          }
          out[a * n + a1] = acc;
        }
      finish(i, k);
    }
  return detail::generic_root<S>(lexical, chart);
}

}  // namespace qcfg

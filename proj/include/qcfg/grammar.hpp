#pragma once

// Symbol inventories and rule weights for a QCFG conditioned on one source
// tree, in three forms: dense (vanilla), E-factored and P-factored.
//
// Index conventions, with N = number of source nodes and M = |NT| + |PT|:
//   lhs row      (A, node)  -> A * N + node                 A in [0, |NT|)
//   child column (B, node)  -> B * N + node                 B in [0, M), PT symbols at |NT|..M-1
//   preterminal  (D, node)  -> D * N + node                 D in [0, |PT|) (terminal table rows)
// Dense binary tables are [lhs row][left child][right child], row-major.
// All weights are natural-log probabilities; -inf marks a forbidden rule.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcfg/log_math.hpp"
#include "qcfg/memory.hpp"
#include "qcfg/tree.hpp"

namespace qcfg {

struct SymbolConfig {
  int num_nonterminals = 1;
  int num_preterminals = 1;
  int vocab_size = 1;
  int num_ranks = 0;  // 0 for dense-only grammars

  int num_child_symbols() const { return num_nonterminals + num_preterminals; }

  void validate() const {
    if (num_nonterminals < 1 || num_preterminals < 1 || vocab_size < 1 || num_ranks < 0)
      throw std::invalid_argument("symbol counts must be >= 1 (ranks >= 0)");
  }
  bool operator==(const SymbolConfig&) const = default;
};

struct QcfgRuleTable {
  SymbolConfig cfg;
  int num_nodes = 0;
  tracked_vector<double> start;     // [A, node]
  tracked_vector<double> binary;    // [A, node][B, node][C, node]; empty for lexical-only tables
  tracked_vector<double> terminal;  // [D, node][word]
  // False once a mask has removed mass without renormalizing.
  bool normalized = true;

  int num_lhs() const { return cfg.num_nonterminals * num_nodes; }
  int num_children() const { return cfg.num_child_symbols() * num_nodes; }
  int num_preterminal_rows() const { return cfg.num_preterminals * num_nodes; }
  bool has_binary() const { return !binary.empty(); }

  int lhs_index(int a, int node) const { return a * num_nodes + node; }
  int nonterminal_child(int a, int node) const { return a * num_nodes + node; }
  int preterminal_child(int d, int node) const { return (cfg.num_nonterminals + d) * num_nodes + node; }
  int preterminal_row(int d, int node) const { return d * num_nodes + node; }
  bool is_preterminal_child(int child) const { return child >= cfg.num_nonterminals * num_nodes; }
  int node_of(int fused) const { return fused % num_nodes; }
  int symbol_of(int fused) const { return fused / num_nodes; }

  std::size_t binary_index(int lhs, int left, int right) const {
    const std::size_t c = num_children();
    return (static_cast<std::size_t>(lhs) * c + left) * c + right;
  }
  double binary_at(int lhs, int left, int right) const { return binary[binary_index(lhs, left, right)]; }
  double terminal_at(int row, int word) const {
    return terminal[static_cast<std::size_t>(row) * cfg.vocab_size + word];
  }

  static std::size_t binary_size(const SymbolConfig& cfg, int num_nodes) {
    const std::size_t c = static_cast<std::size_t>(cfg.num_child_symbols()) * num_nodes;
    return static_cast<std::size_t>(cfg.num_nonterminals) * num_nodes * c * c;
  }

  /// Copy of the start/terminal rules with a new binary part.
  QcfgRuleTable with_binary(tracked_vector<double> b) const {
    if (b.size() != binary_size(cfg, num_nodes)) throw std::invalid_argument("binary table size mismatch");
    QcfgRuleTable t;
    t.cfg = cfg;
    t.num_nodes = num_nodes;
    t.start = start;
    t.terminal = terminal;
    t.binary = std::move(b);
    t.normalized = normalized;
    return t;
  }
};

/// Maximum over left-hand sides of |logsumexp(rhs) - 0|, ignoring fully
/// masked rows. Used to check the per-LHS normalization invariant.
inline double normalization_error(const QcfgRuleTable& t) {
  double worst = std::abs(log_sum_exp(t.start));
  const std::size_t row = static_cast<std::size_t>(t.num_children()) * t.num_children();
  for (std::size_t r = 0; t.has_binary() && r < static_cast<std::size_t>(t.num_lhs()); ++r) {
    const double z = log_sum_exp(std::span<const double>(t.binary).subspan(r * row, row));
    if (z != kNegInf) worst = std::max(worst, std::abs(z));
  }
  const std::size_t v = t.cfg.vocab_size;
  for (std::size_t r = 0; r < static_cast<std::size_t>(t.num_preterminal_rows()); ++r) {
    const double z = log_sum_exp(std::span<const double>(t.terminal).subspan(r * v, v));
    if (z != kNegInf) worst = std::max(worst, std::abs(z));
  }
  return worst;
}

/// E model: A[i] -> R, R -> B[j], R -> C[k].
struct FactorTablesE {
  SymbolConfig cfg;
  int num_nodes = 0;
  tracked_vector<double> head;   // [A, node][R]
  tracked_vector<double> left;   // [R][B, node]
  tracked_vector<double> right;  // [R][C, node]

  int num_ranks() const { return cfg.num_ranks; }
  int num_lhs() const { return cfg.num_nonterminals * num_nodes; }
  int num_children() const { return cfg.num_child_symbols() * num_nodes; }
};

/// P model: A[i] -> R, (R, i) -> (j, k), (R, j) -> B, (R, k) -> C.
struct FactorTablesP {
  SymbolConfig cfg;
  int num_nodes = 0;
  tracked_vector<double> head;       // [A, node][R]
  tracked_vector<double> triple;     // [R, i][j, k]
  tracked_vector<double> left_sym;   // [R, j][B]
  tracked_vector<double> right_sym;  // [R, k][C]

  int num_ranks() const { return cfg.num_ranks; }
  int num_lhs() const { return cfg.num_nonterminals * num_nodes; }
  std::size_t triple_index(int rank, int i, int j, int k) const {
    const std::size_t n = num_nodes;
    return ((static_cast<std::size_t>(rank) * n + i) * n + j) * n + k;
  }
  std::size_t sym_index(int rank, int node, int sym) const {
    return (static_cast<std::size_t>(rank) * num_nodes + node) * cfg.num_child_symbols() + sym;
  }
};

/// Additive-embedding parameterization. Every score is an inner product of a
/// summed left-hand-side vector with summed right-hand-side vectors; each
/// child slot additionally carries a side tag so that left and right children
/// get distinct distributions.
struct EmbeddingParams {
  int dim = 0;
  double temperature = 1.0;
  std::vector<double> symbols;  // rows: NT, then PT, then the start symbol, then ranks
  std::vector<double> nodes;    // one row per source node
  std::vector<double> words;    // one row per vocabulary item
  std::vector<double> left_tag;
  std::vector<double> right_tag;

  static EmbeddingParams zeros(const SymbolConfig& cfg, int num_nodes, int dim) {
    cfg.validate();
    if (dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
    EmbeddingParams p;
    p.dim = dim;
    p.symbols.assign(static_cast<std::size_t>(cfg.num_child_symbols() + 1 + cfg.num_ranks) * dim, 0.0);
    p.nodes.assign(static_cast<std::size_t>(num_nodes) * dim, 0.0);
    p.words.assign(static_cast<std::size_t>(cfg.vocab_size) * dim, 0.0);
    p.left_tag.assign(dim, 0.0);
    p.right_tag.assign(dim, 0.0);
    return p;
  }

  /// i.i.d. N(0, scale^2) entries; identical (cfg, nodes, dim, seed, scale)
  /// give identical parameters.
  static EmbeddingParams random(const SymbolConfig& cfg, int num_nodes, int dim, std::uint64_t seed,
                                double scale = 1.0) {
    EmbeddingParams p = zeros(cfg, num_nodes, dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    for (auto* v : {&p.symbols, &p.nodes, &p.words, &p.left_tag, &p.right_tag})
      for (double& x : *v) x = g(rng);
    return p;
  }

  std::span<const double> symbol(int s) const { return row(symbols, s); }
  std::span<const double> node(int n) const { return row(nodes, n); }
  std::span<const double> word(int w) const { return row(words, w); }

 private:
  std::span<const double> row(const std::vector<double>& v, int r) const {
    return std::span<const double>(v).subspan(static_cast<std::size_t>(r) * dim, dim);
  }
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> add(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline void check_params(const SymbolConfig& cfg, int num_nodes, const EmbeddingParams& p) {
  cfg.validate();
  const std::size_t d = p.dim;
  if (p.dim < 1 || p.symbols.size() != (cfg.num_child_symbols() + 1 + static_cast<std::size_t>(cfg.num_ranks)) * d ||
      p.nodes.size() != static_cast<std::size_t>(num_nodes) * d ||
      p.words.size() != static_cast<std::size_t>(cfg.vocab_size) * d || p.left_tag.size() != d ||
      p.right_tag.size() != d)
    throw std::invalid_argument("embedding parameters do not match symbol config / tree");
  if (!(p.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

inline int start_symbol_row(const SymbolConfig& cfg) { return cfg.num_child_symbols(); }
inline int rank_row(const SymbolConfig& cfg, int r) { return cfg.num_child_symbols() + 1 + r; }

// e_sym + h_node for every fused (sym, node) over the given symbol range.
inline std::vector<std::vector<double>> coupled_embeddings(const EmbeddingParams& p, int sym_begin, int sym_end,
                                                           int num_nodes) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(sym_end - sym_begin) * num_nodes);
  for (int s = sym_begin; s < sym_end; ++s)
    for (int n = 0; n < num_nodes; ++n) out.push_back(add(p.symbol(s), p.node(n)));
  return out;
}

// Fills out[row * width + col] = score(row, col) / temperature and normalizes each row.
template <typename Score>
void softmax_rows(tracked_vector<double>& out, int rows, int width, double temperature, Score&& score) {
  out.assign(static_cast<std::size_t>(rows) * width, 0.0);
  for (int r = 0; r < rows; ++r) {
    auto block = std::span<double>(out).subspan(static_cast<std::size_t>(r) * width, width);
    for (int c = 0; c < width; ++c) block[c] = score(r, c) / temperature;
    log_normalize(block);
  }
}

inline void lexical_rules(QcfgRuleTable& t, const EmbeddingParams& p) {
  const SymbolConfig& cfg = t.cfg;
  const int n = t.num_nodes;
  const auto start_sym = p.symbol(start_symbol_row(cfg));
  const auto nts = coupled_embeddings(p, 0, cfg.num_nonterminals, n);
  softmax_rows(t.start, 1, t.num_lhs(), p.temperature, [&](int, int c) { return dot(start_sym, nts[c]); });

  const auto pts = coupled_embeddings(p, cfg.num_nonterminals, cfg.num_child_symbols(), n);
  softmax_rows(t.terminal, t.num_preterminal_rows(), cfg.vocab_size, p.temperature,
               [&](int r, int w) { return dot(pts[r], p.word(w)); });
}

}  // namespace detail

/// Start and terminal rules only (binary part left empty); shared by the
/// factored models, which decompose binary rules alone.
inline QcfgRuleTable parameterize_lexical(const SymbolConfig& cfg, const SourceTree& tree,
                                          const EmbeddingParams& params) {
  detail::check_params(cfg, tree.num_nodes(), params);
  QcfgRuleTable t;
  t.cfg = cfg;
  t.num_nodes = tree.num_nodes();
  detail::lexical_rules(t, params);
  return t;
}

inline QcfgRuleTable parameterize_dense(const SymbolConfig& cfg, const SourceTree& tree,
                                        const EmbeddingParams& params) {
  QcfgRuleTable t = parameterize_lexical(cfg, tree, params);
  const int rows = t.num_lhs();
  const int kids = t.num_children();
  const double temp = params.temperature;

  const auto lhs = detail::coupled_embeddings(params, 0, cfg.num_nonterminals, t.num_nodes);
  const auto rhs = detail::coupled_embeddings(params, 0, cfg.num_child_symbols(), t.num_nodes);

  // score(a, b, c) = (lhs_a + tag_L) . rhs_b + (lhs_a + tag_R) . rhs_c separates,
  // so the row partition function is a product of two sums.
  t.binary.assign(QcfgRuleTable::binary_size(cfg, t.num_nodes), 0.0);
  std::vector<double> ls(kids), rs(kids);
  for (int a = 0; a < rows; ++a) {
    const auto ql = detail::add(lhs[a], params.left_tag);
    const auto qr = detail::add(lhs[a], params.right_tag);
    for (int b = 0; b < kids; ++b) {
      ls[b] = detail::dot(ql, rhs[b]) / temp;
      rs[b] = detail::dot(qr, rhs[b]) / temp;
    }
    const double z = log_sum_exp(ls) + log_sum_exp(rs);
    for (int b = 0; b < kids; ++b) {
      double* out = &t.binary[t.binary_index(a, b, 0)];
      for (int c = 0; c < kids; ++c) out[c] = ls[b] + rs[c] - z;
    }
  }
  return t;
}

inline FactorTablesE parameterize_e(const SymbolConfig& cfg, const SourceTree& tree, const EmbeddingParams& params) {
  detail::check_params(cfg, tree.num_nodes(), params);
  if (cfg.num_ranks < 1) throw std::invalid_argument("E model needs num_ranks >= 1");
  FactorTablesE f;
  f.cfg = cfg;
  f.num_nodes = tree.num_nodes();
  const int r_count = cfg.num_ranks;
  const auto lhs = detail::coupled_embeddings(params, 0, cfg.num_nonterminals, f.num_nodes);
  const auto rhs = detail::coupled_embeddings(params, 0, cfg.num_child_symbols(), f.num_nodes);

  detail::softmax_rows(f.head, f.num_lhs(), r_count, params.temperature,
                       [&](int a, int r) { return detail::dot(lhs[a], params.symbol(detail::rank_row(cfg, r))); });
  detail::softmax_rows(f.left, r_count, f.num_children(), params.temperature, [&](int r, int b) {
    return detail::dot(detail::add(params.symbol(detail::rank_row(cfg, r)), params.left_tag), rhs[b]);
  });
  detail::softmax_rows(f.right, r_count, f.num_children(), params.temperature, [&](int r, int c) {
    return detail::dot(detail::add(params.symbol(detail::rank_row(cfg, r)), params.right_tag), rhs[c]);
  });
  return f;
}

inline FactorTablesP parameterize_p(const SymbolConfig& cfg, const SourceTree& tree, const EmbeddingParams& params) {
  detail::check_params(cfg, tree.num_nodes(), params);
  if (cfg.num_ranks < 1) throw std::invalid_argument("P model needs num_ranks >= 1");
  FactorTablesP f;
  f.cfg = cfg;
  f.num_nodes = tree.num_nodes();
  const int n = f.num_nodes;
  const int r_count = cfg.num_ranks;
  const int m = cfg.num_child_symbols();
  const auto lhs = detail::coupled_embeddings(params, 0, cfg.num_nonterminals, n);

  detail::softmax_rows(f.head, f.num_lhs(), r_count, params.temperature,
                       [&](int a, int r) { return detail::dot(lhs[a], params.symbol(detail::rank_row(cfg, r))); });

  // (R, i) -> (j, k): lhs = e_R + h_i, children are bare node features.
  std::vector<std::vector<double>> rank_node;  // e_R + h_node, row R * n + node
  for (int r = 0; r < r_count; ++r)
    for (int i = 0; i < n; ++i) rank_node.push_back(detail::add(params.symbol(detail::rank_row(cfg, r)), params.node(i)));
  detail::softmax_rows(f.triple, r_count * n, n * n, params.temperature, [&](int ri, int jk) {
    const int j = jk / n, k = jk % n;
    return detail::dot(detail::add(rank_node[ri], params.left_tag), params.node(j)) +
           detail::dot(detail::add(rank_node[ri], params.right_tag), params.node(k));
  });
  detail::softmax_rows(f.left_sym, r_count * n, m, params.temperature, [&](int rj, int b) {
    return detail::dot(detail::add(rank_node[rj], params.left_tag), params.symbol(b));
  });
  detail::softmax_rows(f.right_sym, r_count * n, m, params.temperature, [&](int rk, int c) {
    return detail::dot(detail::add(rank_node[rk], params.right_tag), params.symbol(c));
  });
  return f;
}

/// Dense binary table: logsumexp over R of head + left + right.
inline tracked_vector<double> compose_e(const FactorTablesE& f) {
  const int rows = f.num_lhs(), kids = f.num_children(), ranks = f.num_ranks();
  tracked_vector<double> out(QcfgRuleTable::binary_size(f.cfg, f.num_nodes), kNegInf);
  std::vector<double> terms(ranks);
  for (int a = 0; a < rows; ++a)
    for (int b = 0; b < kids; ++b)
      for (int c = 0; c < kids; ++c) {
        for (int r = 0; r < ranks; ++r)
          terms[r] = f.head[static_cast<std::size_t>(a) * ranks + r] + f.left[static_cast<std::size_t>(r) * kids + b] +
                     f.right[static_cast<std::size_t>(r) * kids + c];
        out[(static_cast<std::size_t>(a) * kids + b) * kids + c] = log_sum_exp(terms);
      }
  return out;
}

/// Dense binary table: logsumexp over R of the four P-model factors.
inline tracked_vector<double> compose_p(const FactorTablesP& f) {
  const int n = f.num_nodes, nt = f.cfg.num_nonterminals, m = f.cfg.num_child_symbols(), ranks = f.num_ranks();
  const std::size_t kids = static_cast<std::size_t>(m) * n;
  tracked_vector<double> out(QcfgRuleTable::binary_size(f.cfg, n), kNegInf);
  std::vector<double> terms(ranks);
  for (int a = 0; a < nt; ++a)
    for (int i = 0; i < n; ++i)
      for (int b = 0; b < m; ++b)
        for (int j = 0; j < n; ++j)
          for (int c = 0; c < m; ++c)
            for (int k = 0; k < n; ++k) {
              for (int r = 0; r < ranks; ++r)
                terms[r] = f.head[static_cast<std::size_t>(a * n + i) * ranks + r] + f.triple[f.triple_index(r, i, j, k)] +
                           f.left_sym[f.sym_index(r, j, b)] + f.right_sym[f.sym_index(r, k, c)];
              const std::size_t lhs = static_cast<std::size_t>(a) * n + i;
              out[(lhs * kids + static_cast<std::size_t>(b) * n + j) * kids + static_cast<std::size_t>(c) * n + k] =
                  log_sum_exp(terms);
            }
  return out;
}

enum class Model { Vanilla, E, P };

/// Binary (decomposed) rule counts as functions of the source length S.
inline std::uint64_t count_rules(const SymbolConfig& cfg, std::uint64_t s, Model model) {
  const std::uint64_t nt = cfg.num_nonterminals, pt = cfg.num_preterminals, r = cfg.num_ranks;
  switch (model) {
    case Model::Vanilla:
      return nt * (nt + pt) * (nt + pt) * s * s * s;
    case Model::E:
      return (3 * nt + 2 * pt) * r * s;
    case Model::P:
      return r * s * s * s + (3 * nt + 2 * pt) * r * s;
  }
  throw std::invalid_argument("unknown model");
}

enum class HierarchyMode {
  Descendant,   // d(r) < inf
  DirectChild,  // both children are distinct direct children of the parent
};

namespace detail {

inline std::vector<char> allowed_triples(const SourceTree& tree, HierarchyMode mode) {
  const int n = tree.num_nodes();
  const auto dist = distance_matrix(tree);
  std::vector<char> ok(static_cast<std::size_t>(n) * n * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Distance dj = dist[static_cast<std::size_t>(i) * n + j], dk = dist[static_cast<std::size_t>(i) * n + k];
        const bool keep = mode == HierarchyMode::Descendant
                              ? std::max(dj, dk).is_finite()
                              : (dj == Distance::finite(1) && dk == Distance::finite(1) && j != k);
        ok[(static_cast<std::size_t>(i) * n + j) * n + k] = keep;
      }
  return ok;
}

inline void renormalize_binary(QcfgRuleTable& t) {
  const std::size_t row = static_cast<std::size_t>(t.num_children()) * t.num_children();
  for (std::size_t r = 0; r < static_cast<std::size_t>(t.num_lhs()); ++r)
    log_normalize(std::span<double>(t.binary).subspan(r * row, row));
}

}  // namespace detail

/// Sends binary rules violating the hierarchy constraint to -inf. The result
/// is unnormalized unless `renormalize` is set (fully masked rows stay -inf).
inline QcfgRuleTable apply_hierarchy_mask(const QcfgRuleTable& table, const SourceTree& tree, HierarchyMode mode,
                                          bool renormalize = false) {
  if (tree.num_nodes() != table.num_nodes) throw std::invalid_argument("tree does not match table");
  QcfgRuleTable out = table;
  const int n = table.num_nodes, nt = table.cfg.num_nonterminals, m = table.cfg.num_child_symbols();
  const auto ok = detail::allowed_triples(tree, mode);
  for (int a = 0; a < nt; ++a)
    for (int i = 0; i < n; ++i)
      for (int b = 0; b < m; ++b)
        for (int j = 0; j < n; ++j)
          for (int c = 0; c < m; ++c)
            for (int k = 0; k < n; ++k)
              if (!ok[(static_cast<std::size_t>(i) * n + j) * n + k])
                out.binary[out.binary_index(a * n + i, b * n + j, c * n + k)] = kNegInf;
  if (renormalize) {
    detail::renormalize_binary(out);
  } else {
    out.normalized = false;
  }
  return out;
}

/// The same constraint imposed through the P model's (R, i) -> (j, k) factor.
inline FactorTablesP apply_hierarchy_mask(const FactorTablesP& f, const SourceTree& tree, HierarchyMode mode) {
  if (tree.num_nodes() != f.num_nodes) throw std::invalid_argument("tree does not match factors");
  FactorTablesP out = f;
  const int n = f.num_nodes;
  const auto ok = detail::allowed_triples(tree, mode);
  for (int r = 0; r < f.num_ranks(); ++r)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          if (!ok[(static_cast<std::size_t>(i) * n + j) * n + k]) out.triple[out.triple_index(r, i, j, k)] = kNegInf;
  return out;
}

/// Target leaves align to source leaves, other target nodes to internal source
/// nodes, and the target root to the source root.
inline QcfgRuleTable apply_basic_alignment_mask(const QcfgRuleTable& table, const SourceTree& tree,
                                                bool renormalize = false) {
  if (tree.num_nodes() != table.num_nodes) throw std::invalid_argument("tree does not match table");
  if (tree.num_leaves() < 2)
    throw std::invalid_argument("basic alignment mask needs >= 2 source leaves (root and leaf coincide)");
  QcfgRuleTable out = table;
  const int n = table.num_nodes, nt = table.cfg.num_nonterminals, pt = table.cfg.num_preterminals;
  const int kids = table.num_children();

  for (int a = 0; a < nt; ++a)
    for (int i = 0; i < n; ++i)
      if (i != tree.root()) out.start[out.lhs_index(a, i)] = kNegInf;

  const std::size_t v = table.cfg.vocab_size;
  for (int d = 0; d < pt; ++d)
    for (int i = 0; i < n; ++i)
      if (!tree.is_leaf(i))
        std::fill_n(out.terminal.begin() + static_cast<std::ptrdiff_t>(out.preterminal_row(d, i) * v), v, kNegInf);

  std::vector<char> child_ok(kids);
  for (int c = 0; c < kids; ++c) child_ok[c] = out.is_preterminal_child(c) == tree.is_leaf(out.node_of(c));
  if (out.has_binary()) {
    for (int a = 0; a < out.num_lhs(); ++a) {
      const bool lhs_ok = !tree.is_leaf(out.node_of(a));
      for (int b = 0; b < kids; ++b)
        for (int c = 0; c < kids; ++c)
          if (!lhs_ok || !child_ok[b] || !child_ok[c]) out.binary[out.binary_index(a, b, c)] = kNegInf;
    }
  }
  if (renormalize) {
    log_normalize(out.start);
    if (out.has_binary()) detail::renormalize_binary(out);
  } else {
    out.normalized = false;
  }
  return out;
}

// The basic alignment constraint only looks at one (symbol, node) at a time,
// so it factors through both decompositions. Composing masked factors equals
// masking the composed table.

inline FactorTablesE apply_basic_alignment_mask(const FactorTablesE& f, const SourceTree& tree) {
  if (tree.num_nodes() != f.num_nodes) throw std::invalid_argument("tree does not match factors");
  if (tree.num_leaves() < 2)
    throw std::invalid_argument("basic alignment mask needs >= 2 source leaves (root and leaf coincide)");
  FactorTablesE out = f;
  const int n = f.num_nodes, ranks = f.num_ranks(), kids = f.num_children();
  const int nt_cols = f.cfg.num_nonterminals * n;
  for (int a = 0; a < f.num_lhs(); ++a)
    if (tree.is_leaf(a % n))
      std::fill_n(out.head.begin() + static_cast<std::ptrdiff_t>(a) * ranks, ranks, kNegInf);
  for (int r = 0; r < ranks; ++r)
    for (int c = 0; c < kids; ++c)
      if ((c >= nt_cols) != tree.is_leaf(c % n)) {
        out.left[static_cast<std::size_t>(r) * kids + c] = kNegInf;
        out.right[static_cast<std::size_t>(r) * kids + c] = kNegInf;
      }
  return out;
}

inline FactorTablesP apply_basic_alignment_mask(const FactorTablesP& f, const SourceTree& tree) {
  if (tree.num_nodes() != f.num_nodes) throw std::invalid_argument("tree does not match factors");
  if (tree.num_leaves() < 2)
    throw std::invalid_argument("basic alignment mask needs >= 2 source leaves (root and leaf coincide)");
  FactorTablesP out = f;
  const int n = f.num_nodes, ranks = f.num_ranks(), nt = f.cfg.num_nonterminals, m = f.cfg.num_child_symbols();
  for (int a = 0; a < f.num_lhs(); ++a)
    if (tree.is_leaf(a % n))
      std::fill_n(out.head.begin() + static_cast<std::ptrdiff_t>(a) * ranks, ranks, kNegInf);
  for (int r = 0; r < ranks; ++r)
    for (int j = 0; j < n; ++j)
      for (int s = 0; s < m; ++s)
        if ((s >= nt) != tree.is_leaf(j)) {
          out.left_sym[out.sym_index(r, j, s)] = kNegInf;
          out.right_sym[out.sym_index(r, j, s)] = kNegInf;
        }
  return out;
}

}  // namespace qcfg

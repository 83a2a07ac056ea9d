#pragma once

// JSON views of trees, derivations and counts, and the on-disk table format:
// a JSON header next to a flat little-endian float64 file holding named
// sections back to back.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcfg/derivation.hpp"
#include "qcfg/grammar.hpp"
#include "qcfg/tree.hpp"

namespace qcfg {

using json = nlohmann::json;

inline json to_json(const Span& s) { return json::array({s.start, s.end}); }

inline json tree_to_json(const SourceTree& t) {
  json nodes = json::array();
  for (int i = 0; i < t.num_nodes(); ++i) {
    json n{{"index", i}, {"span", to_json(t.span(i))}, {"parent", t.parent(i)}};
    if (!t.is_leaf(i)) {
      auto [l, r] = t.children(i);
      n["children"] = json::array({l, r});
    }
    nodes.push_back(std::move(n));
  }
  return json{{"bracketed", t.render()}, {"num_leaves", t.num_leaves()}, {"root", t.root()},
              {"hash", t.hash()}, {"nodes", std::move(nodes)}};
}

namespace detail {

inline json derivation_node(const QcfgRuleTable& t, const std::vector<AppliedRule>& rules, std::size_t& pos,
                            int column, int begin, int end) {
  const int nt_cols = t.cfg.num_nonterminals * t.num_nodes;
  json n{{"span", json::array({begin, end})}, {"node", column % t.num_nodes}};
  if (column >= nt_cols) {
    n["preterminal"] = column / t.num_nodes - t.cfg.num_nonterminals;
    const AppliedRule& r = rules.at(pos++);
    if (r.kind != RuleKind::Terminal) throw std::invalid_argument("malformed derivation: expected a terminal rule");
    n["word"] = r.word;
    return n;
  }
  n["nonterminal"] = column / t.num_nodes;
  const AppliedRule& r = rules.at(pos++);
  if (r.kind != RuleKind::Binary || r.row != column) throw std::invalid_argument("malformed derivation: expected a binary rule");
  const int left = r.left, right = r.right, split = r.split;
  json kids = json::array();
  kids.push_back(derivation_node(t, rules, pos, left, begin, split));
  kids.push_back(derivation_node(t, rules, pos, right, split, end));
  n["children"] = std::move(kids);
  return n;
}

}  // namespace detail

/// Nested spans; each node carries its symbol index and aligned source node.
inline json derivation_to_json(const QcfgRuleTable& t, const Derivation& d) {
  if (d.rules.empty() || d.rules[0].kind != RuleKind::Start) throw std::invalid_argument("derivation must begin with a start rule");
  std::size_t pos = 1;
  json root = detail::derivation_node(t, d.rules, pos, d.rules[0].row, d.rules[0].begin, d.rules[0].end);
  return json{{"log_weight", d.log_weight}, {"tree", std::move(root)}};
}

// ---------------------------------------------------------------------------
// Table files.

struct TableFile {
  json header;
  std::map<std::string, std::vector<double>> sections;
};

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xff) << (8 * (7 - i));
  return out;
}

}  // namespace detail

/// Writes `<prefix>.json` and `<prefix>.bin`. Section order follows the map.
inline void write_table_file(const std::string& prefix, const TableFile& tf) {
  json header = tf.header;
  header["format"] = "qcfg-table";
  header["version"] = 1;
  header["dtype"] = "float64-le";
  const std::string bin_path = prefix + ".bin";
  header["binary_file"] = bin_path.substr(bin_path.find_last_of('/') + 1);
  json sections = json::array();
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + bin_path);
  std::size_t offset = 0;
  for (const auto& [name, values] : tf.sections) {
    sections.push_back({{"name", name}, {"offset", offset}, {"count", values.size()}});
    for (double v : values) {
      const std::uint64_t le = detail::to_little(std::bit_cast<std::uint64_t>(v));
      bin.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
    offset += values.size();
  }
  header["sections"] = std::move(sections);
  std::ofstream js(prefix + ".json");
  if (!js) throw std::runtime_error("cannot open " + prefix + ".json");
  js << header.dump(2) << '\n';
}

inline TableFile read_table_file(const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw std::runtime_error("cannot open " + prefix + ".json");
  TableFile tf;
  tf.header = json::parse(js);
  if (tf.header.value("format", "") != "qcfg-table") throw std::runtime_error("not a qcfg table header");
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + prefix + ".bin");
  for (const auto& s : tf.header.at("sections")) {
    const std::size_t offset = s.at("offset"), count = s.at("count");
    std::vector<double> values(count);
    bin.seekg(static_cast<std::streamoff>(offset * 8));
    for (double& v : values) {
      std::uint64_t le = 0;
      if (!bin.read(reinterpret_cast<char*>(&le), sizeof le)) throw std::runtime_error("table file truncated");
      v = std::bit_cast<double>(detail::to_little(le));
    }
    tf.sections.emplace(s.at("name").get<std::string>(), std::move(values));
  }
  return tf;
}

inline json symbol_config_json(const SymbolConfig& c) {
  return json{{"num_nonterminals", c.num_nonterminals}, {"num_preterminals", c.num_preterminals},
              {"vocab_size", c.vocab_size}, {"num_ranks", c.num_ranks}};
}

inline SymbolConfig symbol_config_from_json(const json& j) {
  SymbolConfig c{j.at("num_nonterminals"), j.at("num_preterminals"), j.at("vocab_size"), j.at("num_ranks")};
  c.validate();
  return c;
}

template <typename V>
std::vector<double> plain(const V& v) {
  return std::vector<double>(v.begin(), v.end());
}

template <typename V>
V tracked(const std::vector<double>& v) {
  return V(v.begin(), v.end());
}

/// Dense table (binary may be empty for lexical-only tables).
inline TableFile table_file(const QcfgRuleTable& t, const SourceTree& tree) {
  TableFile tf;
  tf.header = {{"kind", "dense"}, {"symbols", symbol_config_json(t.cfg)}, {"num_nodes", t.num_nodes},
               {"tree", tree.render()}, {"tree_hash", tree.hash()}, {"normalized", t.normalized}};
  tf.sections["start"] = plain(t.start);
  tf.sections["terminal"] = plain(t.terminal);
  if (t.has_binary()) tf.sections["binary"] = plain(t.binary);
  return tf;
}

inline QcfgRuleTable table_from_file(const TableFile& tf) {
  QcfgRuleTable t;
  t.cfg = symbol_config_from_json(tf.header.at("symbols"));
  t.num_nodes = tf.header.at("num_nodes");
  t.normalized = tf.header.value("normalized", true);
  t.start = tracked<tracked_vector<double>>(tf.sections.at("start"));
  t.terminal = tracked<tracked_vector<double>>(tf.sections.at("terminal"));
  if (auto it = tf.sections.find("binary"); it != tf.sections.end()) t.binary = tracked<tracked_vector<double>>(it->second);
  if (t.start.size() != static_cast<std::size_t>(t.num_lhs()) ||
      t.terminal.size() != static_cast<std::size_t>(t.num_preterminal_rows()) * t.cfg.vocab_size ||
      (t.has_binary() && t.binary.size() != QcfgRuleTable::binary_size(t.cfg, t.num_nodes)))
    throw std::runtime_error("table sections do not match the header dimensions");
  return t;
}

inline TableFile table_file(const FactorTablesE& f, const SourceTree& tree) {
  TableFile tf;
  tf.header = {{"kind", "e"}, {"symbols", symbol_config_json(f.cfg)}, {"num_nodes", f.num_nodes},
               {"tree", tree.render()}, {"tree_hash", tree.hash()}};
  tf.sections["head"] = plain(f.head);
  tf.sections["left"] = plain(f.left);
  tf.sections["right"] = plain(f.right);
  return tf;
}

inline TableFile table_file(const FactorTablesP& f, const SourceTree& tree) {
  TableFile tf;
  tf.header = {{"kind", "p"}, {"symbols", symbol_config_json(f.cfg)}, {"num_nodes", f.num_nodes},
               {"tree", tree.render()}, {"tree_hash", tree.hash()}};
  tf.sections["head"] = plain(f.head);
  tf.sections["triple"] = plain(f.triple);
  tf.sections["left_sym"] = plain(f.left_sym);
  tf.sections["right_sym"] = plain(f.right_sym);
  return tf;
}

inline FactorTablesE factors_e_from_file(const TableFile& tf) {
  FactorTablesE f;
  f.cfg = symbol_config_from_json(tf.header.at("symbols"));
  f.num_nodes = tf.header.at("num_nodes");
  f.head = tracked<tracked_vector<double>>(tf.sections.at("head"));
  f.left = tracked<tracked_vector<double>>(tf.sections.at("left"));
  f.right = tracked<tracked_vector<double>>(tf.sections.at("right"));
  return f;
}

inline FactorTablesP factors_p_from_file(const TableFile& tf) {
  FactorTablesP f;
  f.cfg = symbol_config_from_json(tf.header.at("symbols"));
  f.num_nodes = tf.header.at("num_nodes");
  f.head = tracked<tracked_vector<double>>(tf.sections.at("head"));
  f.triple = tracked<tracked_vector<double>>(tf.sections.at("triple"));
  f.left_sym = tracked<tracked_vector<double>>(tf.sections.at("left_sym"));
  f.right_sym = tracked<tracked_vector<double>>(tf.sections.at("right_sym"));
  return f;
}

}  // namespace qcfg

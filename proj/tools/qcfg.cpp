// qcfg command-line front end.

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qcfg/bench.hpp"
#include "qcfg/grammar.hpp"
#include "qcfg/inside.hpp"
#include "qcfg/instances.hpp"
#include "qcfg/json_io.hpp"
#include "qcfg/outside.hpp"
#include "qcfg/regularizers.hpp"
#include "qcfg/sampling.hpp"
#include "qcfg/verify.hpp"

namespace {

using qcfg::json;

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string tok;
  std::stringstream ss(text);
  while (std::getline(ss, tok, ',')) {
    std::stringstream words(tok);
    std::string w;
    while (words >> w) {
      std::size_t used = 0;
      const int v = std::stoi(w, &used);
      if (used != w.size()) throw CLI::ValidationError("not an integer: " + w);
      out.push_back(v);
    }
  }
  return out;
}

std::vector<std::string> parse_word_list(const std::string& text) {
  std::vector<std::string> out;
  std::string tok;
  std::stringstream ss(text);
  while (std::getline(ss, tok, ',')) {
    std::stringstream words(tok);
    std::string w;
    while (words >> w) out.push_back(w);
  }
  return out;
}

// key=value lines become --key=value flags placed right after the subcommand
// name, ahead of the real flags; options keep the last value they see, so
// command-line flags win.
std::vector<std::string> expand_config(int argc, char** argv, const std::set<std::string>& subcommands) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + i);
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::vector<std::string> extra;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    line = line.substr(b, line.find_last_not_of(" \t\r") - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    extra.push_back("--" + key + "=" + value);
  }
  auto sub = std::find_if(args.begin() + 1, args.end(), [&](const std::string& a) { return subcommands.count(a) > 0; });
  if (sub == args.end()) throw std::runtime_error("--config needs a subcommand");
  args.insert(sub + 1, extra.begin(), extra.end());
  return args;
}

// Grammar/instance flags shared by inside, sample and pr-solve.
struct InstanceFlags {
  std::string tree;
  int random_tree = 0;
  std::uint64_t seed = 0;
  int nt = 2, pt = 2, vocab = 10, rank = 2, dim = 8;
  std::string mask = "none";
  std::string hierarchy = "none";
  std::string target;
  int target_len = 0;
  std::string grammar;  // table file prefix from gen-grammar
  std::string builtin;  // named hand-built instance

  void add(CLI::App* app) {
    app->add_option("--tree", tree, "source tree in bracketed form, e.g. \"((a b) c)\"");
    app->add_option("--random-tree", random_tree, "random source tree with this many leaves")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "random seed");
    app->add_option("--nt", nt, "nonterminal count")->check(CLI::PositiveNumber);
    app->add_option("--pt", pt, "preterminal count")->check(CLI::PositiveNumber);
    app->add_option("--vocab", vocab, "vocabulary size")->check(CLI::PositiveNumber);
    app->add_option("--rank", rank, "rank count for the E and P models")->check(CLI::NonNegativeNumber);
    app->add_option("--dim", dim, "embedding dimension")->check(CLI::PositiveNumber);
    app->add_option("--mask", mask, "alignment mask")->check(CLI::IsMember({"none", "basic"}));
    app->add_option("--hierarchy", hierarchy, "hierarchy mask")->check(CLI::IsMember({"none", "descendant", "direct"}));
    app->add_option("--target", target, "target tokens, comma or space separated");
    app->add_option("--target-len", target_len, "random target of this length")->check(CLI::PositiveNumber);
    app->add_option("--grammar", grammar, "dense table file prefix written by gen-grammar");
    app->add_option("--instance", builtin, "hand-built instance instead of flags")->check(CLI::IsMember({"tight"}));
  }

  qcfg::SourceTree source_tree() const {
    if (!tree.empty() && random_tree > 0) throw CLI::ValidationError("use either --tree or --random-tree");
    if (!tree.empty()) return qcfg::parse_bracketed(tree, count_leaves(tree));
    if (random_tree > 0) return qcfg::random_binary_tree(random_tree, seed);
    throw CLI::ValidationError("a source tree is required: --tree or --random-tree");
  }

  static int count_leaves(const std::string& text) {
    int n = 0;
    bool in_word = false;
    for (char c : text) {
      const bool word = c != '(' && c != ')' && !std::isspace(static_cast<unsigned char>(c));
      if (word && !in_word) ++n;
      in_word = word;
    }
    return n;
  }

  qcfg::SymbolConfig symbols() const { return qcfg::SymbolConfig{nt, pt, vocab, rank}; }

  std::vector<int> target_tokens(int vocab_size) const {
    if (!target.empty()) return parse_int_list(target);
    if (target_len > 0) return qcfg::synth::random_target(target_len, vocab_size, seed + 1);
    throw CLI::ValidationError("a target is required: --target or --target-len");
  }

  qcfg::QcfgRuleTable apply_masks(qcfg::QcfgRuleTable t, const qcfg::SourceTree& tr) const {
    if (mask == "basic") t = qcfg::apply_basic_alignment_mask(t, tr);
    if (hierarchy != "none")
      t = qcfg::apply_hierarchy_mask(t, tr, hierarchy == "direct" ? qcfg::HierarchyMode::DirectChild
                                                                  : qcfg::HierarchyMode::Descendant);
    return t;
  }

  // Dense instance: from --instance, --grammar, or composed from the E model
  // (or the dense parameterization when rank is 0).
  qcfg::synth::TinyInstance dense_instance() const {
    if (builtin == "tight") return qcfg::synth::tight_coverage_instance();
    if (!grammar.empty()) {
      const auto tf = qcfg::read_table_file(grammar);
      if (tf.header.at("kind") != "dense") throw CLI::ValidationError("--grammar needs a dense table");
      qcfg::QcfgRuleTable t = qcfg::table_from_file(tf);
      if (!t.has_binary()) throw CLI::ValidationError("--grammar table has no binary rules");
      const qcfg::SourceTree tr = qcfg::parse_bracketed(tf.header.at("tree").get<std::string>(),
                                                         count_leaves(tf.header.at("tree").get<std::string>()));
      auto tokens = target_tokens(t.cfg.vocab_size);
      return {tr, apply_masks(std::move(t), tr), std::move(tokens)};
    }
    const qcfg::SourceTree tr = source_tree();
    const auto params = qcfg::EmbeddingParams::random(symbols(), tr.num_nodes(), dim, seed);
    qcfg::QcfgRuleTable t = rank > 0 ? qcfg::parameterize_lexical(symbols(), tr, params)
                                           .with_binary(qcfg::compose_e(qcfg::parameterize_e(symbols(), tr, params)))
                                     : qcfg::parameterize_dense(symbols(), tr, params);
    return {tr, apply_masks(std::move(t), tr), target_tokens(vocab)};
  }
};

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

json vec(const std::vector<double>& v) { return json(v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-synchronous grammar inference: inside algorithms, constraints, sampling and benchmarks"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--config", "key=value file whose entries act as flags (command-line flags win)");

  // gen-grammar
  auto* gen = app.add_subcommand("gen-grammar", "write a parameterized grammar as JSON header + float64 file");
  InstanceFlags gen_f;
  gen_f.add(gen);
  std::string gen_model = "vanilla", gen_out;
  gen->add_option("--model", gen_model, "table kind")->check(CLI::IsMember({"vanilla", "e", "p"}));
  gen->add_option("--out", gen_out, "output prefix (writes PREFIX.json and PREFIX.bin)")->required();

  // gen-instance
  auto* geni = app.add_subcommand("gen-instance", "random source tree and target sequence as JSON");
  InstanceFlags geni_f;
  geni_f.add(geni);

  // inside
  auto* ins = app.add_subcommand("inside", "log partition value of a target under a grammar");
  InstanceFlags ins_f;
  ins_f.add(ins);
  std::string ins_model = "vanilla";
  ins->add_option("--model", ins_model, "inside algorithm")->check(CLI::IsMember({"vanilla", "e", "e-rank", "p"}));

  // sample
  auto* smp = app.add_subcommand("sample", "exact posterior samples of target trees as JSON");
  InstanceFlags smp_f;
  smp_f.add(smp);
  int smp_count = 1;
  std::uint64_t smp_seed = 0;
  smp->add_option("--count", smp_count, "number of samples")->check(CLI::PositiveNumber);
  smp->add_option("--sample-seed", smp_seed, "sampler seed (defaults to --seed)");

  // pr-solve
  auto* pr = app.add_subcommand("pr-solve", "coverage-constrained posterior via the dual solver");
  InstanceFlags pr_f;
  pr_f.add(pr);
  qcfg::CoverageConfig pr_cfg;
  std::string pr_xi;
  pr->add_option("--u", pr_cfg.upper_bound, "uniform bound on alignments per source node");
  pr->add_option("--xi", pr_xi, "per-node bounds, comma separated (overrides --u)");
  pr->add_option("--gamma", pr_cfg.gamma, "KL weight in the combined objective");
  pr->add_option("--step", pr_cfg.step, "initial ascent step");
  pr->add_option("--max-iter", pr_cfg.max_iterations, "iteration limit")->check(CLI::PositiveNumber);
  pr->add_option("--tol", pr_cfg.tolerance, "projected-gradient tolerance");
  bool pr_reward_sign = false;
  pr->add_flag("--add-kl", pr_reward_sign, "combine as log p + gamma KL instead of log p - gamma KL");

  // reward-table
  auto* rwd = app.add_subcommand("reward-table", "reward values per distance as CSV");
  int rwd_max = 16;
  rwd->add_option("--max-d", rwd_max, "largest distance")->check(CLI::PositiveNumber);

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "timing and memory of the inside algorithms across lengths (CSV)");
  qcfg::BenchConfig bcfg;
  std::string b_lengths = "8,12,16,24,32", b_models = "vanilla,e-rank,p", b_out;
  double b_budget_mb = static_cast<double>(bcfg.memory_budget >> 20);
  bench->add_option("--lengths", b_lengths, "ascending x = S = T values");
  bench->add_option("--models", b_models, "comma separated: vanilla, e, e-rank, p");
  bench->add_option("--repeats", bcfg.repeats, "instances per point (>= 3)");
  bench->add_option("--seed", bcfg.seed, "instance stream seed");
  bench->add_option("--dim", bcfg.dim, "embedding dimension");
  bench->add_option("--budget-mb", b_budget_mb, "pre-flight memory budget in MiB");
  bench->add_option("--vanilla-nt", bcfg.vanilla.num_nonterminals, "vanilla |NT|");
  bench->add_option("--vanilla-pt", bcfg.vanilla.num_preterminals, "vanilla |PT|");
  bench->add_option("--lr-nt", bcfg.low_rank.num_nonterminals, "low-rank |NT|");
  bench->add_option("--lr-pt", bcfg.low_rank.num_preterminals, "low-rank |PT|");
  bench->add_option("--rank", bcfg.low_rank.num_ranks, "low-rank |R|");
  bench->add_option("--out", b_out, "CSV path (stdout when omitted)");

  // verify
  auto* ver = app.add_subcommand("verify", "brute-force self-checks; nonzero exit on failure");
  qcfg::VerifyOptions vopt;
  ver->add_option("--scope", vopt.scope, "suite")->check(
      CLI::IsMember({"inside", "rank", "p-model", "rewards", "pr", "sampling", "all"}));
  ver->add_option("--seeds", vopt.seeds, "instances per property")->check(CLI::PositiveNumber);
  ver->add_option("--seed", vopt.base_seed, "first instance seed");
  ver->add_flag("--corrupt", vopt.corrupt_factor, "perturb one factor entry (the rank and p-model suites must fail)");

  std::vector<std::string> args;
  try {
    std::set<std::string> names;
    for (const auto* s : app.get_subcommands([](const CLI::App*) { return true; })) names.insert(s->get_name());
    args = expand_config(argc, argv, names);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      const qcfg::SourceTree tr = gen_f.source_tree();
      const qcfg::SymbolConfig sc = gen_f.symbols();
      const auto params = qcfg::EmbeddingParams::random(sc, tr.num_nodes(), gen_f.dim, gen_f.seed);
      if (gen_model == "vanilla") {
        qcfg::write_table_file(gen_out, qcfg::table_file(gen_f.apply_masks(qcfg::parameterize_dense(sc, tr, params), tr), tr));
      } else {
        qcfg::QcfgRuleTable lex = qcfg::parameterize_lexical(sc, tr, params);
        if (gen_f.mask == "basic") lex = qcfg::apply_basic_alignment_mask(lex, tr);
        qcfg::write_table_file(gen_out + ".lex", qcfg::table_file(lex, tr));
        if (gen_model == "e") {
          auto f = qcfg::parameterize_e(sc, tr, params);
          if (gen_f.mask == "basic") f = qcfg::apply_basic_alignment_mask(f, tr);
          qcfg::write_table_file(gen_out, qcfg::table_file(f, tr));
        } else {
          auto f = qcfg::parameterize_p(sc, tr, params);
          if (gen_f.mask == "basic") f = qcfg::apply_basic_alignment_mask(f, tr);
          if (gen_f.hierarchy != "none")
            f = qcfg::apply_hierarchy_mask(f, tr, gen_f.hierarchy == "direct" ? qcfg::HierarchyMode::DirectChild
                                                                               : qcfg::HierarchyMode::Descendant);
          qcfg::write_table_file(gen_out, qcfg::table_file(f, tr));
        }
      }
      json files = json::array({gen_out + ".json", gen_out + ".bin"});
      if (gen_model != "vanilla") files.push_back(gen_out + ".lex.json"), files.push_back(gen_out + ".lex.bin");
      print({{"model", gen_model}, {"symbols", qcfg::symbol_config_json(sc)}, {"tree", qcfg::tree_to_json(tr)},
             {"rule_count", qcfg::count_rules(sc, tr.num_leaves(),
                                              gen_model == "vanilla" ? qcfg::Model::Vanilla
                                              : gen_model == "e"     ? qcfg::Model::E
                                                                     : qcfg::Model::P)},
             {"files", files}});
    } else if (*geni) {
      const qcfg::SourceTree tr = geni_f.source_tree();
      print({{"tree", qcfg::tree_to_json(tr)}, {"target", geni_f.target_tokens(geni_f.vocab)}});
    } else if (*ins) {
      if (ins_model == "vanilla") {
        const auto inst = ins_f.dense_instance();
        print({{"model", ins_model}, {"log_z", qcfg::inside_vanilla(inst.table, inst.tree, inst.target)}});
      } else {
        if (!ins_f.grammar.empty() || !ins_f.builtin.empty())
          throw CLI::ValidationError("--model " + ins_model + " generates its factors from flags");
        if (ins_f.hierarchy != "none" && ins_model != "p")
          throw CLI::ValidationError("--hierarchy applies to the vanilla and p models only");
        const qcfg::SourceTree tr = ins_f.source_tree();
        const qcfg::SymbolConfig sc = ins_f.symbols();
        const auto params = qcfg::EmbeddingParams::random(sc, tr.num_nodes(), ins_f.dim, ins_f.seed);
        qcfg::QcfgRuleTable lex = qcfg::parameterize_lexical(sc, tr, params);
        if (ins_f.mask == "basic") lex = qcfg::apply_basic_alignment_mask(lex, tr);
        const auto target = ins_f.target_tokens(sc.vocab_size);
        double v;
        if (ins_model == "p") {
          auto f = qcfg::parameterize_p(sc, tr, params);
          if (ins_f.mask == "basic") f = qcfg::apply_basic_alignment_mask(f, tr);
          if (ins_f.hierarchy != "none")
            f = qcfg::apply_hierarchy_mask(f, tr, ins_f.hierarchy == "direct" ? qcfg::HierarchyMode::DirectChild
                                                                               : qcfg::HierarchyMode::Descendant);
          v = qcfg::inside_p(f, lex, tr, target);
        } else {
          auto f = qcfg::parameterize_e(sc, tr, params);
          if (ins_f.mask == "basic") f = qcfg::apply_basic_alignment_mask(f, tr);
          v = ins_model == "e" ? qcfg::inside_e_naive(f, lex, tr, target) : qcfg::inside_e_rank(f, lex, tr, target);
        }
        print({{"model", ins_model}, {"log_z", v}});
      }
    } else if (*smp) {
      const auto inst = smp_f.dense_instance();
      const auto ds = qcfg::sample_target_trees(inst.table, inst.tree, inst.target, smp_count,
                                                smp->count("--sample-seed") ? smp_seed : smp_f.seed);
      json samples = json::array();
      for (const auto& d : ds) samples.push_back(qcfg::derivation_to_json(inst.table, d));
      print({{"tree", inst.tree.render()}, {"target", inst.target},
             {"log_z", qcfg::inside_vanilla(inst.table, inst.tree, inst.target)}, {"samples", samples}});
    } else if (*pr) {
      const auto inst = pr_f.dense_instance();
      if (!pr_xi.empty()) {
        pr_cfg.xi.clear();
        std::stringstream ss(pr_xi);
        std::string tok;
        while (std::getline(ss, tok, ',')) pr_cfg.xi.push_back(std::stod(tok));
      }
      pr_cfg.penalize = !pr_reward_sign;
      json out;
      try {
        const auto obj = qcfg::pr_objective(inst.table, inst.tree, inst.target, pr_cfg);
        const auto& st = obj.state;
        out = {{"converged", true}, {"iterations", st.iterations}, {"lambda", vec(st.lambda)},
               {"expected_counts", vec(st.expected_phi)}, {"xi", vec(st.xi)}, {"dual_value", st.dual_value},
               {"kl", obj.kl}, {"log_likelihood", obj.log_likelihood}, {"combined", obj.combined},
               {"dual_trajectory", vec(st.trajectory)}};
        print(out);
      } catch (const qcfg::ConvergenceError& e) {
        const auto& st = e.state();
        print({{"converged", false}, {"error", e.what()}, {"gradient_norm", st.gradient_norm},
               {"lambda", vec(st.lambda)}, {"expected_counts", vec(st.expected_phi)}, {"xi", vec(st.xi)},
               {"dual_trajectory", vec(st.trajectory)}});
        return 1;
      }
    } else if (*rwd) {
      const auto v = qcfg::reward_values(rwd_max);
      std::cout << "d,zeta\n";
      std::cout.precision(17);
      for (std::size_t d = 0; d < v.size(); ++d) std::cout << d << ',' << v[d] << '\n';
      std::cout << "inf,0\n";
    } else if (*bench) {
      bcfg.lengths = parse_int_list(b_lengths);
      bcfg.models = parse_word_list(b_models);
      bcfg.memory_budget = static_cast<std::size_t>(b_budget_mb * 1024.0 * 1024.0);
      bcfg.low_rank.vocab_size = bcfg.vanilla.vocab_size = 5000;
      const auto records = qcfg::run_benchmark(bcfg, &std::cerr);
      if (b_out.empty()) {
        qcfg::write_benchmark_csv(std::cout, records);
      } else {
        std::ofstream f(b_out);
        if (!f) throw std::runtime_error("cannot open " + b_out);
        qcfg::write_benchmark_csv(f, records);
      }
    } else if (*ver) {
      const auto rep = qcfg::run_verify(vopt);
      print(rep.to_json(vopt));
      return rep.passed() ? 0 : 1;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

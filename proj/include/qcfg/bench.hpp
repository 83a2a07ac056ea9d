#pragma once

// Synthetic runtime/memory scaling study: x = S = T, random source tree and
// random target over a 5000-word vocabulary, one instance per repeat.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcfg/grammar.hpp"
#include "qcfg/inside.hpp"
#include "qcfg/memory.hpp"
#include "qcfg/tree.hpp"

namespace qcfg {

struct BenchConfig {
  std::vector<int> lengths{8, 12, 16, 24, 32};
  std::vector<std::string> models{"vanilla", "e-rank", "p"};  // also accepts "e" (naive E)
  SymbolConfig vanilla{8, 8, 5000, 0};
  SymbolConfig low_rank{50, 50, 5000, 200};
  int dim = 16;
  int repeats = 3;
  std::uint64_t seed = 1;
  std::size_t memory_budget = std::size_t{3} << 30;

  void validate() const {
    if (lengths.empty()) throw std::invalid_argument("benchmark needs at least one length");
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      if (lengths[i] < 2) throw std::invalid_argument("benchmark lengths must be >= 2");
      if (i > 0 && lengths[i] <= lengths[i - 1]) throw std::invalid_argument("benchmark lengths must be ascending");
    }
    if (repeats < 3) throw std::invalid_argument("benchmark repeats must be >= 3");
    if (dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
    vanilla.validate();
    low_rank.validate();
    if (low_rank.num_ranks < 1) throw std::invalid_argument("low-rank config needs num_ranks >= 1");
    for (const auto& m : models)
      if (m != "vanilla" && m != "e" && m != "e-rank" && m != "p") throw std::invalid_argument("unknown model: " + m);
  }
};

struct BenchRecord {
  std::string model;
  int length = 0;
  bool skipped = false;       // pre-flight estimate above the memory budget
  double time_s = 0.0;        // median wall time of one inside pass
  std::size_t mem_bytes = 0;  // tracked peak of tables + chart
  std::size_t estimate_bytes = 0;
  double slope = std::nan("");  // per model, log-log least squares over measured lengths
};

/// Bytes of every table and chart buffer the measured pass allocates.
inline std::size_t bench_memory_estimate(const BenchConfig& cfg, const std::string& model, int x) {
  const bool dense = model == "vanilla";
  const SymbolConfig& s = dense ? cfg.vanilla : cfg.low_rank;
  const double n = 2.0 * x - 1, nt = s.num_nonterminals, m = s.num_child_symbols(), r = s.num_ranks;
  const double spans = x * (x + 1) / 2.0;
  double doubles = nt * n + s.num_preterminals * n * s.vocab_size + spans * m * n;  // lexical + chart
  if (dense) {
    doubles += nt * n * (m * n) * (m * n);
  } else if (model == "p") {
    doubles += 2.0 * (nt * n * r + r * n * n * n + 2.0 * r * n * m);  // log + exp copies
    doubles += r * n * n + 2.0 * spans * r * n;                      // hat + projections
  } else {
    doubles += 2.0 * (nt * n * r + 2.0 * r * m * n) + 2.0 * spans * r;
  }
  return static_cast<std::size_t>(doubles * sizeof(double));
}

inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t k = xs.size();
  if (k < 2) return std::nan("");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= k;
  my /= k;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace detail {

// One timed inside pass on a fresh instance; returns {seconds, peak bytes}.
inline std::pair<double, std::size_t> bench_once(const BenchConfig& cfg, const std::string& model, int x,
                                                 std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  const bool dense = model == "vanilla";
  const SymbolConfig& s = dense ? cfg.vanilla : cfg.low_rank;
  const SourceTree tree = random_binary_tree(x, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> word(0, s.vocab_size - 1);
  std::vector<int> target(x);
  for (int& w : target) w = word(rng);

  const std::size_t base = MemoryTracker::current_bytes();
  MemoryTracker::reset_peak();
  const EmbeddingParams params = EmbeddingParams::random(s, tree.num_nodes(), cfg.dim, seed);
  double value = kNegInf;
  clock::time_point t0, t1;
  if (dense) {
    QcfgRuleTable table = parameterize_dense(s, tree, params);
    t0 = clock::now();
    const VanillaInside kernel(std::move(table));
    value = kernel.log_partition(tree, target);
    t1 = clock::now();
  } else {
    const QcfgRuleTable lex = parameterize_lexical(s, tree, params);
    if (model == "p") {
      const FactorTablesP f = parameterize_p(s, tree, params);
      t0 = clock::now();
      value = PInside(f, lex).log_partition(tree, target);
      t1 = clock::now();
    } else {
      const FactorTablesE f = parameterize_e(s, tree, params);
      t0 = clock::now();
      value = EInside(f, lex).log_partition(tree, target, model == "e-rank");
      t1 = clock::now();
    }
  }
  if (!std::isfinite(value)) throw std::runtime_error("benchmark instance produced a non-finite inside value");
  const std::size_t peak = MemoryTracker::peak_bytes();
  return {std::chrono::duration<double>(t1 - t0).count(), peak > base ? peak - base : 0};
}

}  // namespace detail

/// Runs every (model, length) point. `progress` (optional) gets one line per
/// finished point.
inline std::vector<BenchRecord> run_benchmark(const BenchConfig& cfg, std::ostream* progress = nullptr) {
  cfg.validate();
  std::vector<BenchRecord> out;
  for (const auto& model : cfg.models) {
    const std::size_t first = out.size();
    std::vector<double> xs, ts;
    for (int x : cfg.lengths) {
      BenchRecord rec;
      rec.model = model;
      rec.length = x;
      rec.estimate_bytes = bench_memory_estimate(cfg, model, x);
      if (rec.estimate_bytes > cfg.memory_budget) {
        rec.skipped = true;
        if (progress) *progress << model << " x=" << x << " skipped (estimate " << rec.estimate_bytes << " bytes)\n";
        out.push_back(rec);
        continue;
      }
      std::vector<double> times;
      for (int r = 0; r < cfg.repeats; ++r) {
        const auto [t, mem] = detail::bench_once(cfg, model, x, cfg.seed * 1'000'003 + x * 101 + r);
        times.push_back(t);
        rec.mem_bytes = std::max(rec.mem_bytes, mem);
      }
      std::sort(times.begin(), times.end());
      rec.time_s = times[times.size() / 2];
      xs.push_back(x);
      ts.push_back(rec.time_s);
      if (progress) *progress << model << " x=" << x << " time " << rec.time_s << " s, peak " << rec.mem_bytes << " bytes\n";
      out.push_back(rec);
    }
    const double slope = loglog_slope(xs, ts);
    for (std::size_t i = first; i < out.size(); ++i) out[i].slope = slope;
  }
  return out;
}

/// CSV with header model,length,time_s,mem_bytes,slope. Skipped points keep
/// their row with empty time and memory fields.
inline void write_benchmark_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << "model,length,time_s,mem_bytes,slope\n";
  for (const auto& r : records) {
    os << r.model << ',' << r.length << ',';
    if (!r.skipped) os << r.time_s;
    os << ',';
    if (!r.skipped) os << r.mem_bytes;
    os << ',' << r.slope << '\n';
  }
}

}  // namespace qcfg

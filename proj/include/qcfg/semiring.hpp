#pragma once

// Semirings for the generic chart recursion. Each provides zero, one, plus,
// times, and from_log (inject a rule log-weight; -inf must map to zero).

#include <algorithm>
#include <cmath>

#include "qcfg/log_math.hpp"

namespace qcfg {

struct LogSemiring {
  using value_type = double;
  static value_type zero() { return kNegInf; }
  static value_type one() { return 0.0; }
  static value_type plus(value_type a, value_type b) { return log_add(a, b); }
  static value_type times(value_type a, value_type b) {
    return (a == kNegInf || b == kNegInf) ? kNegInf : a + b;
  }
  static value_type from_log(double w) { return w; }
};

/// Counts derivations with nonzero weight.
struct CountingSemiring {
  using value_type = double;
  static value_type zero() { return 0.0; }
  static value_type one() { return 1.0; }
  static value_type plus(value_type a, value_type b) { return a + b; }
  static value_type times(value_type a, value_type b) { return a * b; }
  static value_type from_log(double w) { return w == kNegInf ? 0.0 : 1.0; }
};

/// Viterbi in log space.
struct MaxSemiring {
  using value_type = double;
  static value_type zero() { return kNegInf; }
  static value_type one() { return 0.0; }
  static value_type plus(value_type a, value_type b) { return std::max(a, b); }
  static value_type times(value_type a, value_type b) {
    return (a == kNegInf || b == kNegInf) ? kNegInf : a + b;
  }
  static value_type from_log(double w) { return w; }
};

/// First-order expectation semiring over (p, p * sum of log-weights), in
/// linear space. The root value (Z, R) gives entropy log Z - R / Z. Only
/// suitable for small instances where Z does not underflow.
struct EntropySemiring {
  struct value_type {
    double p = 0.0;
    double r = 0.0;
  };
  static value_type zero() { return {0.0, 0.0}; }
  static value_type one() { return {1.0, 0.0}; }
  static value_type plus(value_type a, value_type b) { return {a.p + b.p, a.r + b.r}; }
  static value_type times(value_type a, value_type b) { return {a.p * b.p, a.p * b.r + b.p * a.r}; }
  static value_type from_log(double w) {
    if (w == kNegInf) return zero();
    const double p = std::exp(w);
    return {p, p * w};
  }
  static double entropy(value_type root) { return std::log(root.p) - root.r / root.p; }
};

}  // namespace qcfg

#pragma once

// Log-space numerics shared by every chart routine.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace qcfg {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

/// Max-shifted logsumexp. Returns -inf for an empty or all -inf range.
inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  if (m == std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Streaming accumulator for logsumexp; rescales when a larger term arrives.
class LogAccumulator {
 public:
  void add(double x) {
    if (x == kNegInf) return;
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }
  double value() const { return max_ == kNegInf ? kNegInf : max_ + std::log(sum_); }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
};

/// Normalizes a block of log-weights in place so that it logsumexps to 0.
/// A block that is entirely -inf is left untouched.
inline void log_normalize(std::span<double> xs) {
  const double z = log_sum_exp(xs);
  if (z == kNegInf) return;
  for (double& x : xs) x -= z;
}

}  // namespace qcfg

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcfg/memory.hpp"

namespace qcfg {

/// Per-span cells over a target of length T; only spans 0 <= i < k <= T
/// exist. Each cell holds `width` values, indexed by fused (symbol, node).
template <typename V>
class Chart {
 public:
  Chart() = default;
  Chart(int target_len, int width, V fill)
      : target_len_(target_len),
        width_(width),
        data_(static_cast<std::size_t>(target_len) * (target_len + 1) / 2 * width, fill) {}

  int target_len() const { return target_len_; }
  int width() const { return width_; }

  std::size_t span_index(int i, int k) const {
    if (i < 0 || k > target_len_ || i >= k)
      throw std::out_of_range("span [" + std::to_string(i) + "," + std::to_string(k) + ") outside chart");
    // Row i holds spans (i, i+1) .. (i, T).
    const std::size_t before = static_cast<std::size_t>(i) * target_len_ - static_cast<std::size_t>(i) * (i - 1) / 2;
    return before + (k - i - 1);
  }

  std::span<V> cell(int i, int k) {
    return std::span<V>(data_).subspan(span_index(i, k) * width_, width_);
  }
  std::span<const V> cell(int i, int k) const {
    return std::span<const V>(data_).subspan(span_index(i, k) * width_, width_);
  }
  std::size_t num_values() const { return data_.size(); }

 private:
  int target_len_ = 0;
  int width_ = 0;
  tracked_vector<V> data_;
};

}  // namespace qcfg

#pragma once

// Allocation accounting for grammar tables and charts. Every buffer that the
// benchmark reports on is a `tracked_vector`, so the peak reported here is the
// peak of table + chart bytes, independent of the OS allocator.

#include <atomic>
#include <cstddef>
#include <memory>
#include <new>
#include <vector>

namespace qcfg {

class MemoryTracker {
 public:
  static void allocated(std::size_t bytes) {
    const std::size_t now = current().fetch_add(bytes) + bytes;
    std::size_t p = peak().load();
    while (now > p && !peak().compare_exchange_weak(p, now)) {
    }
  }
  static void released(std::size_t bytes) { current().fetch_sub(bytes); }

  static std::size_t current_bytes() { return current().load(); }
  static std::size_t peak_bytes() { return peak().load(); }
  /// Resets the peak to the currently live byte count.
  static void reset_peak() { peak().store(current().load()); }

 private:
  static std::atomic<std::size_t>& current() {
    static std::atomic<std::size_t> v{0};
    return v;
  }
  static std::atomic<std::size_t>& peak() {
    static std::atomic<std::size_t> v{0};
    return v;
  }
};

template <typename T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    MemoryTracker::allocated(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryTracker::released(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <typename U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using tracked_vector = std::vector<T, TrackingAllocator<T>>;

}  // namespace qcfg

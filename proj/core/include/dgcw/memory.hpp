#pragma once

#include <atomic>
#include <cstddef>
#include <new>
#include <vector>

namespace dgcw {

// Process-wide accounting of bytes held by tensor storage and kernel scratch.
// Peak tracking is what `bench` reports as auxiliary memory.
class MemoryTracker {
 public:
  static void on_alloc(std::size_t bytes) noexcept;
  static void on_free(std::size_t bytes) noexcept;

  static std::size_t current() noexcept;
  static std::size_t peak() noexcept;
  // Resets the peak to the current level and returns that level.
  static std::size_t reset_peak() noexcept;

 private:
  static std::atomic<std::size_t> current_;
  static std::atomic<std::size_t> peak_;
};

template <typename T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    auto* p = static_cast<T*>(::operator new(n * sizeof(T)));
    MemoryTracker::on_alloc(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryTracker::on_free(n * sizeof(T));
    ::operator delete(p);
  }

  template <typename U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, TrackingAllocator<T>>;

}  // namespace dgcw

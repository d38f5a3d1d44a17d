#include "airsplat/common.hpp"

#include <algorithm>
#include <cstdlib>

namespace airsplat {

namespace {

int initial_threads() {
  if (const char* env = std::getenv("AIRSPLAT_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int>& thread_slot() {
  static std::atomic<int> n{initial_threads()};
  return n;
}

}  // namespace

int thread_count() { return thread_slot().load(std::memory_order_relaxed); }

void set_thread_count(int n) {
  thread_slot().store(std::max(1, n), std::memory_order_relaxed);
}

}  // namespace airsplat

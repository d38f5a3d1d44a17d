#include "airsplat/kernels.hpp"

#include <cstdlib>

namespace airsplat::kernels {

const KernelTable* avx2_table_impl();

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* resolve_avx2() {
  if (!cpu_has_avx2()) return nullptr;
  return avx2_table_impl();
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("AIRSPLAT_LAB_SIMD")) {
    const std::string s = env;
    if (s == "scalar") return &scalar_table();
    if (s == "avx2") {
      if (const KernelTable* t = resolve_avx2()) return t;
      return &scalar_table();
    }
  }
  if (const KernelTable* t = resolve_avx2()) return t;
  return &scalar_table();
}

const KernelTable*& active_slot() {
  static const KernelTable* slot = pick_default();
  return slot;
}

}  // namespace

const KernelTable* avx2_table() { return resolve_avx2(); }

const KernelTable& active() { return *active_slot(); }

bool select_backend(const std::string& name) {
  if (name == "auto") {
    active_slot() = pick_default();
    return true;
  }
  if (name == "scalar") {
    active_slot() = &scalar_table();
    return true;
  }
  if (name == "avx2") {
    if (const KernelTable* t = resolve_avx2()) {
      active_slot() = t;
      return true;
    }
    return false;
  }
  return false;
}

}  // namespace airsplat::kernels

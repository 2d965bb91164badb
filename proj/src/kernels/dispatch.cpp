#include <atomic>
#include <cstdlib>
#include <string_view>

#include "apa/kernels.hpp"

namespace apa::kernels {

#if defined(APA_HAVE_AVX2_KERNELS)
const KernelTable* avx2_table_impl();
#endif

const KernelTable* avx2_table() {
#if defined(APA_HAVE_AVX2_KERNELS)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? avx2_table_impl() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{nullptr};
  return current;
}

const KernelTable* resolve() {
  if (const char* env = std::getenv("APA_KERNELS")) {
    std::string_view want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2_table()) return avx2_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

}  // namespace

const KernelTable& active() {
  const KernelTable* t = slot().load(std::memory_order_acquire);
  if (!t) {
    t = resolve();
    slot().store(t, std::memory_order_release);
  }
  return *t;
}

bool select(std::string_view name) {
  if (name == "scalar") {
    slot().store(&scalar_table(), std::memory_order_release);
    return true;
  }
  if (name == "avx2" && avx2_table()) {
    slot().store(avx2_table(), std::memory_order_release);
    return true;
  }
  return false;
}

}  // namespace apa::kernels

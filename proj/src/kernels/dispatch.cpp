#include <atomic>
#include <cstdlib>
#include <string>

#include "loopforge/error.hpp"
#include "loopforge/kernels.hpp"

namespace loopforge::kernels {

namespace {

std::atomic<const KernelTable*> g_active{nullptr};

Isa best_available() {
  if (isa_available(Isa::avx2)) return Isa::avx2;
  if (isa_available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("LOOPFORGE_ISA")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == to_string(isa) && isa_available(isa)) return &table_for(isa);
    }
  }
  return &table_for(best_available());
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "scalar";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(LOOPFORGE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(LOOPFORGE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
  if (!isa_available(isa)) {
    fail(ErrorCode::capability, "kernel ISA '" + std::string(to_string(isa)) + "' is not available");
  }
  switch (isa) {
#if defined(LOOPFORGE_HAVE_AVX2)
    case Isa::avx2: return avx2::table();
#endif
#if defined(LOOPFORGE_HAVE_NEON)
    case Isa::neon: return neon::table();
#endif
    default: return scalar::table();
  }
}

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    const KernelTable* init = initial_table();
    g_active.compare_exchange_strong(t, init, std::memory_order_acq_rel);
    t = g_active.load(std::memory_order_acquire);
  }
  return *t;
}

void set_active(Isa isa) { g_active.store(&table_for(isa), std::memory_order_release); }

}  // namespace loopforge::kernels

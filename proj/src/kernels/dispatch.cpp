#include <atomic>
#include <cstdlib>
#include <string>

#include "kernel_impl.hpp"
#include "svebm/errors.hpp"

namespace svebm::kernels {
namespace {

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable* resolve_initial() {
  if (const char* env = std::getenv("SVEBM_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && cpu_supports(Isa::Avx2)) return avx2_table();
  }
  return &table_for(detect_best_isa());
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& scalar_table() { return detail::kScalarTable; }

const KernelTable* avx2_table() {
#if defined(SVEBM_HAVE_AVX2)
  return &detail::kAvx2Table;
#else
  return nullptr;
#endif
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(SVEBM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa detect_best_isa() { return cpu_supports(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar; }

const KernelTable& table_for(Isa isa) {
  if (isa == Isa::Avx2) {
    if (!cpu_supports(Isa::Avx2) || avx2_table() == nullptr)
      throw ContractError("AVX2 kernels are not available on this build/CPU");
    return *avx2_table();
  }
  return scalar_table();
}

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = resolve_initial();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

void select_isa(Isa isa) { g_active.store(&table_for(isa), std::memory_order_release); }

}  // namespace svebm::kernels

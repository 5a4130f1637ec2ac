#pragma once

// Dense double-precision kernels used by every layer. Each kernel has a
// portable scalar reference implementation and, on x86-64, an AVX2/FMA
// variant. The active table is chosen once at startup from CPUID and can be
// overridden (SVEBM_KERNELS=scalar|avx2, or select_isa()).
//
// All matrices are row-major and densely packed.

#include <cstddef>
#include <span>
#include <string_view>

namespace svebm::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

struct AdamStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  // C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
  // C[m x n] (+)= A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*sum_squares)(std::size_t n, const double* x);
  // In-place Adam update of params p with gradient g and moments m, v.
  void (*adam_update)(std::size_t n, double* p, const double* g, double* m,
                      double* v, const AdamStep& step);
};

const KernelTable& scalar_table();
/// Returns nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);
/// Best ISA that is both compiled in and supported by this CPU.
Isa detect_best_isa();

/// Table used by the library. First call resolves SVEBM_KERNELS or CPUID.
const KernelTable& active();
/// Forces a specific table; throws ContractError when unavailable.
void select_isa(Isa isa);
const KernelTable& table_for(Isa isa);

// Convenience wrappers over the active table.
inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.size(), x.data(), y.data());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(x.size(), alpha, x.data(), y.data());
}
inline double sum_squares(std::span<const double> x) {
  return active().sum_squares(x.size(), x.data());
}

}  // namespace svebm::kernels

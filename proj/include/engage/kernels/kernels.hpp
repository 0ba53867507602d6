// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace engage::kernels {

// Instruction set a kernel table was built for.
enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Row-major dense kernels. Every matrix argument is a contiguous buffer with
// an explicit leading dimension; all routines accumulate into the output.
struct KernelTable {
  Isa isa;

  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);

  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);

  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
};

// Portable reference implementation; always available.
const KernelTable& scalar_table();

// AVX2+FMA implementation, or nullptr when it was not compiled in.
const KernelTable* avx2_table();

// True when the running CPU can execute `isa`.
bool cpu_supports(Isa isa);

// The table used by diffcore. Chosen once on first use: the widest ISA the
// CPU supports, unless ENGAGE_SIMD=scalar is set in the environment.
const KernelTable& active();

// Force a specific table. Throws std::invalid_argument when the ISA is not
// compiled in or not supported by this CPU.
void select(Isa isa);

}  // namespace engage::kernels

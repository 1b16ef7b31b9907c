#pragma once

// Inner-loop kernels behind convolution and depthwise cross-correlation.
//
// Every kernel exists as a scalar reference and, when the compiler can target
// it, an AVX2+FMA variant. The variant is picked once per process from CPUID;
// setting APN_KERNELS=scalar in the environment forces the reference path.
// Both tables are exposed so tests can compare them directly.

#include <cstddef>

namespace apn::kernels {

// C(MxN) += A(MxK) * B(KxN), all row-major with leading dimensions.
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                        const double* b, std::size_t ldb, double* c, std::size_t ldc);
using DotFn = double (*)(const double* x, const double* y, std::size_t n);
// y += alpha * x
using AxpyFn = void (*)(double alpha, const double* x, double* y, std::size_t n);

struct KernelTable {
  const char* name;
  GemmFn gemm_nn;  // C += A * B
  GemmFn gemm_nt;  // C += A * B^T, B stored (N x K)
  GemmFn gemm_tn;  // C += A^T * B, A stored (K x M)
  DotFn dot;
  AxpyFn axpy;
};

const KernelTable& scalar_table();

// nullptr when the build has no AVX2 variant or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// The table used by the tensor ops.
const KernelTable& active();

}  // namespace apn::kernels

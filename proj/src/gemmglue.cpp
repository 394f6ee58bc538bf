#include "sonn/gemmglue.hpp"

#include <dlfcn.h>

#include <mutex>
#include <stdexcept>

#include <cstdlib>

namespace sonn::detail {
namespace {

// cblas_{s,d}gemm ABI: the CBLAS enums are plain ints.
constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

using SgemmFn = void (*)(int, int, int, int, int, int, float, const float*,
                         int, const float*, int, float, float*, int);
using DgemmFn = void (*)(int, int, int, int, int, int, double, const double*,
                         int, const double*, int, double, double*, int);

struct Blas {
  SgemmFn sgemm = nullptr;
  DgemmFn dgemm = nullptr;
};

// OpenBLAS picks its kernels from CPUID in its ELF constructor, which runs
// before main() when the library is a link-time dependency. Some
// virtualized CPUs are misdetected and fall back to ancient kernels, so the
// library is loaded lazily instead, after steering the selection for
// AVX-512 machines. A user-provided OPENBLAS_CORETYPE always wins. The
// process also manages its own worker pool; BLAS must not add a second
// layer of (schedule-dependent) parallelism or results stop being
// reproducible, so it is pinned to one thread.
const Blas& blas() {
  static Blas b;
  static std::once_flag once;
  std::call_once(once, [] {
    if (__builtin_cpu_supports("avx512f"))
      setenv("OPENBLAS_CORETYPE", "SKYLAKEX", /*overwrite=*/0);
    void* h = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (!h) h = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    if (!h)
      throw std::runtime_error("failed to load OpenBLAS: " +
                               std::string(dlerror()));
    auto set_threads =
        reinterpret_cast<void (*)(int)>(dlsym(h, "openblas_set_num_threads"));
    if (set_threads) set_threads(1);
    b.sgemm = reinterpret_cast<SgemmFn>(dlsym(h, "cblas_sgemm"));
    b.dgemm = reinterpret_cast<DgemmFn>(dlsym(h, "cblas_dgemm"));
    if (!b.sgemm || !b.dgemm)
      throw std::runtime_error("OpenBLAS is missing cblas_sgemm/cblas_dgemm");
  });
  return b;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  blas().sgemm(kRowMajor, trans_a ? kTrans : kNoTrans,
               trans_b ? kTrans : kNoTrans, m, n, k, alpha, a, lda, b, ldb,
               beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  blas().dgemm(kRowMajor, trans_a ? kTrans : kNoTrans,
               trans_b ? kTrans : kNoTrans, m, n, k, alpha, a, lda, b, ldb,
               beta, c, ldc);
}

}  // namespace sonn::detail

#pragma once

#include <cstddef>
#include <string>

// Dense double-precision kernels used by the classifier's inner loops.
// A scalar reference implementation always exists; on x86-64 an AVX2/FMA
// variant is compiled into its own translation unit and picked at runtime
// when the CPU supports it. The environment variable UNILAP_KERNELS
// ("scalar" or "avx2") overrides the automatic choice.

namespace unilap::kernels {

struct Ops {
    // y[i] += alpha * x[i]
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
    // sum_i a[i] * b[i]
    double (*dot)(std::size_t n, const double* a, const double* b);
    // sum_i x[i]
    double (*sum)(std::size_t n, const double* x);
    // out[i] = 1 / (1 + exp(-z[i]))
    void (*sigmoid)(std::size_t n, const double* z, double* out);
    const char* name;
};

// Scalar reference kernels. Always available; the oracle side of the
// scalar-vs-SIMD equivalence tests.
const Ops& scalar_ops();

#if defined(__x86_64__) || defined(_M_X64)
bool avx2_supported();
const Ops& avx2_ops();  // call only when avx2_supported()
#endif

// The runtime-selected implementation (resolved once, thread-safe).
const Ops& active();

// Name of the implementation `active()` resolved to.
std::string active_name();

}  // namespace unilap::kernels

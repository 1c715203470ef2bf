#include "unilap/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <mutex>

namespace unilap::kernels {

namespace scalar {

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

double dot(std::size_t n, const double* a, const double* b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double sum(std::size_t n, const double* x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += x[i];
    }
    return acc;
}

// Evaluated via exp(-|z|) so the argument never overflows.
void sigmoid(std::size_t n, const double* z, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = z[i];
        const double e = std::exp(v >= 0.0 ? -v : v);
        out[i] = v >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    }
}

}  // namespace scalar

const Ops& scalar_ops() {
    static const Ops ops{scalar::axpy, scalar::dot, scalar::sum, scalar::sigmoid, "scalar"};
    return ops;
}

#if defined(__x86_64__) || defined(_M_X64)
bool avx2_supported() {
#if defined(UNILAP_HAVE_AVX2_TU)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}
#endif

namespace {

const Ops* select_ops() {
    const char* forced = std::getenv("UNILAP_KERNELS");
    if (forced != nullptr) {
        const std::string name(forced);
        if (name == "scalar") {
            return &scalar_ops();
        }
#if defined(__x86_64__) || defined(_M_X64)
        if (name == "avx2" && avx2_supported()) {
            return &avx2_ops();
        }
#endif
        // Unknown or unsupported override falls back to the scalar path.
        return &scalar_ops();
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2_supported()) {
        return &avx2_ops();
    }
#endif
    return &scalar_ops();
}

}  // namespace

const Ops& active() {
    static const Ops* ops = select_ops();
    return *ops;
}

std::string active_name() {
    return active().name;
}

}  // namespace unilap::kernels

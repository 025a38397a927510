#include "accelmap/kernels.hpp"

namespace accelmap::kernels::scalar {

void axpy_widen(double* acc, float alpha, const float* x, std::size_t n) {
    const double a = alpha;
    for (std::size_t i = 0; i < n; ++i) acc[i] += a * static_cast<double>(x[i]);
}

std::size_t count_nonzero(const float* x, std::size_t n) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) count += x[i] != 0.0f;
    return count;
}

void narrow(float* out, const double* in, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(in[i]);
}

}  // namespace accelmap::kernels::scalar

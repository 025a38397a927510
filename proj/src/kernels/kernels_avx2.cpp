// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "accelmap/kernels.hpp"

namespace accelmap::kernels::avx2 {

void axpy_widen(double* acc, float alpha, const float* x, std::size_t n) {
    const __m256d a = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xs = _mm256_loadu_ps(x + i);
        const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(xs));
        const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(xs, 1));
        _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(a, lo, _mm256_loadu_pd(acc + i)));
        _mm256_storeu_pd(acc + i + 4, _mm256_fmadd_pd(a, hi, _mm256_loadu_pd(acc + i + 4)));
    }
    for (; i + 4 <= n; i += 4) {
        const __m256d xs = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
        _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(a, xs, _mm256_loadu_pd(acc + i)));
    }
    const double as = alpha;
    for (; i < n; ++i) acc[i] += as * static_cast<double>(x[i]);
}

std::size_t count_nonzero(const float* x, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t zeros = 0;
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        // ordered-equal: NaN lanes count as nonzero, matching the scalar !=
        const int mask = _mm256_movemask_ps(_mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_EQ_OQ));
        zeros += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask)));
    }
    std::size_t count = (i - zeros);
    for (; i < n; ++i) count += x[i] != 0.0f;
    return count;
}

void narrow(float* out, const double* in, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm_storeu_ps(out + i, _mm256_cvtpd_ps(_mm256_loadu_pd(in + i)));
    for (; i < n; ++i) out[i] = static_cast<float>(in[i]);
}

}  // namespace accelmap::kernels::avx2

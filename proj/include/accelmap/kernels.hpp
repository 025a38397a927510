#pragma once

// Inner-loop primitives used by the simulators. Each primitive has a scalar
// reference and, where the build and CPU allow it, an AVX2 variant; the
// active table is chosen once at runtime. All variants are bit-identical:
// float*float products are exact in double, so fused and unfused
// accumulation round the same way.

#include <cstddef>
#include <string_view>

namespace accelmap::kernels {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa);

struct KernelTable {
    Isa isa;
    /// acc[i] += alpha * x[i], accumulated in double
    void (*axpy_widen)(double* acc, float alpha, const float* x, std::size_t n);
    /// number of elements not exactly equal to zero
    std::size_t (*count_nonzero)(const float* x, std::size_t n);
    /// out[i] = float(in[i])
    void (*narrow)(float* out, const double* in, std::size_t n);
};

/// Table for `isa`, or nullptr when the build or the CPU cannot run it.
const KernelTable* table_for(Isa isa);

/// Best supported table. ACCELMAP_ISA=scalar in the environment forces the
/// scalar path.
const KernelTable& active();

namespace scalar {
void axpy_widen(double* acc, float alpha, const float* x, std::size_t n);
std::size_t count_nonzero(const float* x, std::size_t n);
void narrow(float* out, const double* in, std::size_t n);
}  // namespace scalar

#if defined(ACCELMAP_HAVE_AVX2)
namespace avx2 {
void axpy_widen(double* acc, float alpha, const float* x, std::size_t n);
std::size_t count_nonzero(const float* x, std::size_t n);
void narrow(float* out, const double* in, std::size_t n);
}  // namespace avx2
#endif

}  // namespace accelmap::kernels

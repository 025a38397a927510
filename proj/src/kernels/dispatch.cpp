// Runtime selection only; no intrinsics in this file.
#include <cstdlib>
#include <cstring>

#include "accelmap/kernels.hpp"

namespace accelmap::kernels {

namespace {

constexpr KernelTable kScalar{Isa::scalar, &scalar::axpy_widen, &scalar::count_nonzero, &scalar::narrow};

#if defined(ACCELMAP_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2, &avx2::axpy_widen, &avx2::count_nonzero, &avx2::narrow};

bool cpu_has_avx2() {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable& select() {
    if (const char* forced = std::getenv("ACCELMAP_ISA"); forced && std::strcmp(forced, "scalar") == 0) {
        return kScalar;
    }
    if (const KernelTable* t = table_for(Isa::avx2)) return *t;
    return kScalar;
}

}  // namespace

std::string_view to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable* table_for(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return &kScalar;
        case Isa::avx2:
#if defined(ACCELMAP_HAVE_AVX2)
            return cpu_has_avx2() ? &kAvx2 : nullptr;
#else
            return nullptr;
#endif
    }
    return nullptr;
}

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

}  // namespace accelmap::kernels

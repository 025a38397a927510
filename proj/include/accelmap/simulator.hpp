#pragma once

// Analytical cycle models of three accelerator families, executed alongside
// a functional computation of the layer output.
//
// Flexible (FLEX_LINEAR) fabric, per tile iteration:
//   cost = ceil(delivered / dn_bw) + 1 + ceil(log2(ms_size)) + ceil(outputs / rn_bw)
// where `delivered` counts the weights and input window of the tile and
// `outputs` the outputs it produces. Without an accumulation buffer every
// non-final reduction step also reads back its partial sums, doubling the
// reduction traffic of that iteration.
//
// Sparse GEMM: ceil(effective_macs / ms_size) + ceil(nonzeros / dn_bw)
//              + ceil(outputs / rn_bw), zero operands skipped.
// Systolic output-stationary mesh:
//   ceil(M / rows) * ceil(N / cols) * (K + rows + cols - 1).

#include <cstdint>

#include "accelmap/config.hpp"
#include "accelmap/graph.hpp"
#include "accelmap/mapping.hpp"
#include "accelmap/tensor.hpp"

namespace accelmap {

struct SimReport {
    std::uint64_t cycles = 0;
    std::uint64_t psums = 0;         // partial-sum accumulation events
    std::uint64_t macs = 0;          // multiply-accumulates executed
    std::uint64_t skipped_macs = 0;  // elided because an operand was zero
    double utilization = 0.0;        // mean busy fraction of the multipliers
    std::uint64_t iterations = 0;    // tile iterations (flexible fabric)
    Tensor output;
};

/// Closed-form timing of the flexible fabric for one mapping.
struct FlexibleTiming {
    std::uint64_t iterations = 0;
    std::uint64_t reduction_steps = 0;     // temporal steps per output tile
    std::uint64_t elements_delivered = 0;  // per iteration
    std::uint64_t outputs_mapped = 0;      // per iteration
    std::uint64_t distribution = 0;        // cycles per iteration
    std::uint64_t tree_levels = 0;
    std::uint64_t reduction = 0;           // cycles per iteration
    std::uint64_t per_iteration = 0;
    std::uint64_t readback_penalty = 0;    // extra cycles of each non-final iteration
    std::uint64_t cycles = 0;
};

FlexibleTiming flexible_timing(const ConvLayerParams& params, const ConvMapping& m, const ValidatedConfig& cfg);
FlexibleTiming flexible_timing(const FcLayerParams& params, const FcMapping& m, const ValidatedConfig& cfg);

/// Input NHWC, kernel RSCK; output tagged NPQK. `params.p/q` must be inferred.
SimReport simulate_flexible_conv(const Tensor& input, const Tensor& kernel, const ConvLayerParams& params,
                                 const ConvMapping& m, const ValidatedConfig& cfg);

/// Input 1 x in, weights in x out; output 1 x out.
SimReport simulate_flexible_fc(const Tensor& input, const Tensor& weights, const FcLayerParams& params,
                               const FcMapping& m, const ValidatedConfig& cfg);

SimReport simulate_sparse_gemm(const Tensor& a, const Tensor& b, const ValidatedConfig& cfg);
SimReport simulate_systolic_gemm(const Tensor& a, const Tensor& b, const ValidatedConfig& cfg);

/// Partial sums needed by the flexible fabric, from the mapping alone:
///   conv: g * k_g * p * q * ceil(r/t_r) * ceil(s/t_s) * ceil(c_g/t_c)
///   fc:   out * ceil(in/t_k)
std::uint64_t count_psums(const Layer& layer, const Mapping& m);

}  // namespace accelmap

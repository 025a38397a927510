#include "accelmap/simulator.hpp"

#include <algorithm>
#include <vector>

#include "accelmap/error.hpp"
#include "accelmap/kernels.hpp"

namespace accelmap {

namespace {

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

void require_controller(const ValidatedConfig& cfg, ControllerType expected, const char* who) {
    if (cfg.controller() != expected) {
        throw SimulationError(std::string(who) + " needs a " + std::string(to_string(expected)) + " configuration, got " +
                              std::string(to_string(cfg.controller())));
    }
}

void finish_timing(FlexibleTiming& t, const ValidatedConfig& cfg) {
    t.distribution = ceil_div(t.elements_delivered, cfg.dn_bw());
    t.tree_levels = cfg.tree_levels();
    t.reduction = ceil_div(t.outputs_mapped, cfg.rn_bw());
    t.per_iteration = t.distribution + 1 + t.tree_levels + t.reduction;
    t.readback_penalty = cfg.accumulation_buffer() ? 0 : ceil_div(2 * t.outputs_mapped, cfg.rn_bw()) - t.reduction;
    const std::uint64_t non_final = t.iterations - t.iterations / t.reduction_steps;
    t.cycles = t.iterations * t.per_iteration + non_final * t.readback_penalty;
}

// Scalar tail for very short rows; bit-identical to the dispatched kernels.
inline void accumulate(const kernels::KernelTable& k, double* acc, float a, const float* x, std::size_t n) {
    if (n < 4) {
        const double ad = a;
        for (std::size_t i = 0; i < n; ++i) acc[i] += ad * static_cast<double>(x[i]);
    } else {
        k.axpy_widen(acc, a, x, n);
    }
}

Layer conv_layer_view(const ConvLayerParams& params) {
    Layer layer;
    layer.id = "<simulated conv2d>";
    layer.kind = OpKind::conv2d;
    layer.params = params;
    return layer;
}

Layer fc_layer_view(const FcLayerParams& params) {
    Layer layer;
    layer.id = "<simulated dense>";
    layer.kind = OpKind::dense;
    layer.params = params;
    return layer;
}

}  // namespace

FlexibleTiming flexible_timing(const ConvLayerParams& p, const ConvMapping& m, const ValidatedConfig& cfg) {
    FlexibleTiming t;
    t.reduction_steps = ceil_div(p.r, m.t_r) * ceil_div(p.s, m.t_s) * ceil_div(p.c_per_group(), m.t_c);
    t.iterations = t.reduction_steps * ceil_div(p.k_per_group(), m.t_k) * ceil_div(p.g, m.t_g) * ceil_div(p.n, m.t_n) *
                   ceil_div(p.p, m.t_x) * ceil_div(p.q, m.t_y);
    const std::uint64_t weights = std::uint64_t{m.t_r} * m.t_s * m.t_c * m.t_k * m.t_g;
    const std::uint64_t window = std::uint64_t{m.t_g} * m.t_c * ((m.t_x - 1) * p.stride_h + m.t_r) *
                                 ((m.t_y - 1) * p.stride_w + m.t_s);
    t.elements_delivered = weights + window;
    t.outputs_mapped = std::uint64_t{m.t_k} * m.t_g * m.t_n * m.t_x * m.t_y;
    finish_timing(t, cfg);
    return t;
}

FlexibleTiming flexible_timing(const FcLayerParams& p, const FcMapping& m, const ValidatedConfig& cfg) {
    FlexibleTiming t;
    t.reduction_steps = ceil_div(p.in_features, m.t_k);
    t.iterations = ceil_div(p.out_features, m.t_s) * t.reduction_steps * ceil_div(p.batch, m.t_n);
    t.elements_delivered = std::uint64_t{m.t_s} * m.t_k + m.t_k;
    t.outputs_mapped = std::uint64_t{m.t_s} * m.t_n;
    finish_timing(t, cfg);
    return t;
}

SimReport simulate_flexible_conv(const Tensor& input, const Tensor& kernel, const ConvLayerParams& p,
                                 const ConvMapping& m, const ValidatedConfig& cfg) {
    require_controller(cfg, ControllerType::flex_linear, "simulate_flexible_conv");
    validate_mapping(m, conv_layer_view(p), cfg);
    if (input.layout() != Layout::nhwc || input.dims() != conv_input_shape(p, Layout::nhwc).dims) {
        throw SimulationError("simulate_flexible_conv: expected NHWC input " +
                              format_dims(conv_input_shape(p, Layout::nhwc).dims) + ", got " + format_dims(input.dims()) +
                              " " + std::string(to_string(input.layout())));
    }
    if (kernel.layout() != Layout::rsck || kernel.dims() != kernel_dims(p, Layout::rsck)) {
        throw SimulationError("simulate_flexible_conv: expected RSCK kernel " + format_dims(kernel_dims(p, Layout::rsck)));
    }

    const auto& kern = kernels::active();
    const std::size_t cg = p.c_per_group(), kg = p.k_per_group();
    std::vector<double> acc(p.p * p.q * p.k, 0.0);
    const float* in = input.data().data();
    const float* wt = kernel.data().data();

    std::uint64_t iterations = 0, non_final = 0, psums = 0, macs = 0;
    // Output tiles outermost; the reduction tiles of one output tile are
    // consecutive, so the last (r, s, c) tile is the final accumulation.
    for (std::size_t g0 = 0; g0 < p.g; g0 += m.t_g) {
        const std::size_t gl = std::min(m.t_g, p.g - g0);
        for (std::size_t k0 = 0; k0 < kg; k0 += m.t_k) {
            const std::size_t kl = std::min(m.t_k, kg - k0);
            for (std::size_t x0 = 0; x0 < p.p; x0 += m.t_x) {
                const std::size_t xl = std::min(m.t_x, p.p - x0);
                for (std::size_t y0 = 0; y0 < p.q; y0 += m.t_y) {
                    const std::size_t yl = std::min(m.t_y, p.q - y0);
                    const std::uint64_t outputs = std::uint64_t{gl} * kl * xl * yl;
                    for (std::size_t r0 = 0; r0 < p.r; r0 += m.t_r) {
                        const std::size_t rl = std::min(m.t_r, p.r - r0);
                        for (std::size_t s0 = 0; s0 < p.s; s0 += m.t_s) {
                            const std::size_t sl = std::min(m.t_s, p.s - s0);
                            for (std::size_t c0 = 0; c0 < cg; c0 += m.t_c) {
                                const std::size_t cl = std::min(m.t_c, cg - c0);
                                ++iterations;
                                psums += outputs;
                                macs += outputs * rl * sl * cl;
                                if (r0 + m.t_r < p.r || s0 + m.t_s < p.s || c0 + m.t_c < cg) ++non_final;

                                for (std::size_t g = g0; g < g0 + gl; ++g) {
                                    const std::size_t kbase = g * kg + k0;
                                    for (std::size_t x = x0; x < x0 + xl; ++x) {
                                        for (std::size_t y = y0; y < y0 + yl; ++y) {
                                            double* out = &acc[(x * p.q + y) * p.k + kbase];
                                            for (std::size_t r = r0; r < r0 + rl; ++r) {
                                                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(x * p.stride_h + r) -
                                                                          static_cast<std::ptrdiff_t>(p.pad_h);
                                                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(p.h)) continue;
                                                for (std::size_t s = s0; s < s0 + sl; ++s) {
                                                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(y * p.stride_w + s) -
                                                                              static_cast<std::ptrdiff_t>(p.pad_w);
                                                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(p.w)) continue;
                                                    const float* pixel =
                                                        in + (static_cast<std::size_t>(ih) * p.w + static_cast<std::size_t>(iw)) * p.c + g * cg;
                                                    const float* taps = wt + ((r * p.s + s) * cg) * p.k + kbase;
                                                    for (std::size_t c = c0; c < c0 + cl; ++c) {
                                                        accumulate(kern, out, pixel[c], taps + c * p.k, kl);
                                                    }
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    const FlexibleTiming timing = flexible_timing(p, m, cfg);
    SimReport report;
    report.iterations = iterations;
    report.cycles = iterations * timing.per_iteration + non_final * timing.readback_penalty;
    report.psums = psums;
    report.macs = macs;
    report.skipped_macs = 0;
    report.utilization = static_cast<double>(m.footprint()) / cfg.multipliers();
    report.output = Tensor({1, p.p, p.q, p.k}, Layout::npqk);
    kern.narrow(report.output.data().data(), acc.data(), acc.size());
    return report;
}

SimReport simulate_flexible_fc(const Tensor& input, const Tensor& weights, const FcLayerParams& p,
                               const FcMapping& m, const ValidatedConfig& cfg) {
    require_controller(cfg, ControllerType::flex_linear, "simulate_flexible_fc");
    validate_mapping(m, fc_layer_view(p), cfg);
    if (input.layout() != Layout::matrix || input.dims() != Dims{1, p.in_features}) {
        throw SimulationError("simulate_flexible_fc: expected a 1 x " + std::to_string(p.in_features) + " input, got " +
                              format_dims(input.dims()));
    }
    if (weights.layout() != Layout::matrix || weights.dims() != Dims{p.in_features, p.out_features}) {
        throw SimulationError("simulate_flexible_fc: expected " + std::to_string(p.in_features) + " x " +
                              std::to_string(p.out_features) + " weights, got " + format_dims(weights.dims()));
    }
    const auto& kern = kernels::active();
    std::vector<double> acc(p.out_features, 0.0);
    const float* x = input.data().data();
    const float* w = weights.data().data();
    std::uint64_t iterations = 0, non_final = 0, psums = 0, macs = 0;
    for (std::size_t o0 = 0; o0 < p.out_features; o0 += m.t_s) {
        const std::size_t ol = std::min(m.t_s, p.out_features - o0);
        for (std::size_t i0 = 0; i0 < p.in_features; i0 += m.t_k) {
            const std::size_t il = std::min(m.t_k, p.in_features - i0);
            ++iterations;
            psums += ol;
            macs += std::uint64_t{ol} * il;
            if (i0 + m.t_k < p.in_features) ++non_final;
            for (std::size_t i = i0; i < i0 + il; ++i) accumulate(kern, &acc[o0], x[i], w + i * p.out_features + o0, ol);
        }
    }
    const FlexibleTiming timing = flexible_timing(p, m, cfg);
    SimReport report;
    report.iterations = iterations;
    report.cycles = iterations * timing.per_iteration + non_final * timing.readback_penalty;
    report.psums = psums;
    report.macs = macs;
    report.utilization = static_cast<double>(m.footprint()) / cfg.multipliers();
    report.output = Tensor::matrix(1, p.out_features);
    kern.narrow(report.output.data().data(), acc.data(), acc.size());
    return report;
}

std::uint64_t count_psums(const Layer& layer, const Mapping& m) {
    const auto bounds = tile_bounds(layer);
    const auto tiles = tile_values(m);
    if (bounds.size() != tiles.size()) {
        throw MappingError("mapping kind does not match layer '" + layer.id + "'");
    }
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        if (tiles[i] < 1 || tiles[i] > bounds[i]) {
            throw MappingError("invalid mapping for layer '" + layer.id + "': " + format_mapping(m));
        }
    }
    if (layer.kind == OpKind::conv2d) {
        const auto& p = layer.conv();
        const auto& cm = std::get<ConvMapping>(m);
        return std::uint64_t{p.g} * p.k_per_group() * p.p * p.q * ceil_div(p.r, cm.t_r) * ceil_div(p.s, cm.t_s) *
               ceil_div(p.c_per_group(), cm.t_c);
    }
    const auto& p = layer.fc();
    const auto& fm = std::get<FcMapping>(m);
    return std::uint64_t{p.out_features} * p.batch * ceil_div(p.in_features, fm.t_k);
}

}  // namespace accelmap

#pragma once

// Test-side oracles. These deliberately avoid library code paths: plain
// nested loops over raw vectors, integer accumulation where values are
// integral, and brute-force enumeration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "accelmap/config.hpp"
#include "accelmap/graph.hpp"
#include "accelmap/mapping.hpp"
#include "accelmap/tensor.hpp"

namespace oracle {

using accelmap::ConvLayerParams;

inline std::string fixture(const std::string& name) { return std::string(ACCELMAP_FIXTURES) + "/" + name; }

inline accelmap::ValidatedConfig flex(std::uint32_t ms, std::uint32_t dn = 8, std::uint32_t rn = 8, bool accbuf = false) {
    accelmap::HardwareConfig c;
    c.controller_type = accelmap::ControllerType::flex_linear;
    c.ms_network_type = accelmap::MsNetworkType::linear;
    c.ms_size = ms;
    c.dn_bw = dn;
    c.rn_bw = rn;
    c.accumulation_buffer = accbuf;
    return accelmap::validate_config(c);
}

inline accelmap::ValidatedConfig sparse(std::uint32_t ms, std::uint32_t dn = 16, std::uint32_t rn = 16,
                                        std::uint32_t ratio = 0) {
    accelmap::HardwareConfig c;
    c.controller_type = accelmap::ControllerType::sparse_gemm;
    c.ms_size = ms;
    c.dn_bw = dn;
    c.rn_bw = rn;
    c.sparsity_ratio = ratio;
    return accelmap::validate_config(c);
}

inline accelmap::ValidatedConfig systolic(std::uint32_t rows, std::uint32_t cols) {
    accelmap::HardwareConfig c;
    c.controller_type = accelmap::ControllerType::systolic_os;
    c.ms_network_type = accelmap::MsNetworkType::os_mesh;
    c.reduce_network_type = accelmap::ReduceNetworkType::temporalrn;
    c.accumulation_buffer = true;
    c.ms_rows = rows;
    c.ms_cols = cols;
    return accelmap::validate_config(c);
}

inline std::size_t out_extent(std::size_t in, std::size_t k, std::size_t pad, std::size_t stride) {
    return (in + 2 * pad - k) / stride + 1;
}

/// Integer-valued direct convolution. `x` is NCHW (n=1), `w` is KCRS with
/// c/g input channels; result is NKPQ. Accumulates in int64.
inline std::vector<std::int64_t> conv_nchw(const std::vector<float>& x, const std::vector<float>& w,
                                           const ConvLayerParams& p) {
    const std::size_t P = out_extent(p.h, p.r, p.pad_h, p.stride_h), Q = out_extent(p.w, p.s, p.pad_w, p.stride_w);
    const std::size_t cg = p.c / p.g, kg = p.k / p.g;
    std::vector<std::int64_t> y(p.k * P * Q, 0);
    for (std::size_t k = 0; k < p.k; ++k) {
        const std::size_t group = k / kg;
        for (std::size_t oy = 0; oy < P; ++oy)
            for (std::size_t ox = 0; ox < Q; ++ox) {
                std::int64_t acc = 0;
                for (std::size_t c = 0; c < cg; ++c)
                    for (std::size_t r = 0; r < p.r; ++r)
                        for (std::size_t s = 0; s < p.s; ++s) {
                            const long iy = static_cast<long>(oy * p.stride_h + r) - static_cast<long>(p.pad_h);
                            const long ix = static_cast<long>(ox * p.stride_w + s) - static_cast<long>(p.pad_w);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(p.h) || ix >= static_cast<long>(p.w)) continue;
                            const float xv = x[((group * cg + c) * p.h + static_cast<std::size_t>(iy)) * p.w +
                                               static_cast<std::size_t>(ix)];
                            const float wv = w[((k * cg + c) * p.r + r) * p.s + s];
                            acc += static_cast<std::int64_t>(xv) * static_cast<std::int64_t>(wv);
                        }
                y[(k * P + oy) * Q + ox] = acc;
            }
    }
    return y;
}

/// Integer GEMM, row-major.
inline std::vector<std::int64_t> gemm(const std::vector<float>& a, const std::vector<float>& b, std::size_t m,
                                      std::size_t k, std::size_t n) {
    std::vector<std::int64_t> c(m * n, 0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            std::int64_t acc = 0;
            for (std::size_t t = 0; t < k; ++t)
                acc += static_cast<std::int64_t>(a[i * k + t]) * static_cast<std::int64_t>(b[t * n + j]);
            c[i * n + j] = acc;
        }
    return c;
}

inline std::vector<std::int64_t> as_int(std::span<const float> v) {
    std::vector<std::int64_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<std::int64_t>(v[i]);
    return out;
}

/// NHWC (n=1) -> NCHW copy.
inline std::vector<float> nhwc_to_nchw(const std::vector<float>& x, std::size_t h, std::size_t w, std::size_t c) {
    std::vector<float> out(x.size());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
            for (std::size_t ch = 0; ch < c; ++ch) out[(ch * h + y) * w + xx] = x[(y * w + xx) * c + ch];
    return out;
}

/// RSCK -> KCRS copy.
inline std::vector<float> rsck_to_kcrs(const std::vector<float>& w, std::size_t r, std::size_t s, std::size_t c,
                                       std::size_t k) {
    std::vector<float> out(w.size());
    for (std::size_t a = 0; a < r; ++a)
        for (std::size_t b = 0; b < s; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t f = 0; f < k; ++f) out[((f * c + ch) * r + a) * s + b] = w[((a * s + b) * c + ch) * k + f];
    return out;
}

/// Random integers in [lo, hi] with a fraction of exact zeros.
inline std::vector<float> ints(std::mt19937_64& rng, std::size_t n, int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(d(rng));
    return v;
}

/// Every tile vector with 1 <= t_i <= bound_i (divisors only when asked),
/// t_n fixed to 1, and product <= budget, in lexicographic order.
inline std::vector<std::vector<std::size_t>> brute_space(const std::vector<std::size_t>& bounds, std::size_t fixed_axis,
                                                         bool divisors_only, std::uint64_t budget) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> cur(bounds.size(), 1);
    auto rec = [&](auto&& self, std::size_t axis, std::uint64_t product) -> void {
        if (axis == bounds.size()) {
            out.push_back(cur);
            return;
        }
        const std::size_t top = axis == fixed_axis ? 1 : bounds[axis];
        for (std::size_t v = 1; v <= top; ++v) {
            if (divisors_only && bounds[axis] % v != 0) continue;
            if (product * v > budget) continue;
            cur[axis] = v;
            self(self, axis + 1, product * v);
        }
    };
    rec(rec, 0, 1);
    return out;
}

inline std::uint64_t cdiv(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

inline std::uint32_t log2_ceil(std::uint64_t x) {
    std::uint32_t l = 0;
    while ((std::uint64_t{1} << l) < x) ++l;
    return l;
}

/// Closed-form flexible-fabric cycles for a conv, evaluated from scratch.
inline std::uint64_t flex_conv_cycles(const ConvLayerParams& p, const std::vector<std::size_t>& t, std::uint64_t ms,
                                      std::uint64_t dn, std::uint64_t rn, bool accbuf) {
    const std::size_t tr = t[0], ts = t[1], tc = t[2], tk = t[3], tg = t[4], tx = t[6], ty = t[7];
    const std::size_t P = out_extent(p.h, p.r, p.pad_h, p.stride_h), Q = out_extent(p.w, p.s, p.pad_w, p.stride_w);
    const std::uint64_t red_steps = cdiv(p.r, tr) * cdiv(p.s, ts) * cdiv(p.c / p.g, tc);
    const std::uint64_t iters = red_steps * cdiv(p.k / p.g, tk) * cdiv(p.g, tg) * cdiv(P, tx) * cdiv(Q, ty);
    const std::uint64_t delivered = std::uint64_t{tr} * ts * tc * tk * tg +
                                    std::uint64_t{tg} * tc * ((tx - 1) * p.stride_h + tr) * ((ty - 1) * p.stride_w + ts);
    const std::uint64_t outs = std::uint64_t{tk} * tg * tx * ty;
    const std::uint64_t per = cdiv(delivered, dn) + 1 + log2_ceil(ms) + cdiv(outs, rn);
    const std::uint64_t extra = accbuf ? 0 : cdiv(2 * outs, rn) - cdiv(outs, rn);
    return iters * per + (iters - iters / red_steps) * extra;
}

/// Flexible-fabric cycles for a dense layer; tiles are (t_s, t_n, t_k).
inline std::uint64_t flex_fc_cycles(std::size_t in, std::size_t out, const std::vector<std::size_t>& t, std::uint64_t ms,
                                    std::uint64_t dn, std::uint64_t rn, bool accbuf) {
    const std::size_t ts = t[0], tk = t[2];
    const std::uint64_t red_steps = cdiv(in, tk);
    const std::uint64_t iters = cdiv(out, ts) * red_steps;
    const std::uint64_t per = cdiv(std::uint64_t{ts} * tk + tk, dn) + 1 + log2_ceil(ms) + cdiv(ts, rn);
    const std::uint64_t extra = accbuf ? 0 : cdiv(2 * ts, rn) - cdiv(ts, rn);
    return iters * per + (iters - iters / red_steps) * extra;
}

/// Partial sums: every output element is produced once per reduction step.
inline std::uint64_t conv_psums(const ConvLayerParams& p, const std::vector<std::size_t>& t) {
    const std::size_t P = out_extent(p.h, p.r, p.pad_h, p.stride_h), Q = out_extent(p.w, p.s, p.pad_w, p.stride_w);
    return std::uint64_t{p.k} * P * Q * cdiv(p.r, t[0]) * cdiv(p.s, t[1]) * cdiv(p.c / p.g, t[2]);
}

inline std::uint64_t fc_psums(std::size_t in, std::size_t out, const std::vector<std::size_t>& t) {
    return std::uint64_t{out} * cdiv(in, t[2]);
}

/// JSON text of a one-layer integer-mode conv model.
inline std::string conv_model_json(const ConvLayerParams& p, bool nhwc, std::uint64_t seed) {
    std::ostringstream s;
    s << R"({"name":"one","seed":)" << seed << R"(,"value_mode":"integer","layers":[{"id":"c","op":"conv2d",)"
      << R"("layout":")" << (nhwc ? "NHWC" : "NCHW") << R"(","kernel_layout":")" << (nhwc ? "RSCK" : "KCRS") << '"'
      << ",\"r\":" << p.r << ",\"s\":" << p.s << ",\"c\":" << p.c << ",\"k\":" << p.k << ",\"g\":" << p.g
      << ",\"h\":" << p.h << ",\"w\":" << p.w << ",\"pad_h\":" << p.pad_h << ",\"pad_w\":" << p.pad_w
      << ",\"stride_h\":" << p.stride_h << ",\"stride_w\":" << p.stride_w << "}]}";
    return s.str();
}

/// JSON text of a one-layer dense model with layer id "fc".
inline std::string dense_model_json(std::size_t in, std::size_t out, std::uint64_t seed) {
    std::ostringstream s;
    s << R"({"name":"d","seed":)" << seed << R"(,"layers":[{"id":"fc","op":"dense","in_features":)" << in
      << R"(,"out_features":)" << out << "}]}";
    return s.str();
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

inline accelmap::Layer dense_layer(std::size_t in, std::size_t out) {
    accelmap::Layer layer;
    layer.id = "fc";
    layer.kind = accelmap::OpKind::dense;
    layer.params = accelmap::FcLayerParams{in, out, 1};
    layer.input_shape = accelmap::Shape{{1, in}, accelmap::Layout::matrix};
    layer.output_shape = accelmap::Shape{{1, out}, accelmap::Layout::matrix};
    return layer;
}

inline accelmap::Layer conv_layer(const ConvLayerParams& params) {
    accelmap::Layer layer;
    layer.id = "conv";
    layer.kind = accelmap::OpKind::conv2d;
    layer.params = params;
    auto& p = layer.conv();
    p.p = out_extent(p.h, p.r, p.pad_h, p.stride_h);
    p.q = out_extent(p.w, p.s, p.pad_w, p.stride_w);
    layer.input_shape = accelmap::Shape{{1, p.c, p.h, p.w}, accelmap::Layout::nchw};
    layer.output_shape = accelmap::Shape{{1, p.k, p.p, p.q}, accelmap::Layout::nchw};
    return layer;
}

/// A random small convolution layer with inferred output extents.
inline accelmap::Layer random_conv(std::mt19937_64& rng, std::size_t max_dim = 16) {
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    accelmap::ConvLayerParams p;
    static constexpr std::size_t kGroups[] = {1, 2, 4};
    p.g = kGroups[pick(0, 2)];
    p.c = p.g * pick(1, std::max<std::size_t>(1, 8 / p.g));
    p.k = p.g * pick(1, std::max<std::size_t>(1, 8 / p.g));
    p.r = pick(1, 4);
    p.s = pick(1, 4);
    p.pad_h = pick(0, 1);
    p.pad_w = pick(0, 1);
    p.stride_h = pick(1, 2);
    p.stride_w = pick(1, 2);
    p.h = pick(std::max<std::size_t>(p.r, 2), max_dim);
    p.w = pick(std::max<std::size_t>(p.s, 2), max_dim);
    return conv_layer(p);
}

/// Random mapping drawn uniformly from a layer's full-range space.
inline accelmap::Mapping random_mapping(std::mt19937_64& rng, const accelmap::Layer& layer,
                                        const accelmap::ValidatedConfig& cfg) {
    const auto space = accelmap::enumerate_space(layer, cfg, accelmap::SpacePolicy::full_range);
    return space.at(std::uniform_int_distribution<std::uint64_t>(0, space.size() - 1)(rng));
}

/// The 1x2x10x10 input, 2 filters of 3x3 example layer.
inline ConvLayerParams example_conv_params() {
    ConvLayerParams p;
    p.c = 2;
    p.k = 2;
    p.r = p.s = 3;
    p.h = p.w = 10;
    return p;
}

}  // namespace oracle

#include "accelmap/tensorops.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <limits>
#include <vector>

#include "accelmap/error.hpp"

namespace accelmap {

namespace {

void require_layout(const Tensor& t, Layout expected, const char* what) {
    if (t.layout() != expected) {
        throw ShapeError(std::string(what) + ": tensor tagged " + std::string(to_string(t.layout())) + ", expected " +
                         std::string(to_string(expected)));
    }
}

// Source axis for each destination axis of a 4-D permutation.
struct Permutation {
    std::array<std::size_t, 4> source_axis;
};

std::optional<Permutation> permutation_for(Layout from, Layout to) {
    // NCHW -> NHWC reads (n, h, w, c) = (0, 2, 3, 1); the inverse is (0, 3, 1, 2).
    // KCRS -> RSCK is (2, 3, 1, 0), and its own inverse is (3, 2, 0, 1).
    if ((from == Layout::nchw && to == Layout::nhwc) || (from == Layout::nkpq && to == Layout::npqk)) {
        return Permutation{{0, 2, 3, 1}};
    }
    if ((from == Layout::nhwc && to == Layout::nchw) || (from == Layout::npqk && to == Layout::nkpq)) {
        return Permutation{{0, 3, 1, 2}};
    }
    if (from == Layout::kcrs && to == Layout::rsck) return Permutation{{2, 3, 1, 0}};
    if (from == Layout::rsck && to == Layout::kcrs) return Permutation{{3, 2, 0, 1}};
    return std::nullopt;
}

}  // namespace

Tensor transpose(const Tensor& t, Layout from, Layout to) {
    if (t.layout() != from) {
        throw ShapeError("transpose: tensor tagged " + std::string(to_string(t.layout())) + " but source tag is " +
                         std::string(to_string(from)));
    }
    const auto perm = permutation_for(from, to);
    if (!perm) {
        throw ShapeError("transpose: unsupported pair " + std::string(to_string(from)) + " -> " +
                         std::string(to_string(to)));
    }
    const Dims& src = t.dims();
    Dims dst(4);
    for (std::size_t i = 0; i < 4; ++i) dst[i] = src[perm->source_axis[i]];
    Tensor out(dst, to);

    // Stride of each destination axis inside the source buffer.
    const std::array<std::size_t, 4> src_stride = {src[1] * src[2] * src[3], src[2] * src[3], src[3], 1};
    std::array<std::size_t, 4> step{};
    for (std::size_t i = 0; i < 4; ++i) step[i] = src_stride[perm->source_axis[i]];

    const float* in = t.data().data();
    float* o = out.data().data();
    for (std::size_t a = 0; a < dst[0]; ++a)
        for (std::size_t b = 0; b < dst[1]; ++b)
            for (std::size_t c = 0; c < dst[2]; ++c) {
                const std::size_t base = a * step[0] + b * step[1] + c * step[2];
                for (std::size_t d = 0; d < dst[3]; ++d) *o++ = in[base + d * step[3]];
            }
    return out;
}

Tensor im2col(const Tensor& input, const ConvLayerParams& p, std::size_t group) {
    if (group >= p.g) throw ShapeError("im2col: group index out of range");
    const Shape expected = conv_input_shape(p, input.layout());
    if (input.layout() != Layout::nchw && input.layout() != Layout::nhwc) {
        throw ShapeError("im2col: input must be NCHW or NHWC");
    }
    if (input.dims() != expected.dims) {
        throw ShapeError("im2col: input " + format_dims(input.dims()) + " does not match layer input " +
                         format_dims(expected.dims));
    }
    if (p.p == 0 || p.q == 0) throw ShapeError("im2col: output extents not inferred");
    const std::size_t cg = p.c_per_group();
    const std::size_t c0 = group * cg;
    const bool nchw = input.layout() == Layout::nchw;
    const std::size_t taps = cg * p.r * p.s;
    const std::size_t pixels = p.p * p.q;
    Tensor out = nchw ? Tensor::matrix(taps, pixels) : Tensor::matrix(pixels, taps);

    for (std::size_t y = 0; y < p.p; ++y)
        for (std::size_t x = 0; x < p.q; ++x) {
            const std::size_t pixel = y * p.q + x;
            for (std::size_t r = 0; r < p.r; ++r) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(y * p.stride_h + r) - static_cast<std::ptrdiff_t>(p.pad_h);
                for (std::size_t s = 0; s < p.s; ++s) {
                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(x * p.stride_w + s) - static_cast<std::ptrdiff_t>(p.pad_w);
                    const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(p.h) &&
                                        iw < static_cast<std::ptrdiff_t>(p.w);
                    for (std::size_t c = 0; c < cg; ++c) {
                        float v = 0.0f;
                        if (inside) {
                            v = nchw ? input.at(0, c0 + c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw))
                                     : input.at(0, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw), c0 + c);
                        }
                        if (nchw) {
                            out.at((c * p.r + r) * p.s + s, pixel) = v;
                        } else {
                            out.at(pixel, (r * p.s + s) * cg + c) = v;
                        }
                    }
                }
            }
        }
    return out;
}

Tensor kernel_matrix(const Tensor& kernel, const ConvLayerParams& p, std::size_t group) {
    if (group >= p.g) throw ShapeError("kernel_matrix: group index out of range");
    const Dims expected = kernel_dims(p, kernel.layout());
    if (kernel.dims() != expected) {
        throw ShapeError("kernel_matrix: kernel " + format_dims(kernel.dims()) + " does not match " +
                         format_dims(expected));
    }
    const std::size_t cg = p.c_per_group();
    const std::size_t kg = p.k_per_group();
    const std::size_t k0 = group * kg;
    const std::size_t taps = cg * p.r * p.s;
    if (kernel.layout() == Layout::kcrs) {
        Tensor out = Tensor::matrix(kg, taps);
        for (std::size_t k = 0; k < kg; ++k)
            for (std::size_t c = 0; c < cg; ++c)
                for (std::size_t r = 0; r < p.r; ++r)
                    for (std::size_t s = 0; s < p.s; ++s)
                        out.at(k, (c * p.r + r) * p.s + s) = kernel.at(k0 + k, c, r, s);
        return out;
    }
    Tensor out = Tensor::matrix(taps, kg);
    for (std::size_t r = 0; r < p.r; ++r)
        for (std::size_t s = 0; s < p.s; ++s)
            for (std::size_t c = 0; c < cg; ++c)
                for (std::size_t k = 0; k < kg; ++k)
                    out.at((r * p.s + s) * cg + c, k) = kernel.at(r, s, c, k0 + k);
    return out;
}

void scatter_group_output(const Tensor& product, const ConvLayerParams& p, std::size_t group, Tensor& output) {
    const std::size_t kg = p.k_per_group();
    const std::size_t k0 = group * kg;
    const std::size_t pixels = p.p * p.q;
    if (output.layout() == Layout::nchw) {
        if (product.dims() != Dims{kg, pixels}) throw ShapeError("scatter_group_output: product shape mismatch");
        for (std::size_t k = 0; k < kg; ++k)
            std::copy_n(&product.data()[k * pixels], pixels, &output.data()[(k0 + k) * pixels]);
    } else if (output.layout() == Layout::nhwc) {
        if (product.dims() != Dims{pixels, kg}) throw ShapeError("scatter_group_output: product shape mismatch");
        for (std::size_t px = 0; px < pixels; ++px)
            std::copy_n(&product.data()[px * kg], kg, &output.data()[px * p.k + k0]);
    } else {
        throw ShapeError("scatter_group_output: output must be NCHW or NHWC");
    }
}

Tensor gemm_ref(const Tensor& a, const Tensor& b) {
    require_layout(a, Layout::matrix, "gemm_ref lhs");
    require_layout(b, Layout::matrix, "gemm_ref rhs");
    if (a.cols() != b.rows()) {
        throw ShapeError("gemm_ref: inner dimensions differ, " + format_dims(a.dims()) + " x " + format_dims(b.dims()));
    }
    Tensor c = Tensor::matrix(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) sum += static_cast<double>(a.at(i, k)) * b.at(k, j);
            c.at(i, j) = static_cast<float>(sum);
        }
    return c;
}

Tensor conv2d_ref(const Tensor& input, const Tensor& kernel, const ConvLayerParams& p) {
    const bool nchw = input.layout() == Layout::nchw;
    if (!((nchw && kernel.layout() == Layout::kcrs) ||
          (input.layout() == Layout::nhwc && kernel.layout() == Layout::rsck))) {
        throw ShapeError("conv2d_ref: layout " + std::string(to_string(input.layout())) + " does not pair with kernel " +
                         std::string(to_string(kernel.layout())));
    }
    if (p.g == 0 || p.c % p.g || p.k % p.g) throw ShapeError("conv2d_ref: group count does not divide channels");
    ConvLayerParams q = p;
    std::tie(q.p, q.q) = conv_out_dims(p);
    if (input.dims() != conv_input_shape(q, input.layout()).dims) {
        throw ShapeError("conv2d_ref: input " + format_dims(input.dims()) + " does not match layer");
    }
    if (kernel.dims() != kernel_dims(q, kernel.layout())) {
        throw ShapeError("conv2d_ref: kernel " + format_dims(kernel.dims()) + " does not match layer");
    }
    Tensor out(conv_output_shape(q, input.layout()).dims, input.layout());
    const std::size_t cg = q.c_per_group(), kg = q.k_per_group();
    for (std::size_t g = 0; g < q.g; ++g)
        for (std::size_t k = 0; k < kg; ++k)
            for (std::size_t y = 0; y < q.p; ++y)
                for (std::size_t x = 0; x < q.q; ++x) {
                    double sum = 0.0;
                    for (std::size_t c = 0; c < cg; ++c)
                        for (std::size_t r = 0; r < q.r; ++r)
                            for (std::size_t s = 0; s < q.s; ++s) {
                                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(y * q.stride_h + r) -
                                                          static_cast<std::ptrdiff_t>(q.pad_h);
                                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(x * q.stride_w + s) -
                                                          static_cast<std::ptrdiff_t>(q.pad_w);
                                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(q.h) ||
                                    iw >= static_cast<std::ptrdiff_t>(q.w)) {
                                    continue;
                                }
                                const auto uh = static_cast<std::size_t>(ih), uw = static_cast<std::size_t>(iw);
                                const float xv = nchw ? input.at(0, g * cg + c, uh, uw) : input.at(0, uh, uw, g * cg + c);
                                const float wv = nchw ? kernel.at(g * kg + k, c, r, s) : kernel.at(r, s, c, g * kg + k);
                                sum += static_cast<double>(xv) * wv;
                            }
                    if (nchw) out.at(0, g * kg + k, y, x) = static_cast<float>(sum);
                    else out.at(0, y, x, g * kg + k) = static_cast<float>(sum);
                }
    return out;
}

Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor maxpool2d(const Tensor& t, const PoolParams& pp) {
    if (t.layout() != Layout::nchw && t.layout() != Layout::nhwc) throw ShapeError("maxpool2d: needs an NCHW or NHWC input");
    const bool nchw = t.layout() == Layout::nchw;
    const std::size_t c = nchw ? t.dim(1) : t.dim(3);
    const std::size_t h = nchw ? t.dim(2) : t.dim(1);
    const std::size_t w = nchw ? t.dim(3) : t.dim(2);
    if (pp.pool < 1 || pp.stride < 1 || h < pp.pool || w < pp.pool) throw ShapeError("maxpool2d: window does not fit input");
    const std::size_t oh = (h - pp.pool) / pp.stride + 1, ow = (w - pp.pool) / pp.stride + 1;
    Tensor out(nchw ? Dims{1, c, oh, ow} : Dims{1, oh, ow, c}, t.layout());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                float best = -std::numeric_limits<float>::infinity();
                for (std::size_t dy = 0; dy < pp.pool; ++dy)
                    for (std::size_t dx = 0; dx < pp.pool; ++dx) {
                        const std::size_t iy = y * pp.stride + dy, ix = x * pp.stride + dx;
                        best = std::max(best, nchw ? t.at(0, ch, iy, ix) : t.at(0, iy, ix, ch));
                    }
                (nchw ? out.at(0, ch, y, x) : out.at(0, y, x, ch)) = best;
            }
    return out;
}

Tensor bias_add(const Tensor& t, std::span<const float> bias) {
    Tensor out = t;
    if (t.layout() == Layout::matrix) {
        if (bias.size() != t.cols()) throw ShapeError("bias_add: bias length does not match features");
        for (std::size_t i = 0; i < t.rows(); ++i)
            for (std::size_t j = 0; j < t.cols(); ++j) out.at(i, j) += bias[j];
        return out;
    }
    const bool nchw = t.layout() == Layout::nchw || t.layout() == Layout::nkpq;
    const std::size_t c = nchw ? t.dim(1) : t.dim(3);
    if (bias.size() != c) throw ShapeError("bias_add: bias length does not match channels");
    const std::size_t plane = nchw ? t.dim(2) * t.dim(3) : 1;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[nchw ? (i / plane) % c : i % c];
    return out;
}

Tensor flatten(const Tensor& t) { return t.reinterpret({1, t.size()}, Layout::matrix); }

Tensor dense_ref(const Tensor& x, const Tensor& weights) {
    if (x.layout() != Layout::matrix || x.rows() != 1) throw ShapeError("dense_ref: input must be a 1 x in row vector");
    return gemm_ref(x, weights);
}

Tensor fallback_op(const Layer& layer, const Tensor& input, std::span<const float> aux) {
    switch (layer.kind) {
        case OpKind::relu:
            return relu(input);
        case OpKind::maxpool2d:
            return maxpool2d(input, layer.pool());
        case OpKind::bias_add:
            return bias_add(input, aux);
        case OpKind::flatten:
            return flatten(input);
        case OpKind::conv2d:
        case OpKind::dense:
            break;
    }
    throw ShapeError("fallback_op: layer '" + layer.id + "' of kind " + std::string(to_string(layer.kind)) +
                     " has no fallback kernel");
}

}  // namespace accelmap

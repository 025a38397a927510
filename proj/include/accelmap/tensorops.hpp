#pragma once

#include <cstddef>
#include <span>

#include "accelmap/graph.hpp"
#include "accelmap/tensor.hpp"

namespace accelmap {

/// Permutes a 4-D tensor between paired layouts: NCHW<->NHWC, KCRS<->RSCK,
/// NPQK<->NKPQ. Throws ShapeError on a tag mismatch or an unsupported pair.
Tensor transpose(const Tensor& t, Layout from, Layout to);

/// Patch matrix of one group's receptive fields.
///   NCHW input: (C_g*R*S) x (P*Q), one column per output pixel, rows in (c,r,s) order.
///   NHWC input: (P*Q) x (R*S*C_g), one row per output pixel, cols in (r,s,c) order.
/// Out-of-range taps read as zero. `params.p/q` must be inferred.
Tensor im2col(const Tensor& input, const ConvLayerParams& params, std::size_t group = 0);

/// One group's kernel as a GEMM operand matching im2col's orientation:
///   KCRS: K_g x (C_g*R*S), RSCK: (R*S*C_g) x K_g.
Tensor kernel_matrix(const Tensor& kernel, const ConvLayerParams& params, std::size_t group = 0);

/// Scatters one group's GEMM product into the 4-D output (NCHW from a
/// K_g x PQ product, NHWC from a PQ x K_g product).
void scatter_group_output(const Tensor& product, const ConvLayerParams& params, std::size_t group, Tensor& output);

/// c[i][j] = sum_k a[i][k] * b[k][j], accumulated in double.
Tensor gemm_ref(const Tensor& a, const Tensor& b);

/// Direct convolution with logical zero padding. Layout pairs NCHW/KCRS or
/// NHWC/RSCK; the output carries the input's layout.
Tensor conv2d_ref(const Tensor& input, const Tensor& kernel, const ConvLayerParams& params);

Tensor relu(const Tensor& t);
Tensor maxpool2d(const Tensor& t, const PoolParams& params);
/// Adds bias[channel] (4-D) or bias[feature] (matrix).
Tensor bias_add(const Tensor& t, std::span<const float> bias);
Tensor flatten(const Tensor& t);
/// x (1 x in) times W (in x out).
Tensor dense_ref(const Tensor& x, const Tensor& weights);

/// Runs a non-conv/dense layer. `aux` carries the bias vector for bias_add.
Tensor fallback_op(const Layer& layer, const Tensor& input, std::span<const float> aux = {});

}  // namespace accelmap

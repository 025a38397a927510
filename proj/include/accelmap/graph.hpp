#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "accelmap/tensor.hpp"

namespace accelmap {

enum class OpKind { conv2d, dense, relu, maxpool2d, bias_add, flatten };

std::string_view to_string(OpKind kind);
OpKind parse_op_kind(std::string_view text);

/// Convolution hyper-parameters. Output extents `p`, `q` are filled by shape
/// inference; only a single input image (n == 1) is supported.
struct ConvLayerParams {
    std::size_t n = 1;
    std::size_t r = 1, s = 1;
    std::size_t c = 1, k = 1, g = 1;
    std::size_t h = 1, w = 1;
    std::size_t p = 0, q = 0;
    std::size_t pad_h = 0, pad_w = 0;
    std::size_t stride_h = 1, stride_w = 1;

    std::size_t c_per_group() const noexcept { return c / g; }
    std::size_t k_per_group() const noexcept { return k / g; }
    /// Dense multiply-accumulate count, padding positions included.
    std::uint64_t macs() const noexcept {
        return std::uint64_t{g} * k_per_group() * p * q * r * s * c_per_group();
    }

    bool operator==(const ConvLayerParams&) const = default;
};

struct FcLayerParams {
    std::size_t in_features = 1;
    std::size_t out_features = 1;
    std::size_t batch = 1;

    std::uint64_t macs() const noexcept { return std::uint64_t{in_features} * out_features * batch; }
    bool operator==(const FcLayerParams&) const = default;
};

struct PoolParams {
    std::size_t pool = 2;
    std::size_t stride = 2;
    bool operator==(const PoolParams&) const = default;
};

using LayerParams = std::variant<std::monostate, ConvLayerParams, FcLayerParams, PoolParams>;

/// Activation shape as (dims, layout). Four-dimensional activations use NCHW
/// or NHWC; flattened activations use `matrix` with dims (1, features).
struct Shape {
    Dims dims;
    Layout layout = Layout::matrix;
    bool operator==(const Shape&) const = default;
};

std::string format_shape(const Shape& shape);

struct Layer {
    std::string id;
    OpKind kind = OpKind::relu;
    LayerParams params;
    Layout layout = Layout::nchw;         // conv2d only
    Layout kernel_layout = Layout::kcrs;  // conv2d only
    std::optional<std::string> weights_path;
    std::optional<Shape> input_shape;
    std::optional<Shape> output_shape;

    const ConvLayerParams& conv() const { return std::get<ConvLayerParams>(params); }
    const FcLayerParams& fc() const { return std::get<FcLayerParams>(params); }
    const PoolParams& pool() const { return std::get<PoolParams>(params); }
    ConvLayerParams& conv() { return std::get<ConvLayerParams>(params); }
    FcLayerParams& fc() { return std::get<FcLayerParams>(params); }

    bool offloadable() const noexcept { return kind == OpKind::conv2d || kind == OpKind::dense; }

    bool operator==(const Layer&) const = default;
};

struct Model {
    std::string name;
    std::uint64_t seed = 0;
    ValueMode value_mode = ValueMode::integer;
    std::optional<Shape> input;
    std::vector<Layer> layers;
    std::string base_dir;  // resolves relative weight blob paths; not serialized

    const Layer* find(std::string_view id) const;

    bool operator==(const Model& other) const {
        return name == other.name && seed == other.seed && value_mode == other.value_mode &&
               input == other.input && layers == other.layers;
    }
};

Model parse_model(std::string_view text, std::string base_dir = {});
Model load_model(const std::string& path);
std::string serialize_model(const Model& model);

/// Output rows/cols of a convolution; throws ShapeError when the kernel does
/// not fit the padded input.
std::pair<std::size_t, std::size_t> conv_out_dims(const ConvLayerParams& params);

/// Fills p/q and every layer's input/output shape. Throws ModelError naming
/// both shapes when consecutive layers do not compose.
Model infer_shapes(Model model);

/// Checks the standalone invariants of a convolution (batch, extents, groups).
void check_conv_params(const ConvLayerParams& params, std::string_view layer_id);

/// Shape of a kernel tensor in the given kernel layout.
Dims kernel_dims(const ConvLayerParams& params, Layout kernel_layout);
Shape conv_input_shape(const ConvLayerParams& params, Layout layout);
Shape conv_output_shape(const ConvLayerParams& params, Layout layout);

}  // namespace accelmap

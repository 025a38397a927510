#include "accelmap/graph.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "accelmap/error.hpp"

namespace accelmap {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kOpNames = {"conv2d", "dense", "relu", "maxpool2d", "bias_add", "flatten"};

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    for (const auto& item : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
            throw ModelError(where + ": unknown key '" + item.key() + "'");
        }
    }
}

std::size_t read_extent(const json& obj, const char* key, std::optional<std::size_t> fallback, const std::string& where) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        throw ModelError(where + ": missing required key '" + key + "'");
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ModelError(where + ": '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

std::string read_string(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ModelError(where + ": missing required key '" + key + "'");
    if (!obj.at(key).is_string()) throw ModelError(where + ": '" + key + "' must be a string");
    return obj.at(key).get<std::string>();
}

Layout read_activation_layout(const json& obj, const char* key, const std::string& where) {
    const std::string text = read_string(obj, key, where);
    if (text == "NCHW") return Layout::nchw;
    if (text == "NHWC") return Layout::nhwc;
    throw ModelError(where + ": layout must be NCHW or NHWC, got '" + text + "'");
}

Layer parse_layer(const json& obj, std::size_t index) {
    std::string where = "layers[" + std::to_string(index) + "]";
    if (!obj.is_object()) throw ModelError(where + ": expected an object");
    Layer layer;
    layer.id = read_string(obj, "id", where);
    where += " ('" + layer.id + "')";
    try {
        layer.kind = parse_op_kind(read_string(obj, "op", where));
    } catch (const ModelError& e) {
        throw ModelError(where + ": " + e.what());
    }
    switch (layer.kind) {
        case OpKind::conv2d: {
            reject_unknown_keys(obj,
                                {"id", "op", "layout", "kernel_layout", "weights", "r", "s", "c", "k", "g", "h", "w",
                                 "pad_h", "pad_w", "stride_h", "stride_w"},
                                where);
            layer.layout = read_activation_layout(obj, "layout", where);
            const std::string kl = read_string(obj, "kernel_layout", where);
            if (kl == "KCRS") layer.kernel_layout = Layout::kcrs;
            else if (kl == "RSCK") layer.kernel_layout = Layout::rsck;
            else throw ModelError(where + ": kernel_layout must be KCRS or RSCK, got '" + kl + "'");
            const bool paired = (layer.layout == Layout::nchw && layer.kernel_layout == Layout::kcrs) ||
                                (layer.layout == Layout::nhwc && layer.kernel_layout == Layout::rsck);
            if (!paired) {
                throw ModelError(where + ": layout " + std::string(to_string(layer.layout)) +
                                 " does not pair with kernel_layout " + kl + " (NCHW/KCRS or NHWC/RSCK)");
            }
            ConvLayerParams p;
            p.r = read_extent(obj, "r", std::nullopt, where);
            p.s = read_extent(obj, "s", std::nullopt, where);
            p.c = read_extent(obj, "c", std::nullopt, where);
            p.k = read_extent(obj, "k", std::nullopt, where);
            p.g = read_extent(obj, "g", 1, where);
            p.h = read_extent(obj, "h", std::nullopt, where);
            p.w = read_extent(obj, "w", std::nullopt, where);
            p.pad_h = read_extent(obj, "pad_h", 0, where);
            p.pad_w = read_extent(obj, "pad_w", 0, where);
            p.stride_h = read_extent(obj, "stride_h", 1, where);
            p.stride_w = read_extent(obj, "stride_w", 1, where);
            check_conv_params(p, layer.id);
            layer.params = p;
            break;
        }
        case OpKind::dense: {
            reject_unknown_keys(obj, {"id", "op", "weights", "in_features", "out_features"}, where);
            FcLayerParams p;
            p.in_features = read_extent(obj, "in_features", std::nullopt, where);
            p.out_features = read_extent(obj, "out_features", std::nullopt, where);
            if (p.in_features < 1 || p.out_features < 1) throw ModelError(where + ": dense features must be >= 1");
            layer.params = p;
            break;
        }
        case OpKind::maxpool2d: {
            reject_unknown_keys(obj, {"id", "op", "pool", "stride"}, where);
            PoolParams p;
            p.pool = read_extent(obj, "pool", std::nullopt, where);
            p.stride = read_extent(obj, "stride", p.pool, where);
            if (p.pool < 1 || p.stride < 1) throw ModelError(where + ": pool and stride must be >= 1");
            layer.params = p;
            break;
        }
        case OpKind::bias_add:
            reject_unknown_keys(obj, {"id", "op", "weights"}, where);
            break;
        case OpKind::relu:
        case OpKind::flatten:
            reject_unknown_keys(obj, {"id", "op"}, where);
            break;
    }
    if (obj.contains("weights")) {
        if (!obj.at("weights").is_string()) throw ModelError(where + ": 'weights' must be a path string");
        layer.weights_path = obj.at("weights").get<std::string>();
    }
    return layer;
}

Shape parse_input(const json& obj) {
    if (!obj.is_object()) throw ModelError("input: expected an object");
    reject_unknown_keys(obj, {"shape", "layout"}, "input");
    if (!obj.contains("shape") || !obj.at("shape").is_array()) throw ModelError("input: missing 'shape' array");
    Shape shape;
    for (const auto& v : obj.at("shape")) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 1) throw ModelError("input: extents must be >= 1");
        shape.dims.push_back(v.get<std::size_t>());
    }
    if (shape.dims.size() == 4) {
        shape.layout = obj.contains("layout") ? read_activation_layout(obj, "layout", "input") : Layout::nchw;
    } else if (shape.dims.size() == 2) {
        if (obj.contains("layout")) throw ModelError("input: layout applies to 4-D inputs only");
        shape.layout = Layout::matrix;
    } else {
        throw ModelError("input: shape must have 2 or 4 extents");
    }
    if (shape.dims[0] != 1) throw ModelError("input: batch extent must be 1");
    return shape;
}

json shape_to_json(const Shape& shape) {
    json out = json::object();
    out["shape"] = shape.dims;
    if (shape.layout != Layout::matrix) out["layout"] = std::string(to_string(shape.layout));
    return out;
}

Shape shape_mismatch_guard(const Layer& layer, const Shape& expected, const Shape& actual, const std::string& producer) {
    if (expected != actual) {
        throw ModelError("shape mismatch: layer '" + layer.id + "' expects input " + format_shape(expected) + " but " +
                         producer + " produces " + format_shape(actual));
    }
    return actual;
}

Shape output_of(const Layer& layer, const Shape& in) {
    switch (layer.kind) {
        case OpKind::conv2d:
            return conv_output_shape(layer.conv(), layer.layout);
        case OpKind::dense:
            return Shape{{1, layer.fc().out_features}, Layout::matrix};
        case OpKind::relu:
        case OpKind::bias_add:
            return in;
        case OpKind::flatten:
            return Shape{{1, element_count(in.dims)}, Layout::matrix};
        case OpKind::maxpool2d: {
            if (in.layout == Layout::matrix) {
                throw ModelError("layer '" + layer.id + "': maxpool2d needs a 4-D input, got " + format_shape(in));
            }
            const auto& pp = layer.pool();
            const bool nchw = in.layout == Layout::nchw;
            const std::size_t h = nchw ? in.dims[2] : in.dims[1];
            const std::size_t w = nchw ? in.dims[3] : in.dims[2];
            const std::size_t c = nchw ? in.dims[1] : in.dims[3];
            if (h < pp.pool || w < pp.pool) {
                throw ModelError("layer '" + layer.id + "': pool window " + std::to_string(pp.pool) +
                                 " exceeds input " + format_shape(in));
            }
            const std::size_t oh = (h - pp.pool) / pp.stride + 1;
            const std::size_t ow = (w - pp.pool) / pp.stride + 1;
            return nchw ? Shape{{1, c, oh, ow}, Layout::nchw} : Shape{{1, oh, ow, c}, Layout::nhwc};
        }
    }
    return in;
}

}  // namespace

std::string_view to_string(OpKind kind) { return kOpNames[static_cast<std::size_t>(kind)]; }

OpKind parse_op_kind(std::string_view text) {
    for (std::size_t i = 0; i < kOpNames.size(); ++i) {
        if (kOpNames[i] == text) return static_cast<OpKind>(i);
    }
    throw ModelError("unknown op kind '" + std::string(text) + "'");
}

std::string format_shape(const Shape& shape) {
    return format_dims(shape.dims) + " " + std::string(to_string(shape.layout));
}

const Layer* Model::find(std::string_view id) const {
    for (const auto& layer : layers) {
        if (layer.id == id) return &layer;
    }
    return nullptr;
}

void check_conv_params(const ConvLayerParams& p, std::string_view layer_id) {
    const std::string where = "layer '" + std::string(layer_id) + "'";
    if (p.n != 1) throw ModelError(where + ": batch n must be 1");
    for (auto [name, value] : {std::pair{"r", p.r}, {"s", p.s}, {"c", p.c}, {"k", p.k}, {"g", p.g}, {"h", p.h},
                               {"w", p.w}, {"stride_h", p.stride_h}, {"stride_w", p.stride_w}}) {
        if (value < 1) throw ModelError(where + ": '" + name + "' must be >= 1");
    }
    if (p.c % p.g != 0) throw ModelError(where + ": channels c=" + std::to_string(p.c) + " not divisible by groups g=" + std::to_string(p.g));
    if (p.k % p.g != 0) throw ModelError(where + ": filters k=" + std::to_string(p.k) + " not divisible by groups g=" + std::to_string(p.g));
}

std::pair<std::size_t, std::size_t> conv_out_dims(const ConvLayerParams& p) {
    if (p.stride_h < 1 || p.stride_w < 1) throw ShapeError("stride must be >= 1");
    if (p.h + 2 * p.pad_h < p.r || p.w + 2 * p.pad_w < p.s) {
        throw ShapeError("kernel " + std::to_string(p.r) + "x" + std::to_string(p.s) + " larger than padded input " +
                         std::to_string(p.h + 2 * p.pad_h) + "x" + std::to_string(p.w + 2 * p.pad_w));
    }
    return {(p.h + 2 * p.pad_h - p.r) / p.stride_h + 1, (p.w + 2 * p.pad_w - p.s) / p.stride_w + 1};
}

Dims kernel_dims(const ConvLayerParams& p, Layout kernel_layout) {
    if (kernel_layout == Layout::kcrs) return {p.k, p.c_per_group(), p.r, p.s};
    if (kernel_layout == Layout::rsck) return {p.r, p.s, p.c_per_group(), p.k};
    throw ShapeError("kernel layout must be KCRS or RSCK");
}

Shape conv_input_shape(const ConvLayerParams& p, Layout layout) {
    return layout == Layout::nhwc ? Shape{{p.n, p.h, p.w, p.c}, Layout::nhwc} : Shape{{p.n, p.c, p.h, p.w}, Layout::nchw};
}

Shape conv_output_shape(const ConvLayerParams& p, Layout layout) {
    return layout == Layout::nhwc ? Shape{{p.n, p.p, p.q, p.k}, Layout::nhwc} : Shape{{p.n, p.k, p.p, p.q}, Layout::nchw};
}

Model parse_model(std::string_view text, std::string base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ModelError(std::string("malformed model document: ") + e.what());
    }
    if (!doc.is_object()) throw ModelError("model document must be a JSON object");
    reject_unknown_keys(doc, {"name", "seed", "layers", "value_mode", "input"}, "model");
    Model model;
    model.base_dir = std::move(base_dir);
    model.name = read_string(doc, "name", "model");
    if (doc.contains("seed")) {
        if (!doc.at("seed").is_number_integer() || doc.at("seed").get<std::int64_t>() < 0) {
            throw ModelError("model: 'seed' must be a non-negative integer");
        }
        model.seed = doc.at("seed").get<std::uint64_t>();
    }
    if (doc.contains("value_mode")) {
        if (!doc.at("value_mode").is_string()) throw ModelError("model: 'value_mode' must be a string");
        model.value_mode = parse_value_mode(doc.at("value_mode").get<std::string>());
    }
    if (doc.contains("input")) model.input = parse_input(doc.at("input"));
    if (!doc.contains("layers") || !doc.at("layers").is_array()) throw ModelError("model: missing 'layers' array");
    std::set<std::string> ids;
    std::size_t index = 0;
    for (const auto& entry : doc.at("layers")) {
        Layer layer = parse_layer(entry, index++);
        if (!ids.insert(layer.id).second) throw ModelError("duplicate layer id '" + layer.id + "'");
        model.layers.push_back(std::move(layer));
    }
    return model;
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_model(buffer.str(), std::filesystem::path(path).parent_path().string());
}

std::string serialize_model(const Model& model) {
    json doc = json::object();
    doc["name"] = model.name;
    doc["seed"] = model.seed;
    doc["value_mode"] = std::string(to_string(model.value_mode));
    if (model.input) doc["input"] = shape_to_json(*model.input);
    json layers = json::array();
    for (const auto& layer : model.layers) {
        json obj = json::object();
        obj["id"] = layer.id;
        obj["op"] = std::string(to_string(layer.kind));
        if (layer.kind == OpKind::conv2d) {
            const auto& p = layer.conv();
            obj["layout"] = std::string(to_string(layer.layout));
            obj["kernel_layout"] = std::string(to_string(layer.kernel_layout));
            obj["r"] = p.r;
            obj["s"] = p.s;
            obj["c"] = p.c;
            obj["k"] = p.k;
            obj["g"] = p.g;
            obj["h"] = p.h;
            obj["w"] = p.w;
            obj["pad_h"] = p.pad_h;
            obj["pad_w"] = p.pad_w;
            obj["stride_h"] = p.stride_h;
            obj["stride_w"] = p.stride_w;
        } else if (layer.kind == OpKind::dense) {
            obj["in_features"] = layer.fc().in_features;
            obj["out_features"] = layer.fc().out_features;
        } else if (layer.kind == OpKind::maxpool2d) {
            obj["pool"] = layer.pool().pool;
            obj["stride"] = layer.pool().stride;
        }
        if (layer.weights_path) obj["weights"] = *layer.weights_path;
        layers.push_back(std::move(obj));
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2) + "\n";
}

Model infer_shapes(Model model) {
    std::optional<Shape> current = model.input;
    if (!current) {
        // Without a declared input, the first conv/dense defines it; only
        // shape-preserving layers may precede it.
        for (const auto& layer : model.layers) {
            if (layer.kind == OpKind::conv2d) {
                current = conv_input_shape(layer.conv(), layer.layout);
                break;
            }
            if (layer.kind == OpKind::dense) {
                current = Shape{{1, layer.fc().in_features}, Layout::matrix};
                break;
            }
            if (layer.kind != OpKind::relu && layer.kind != OpKind::bias_add) {
                throw ModelError("cannot infer the model input shape: layer '" + layer.id +
                                 "' changes shape before any conv2d/dense layer; declare 'input'");
            }
        }
    }
    if (!current) return model;

    std::string producer = "the model input";
    for (auto& layer : model.layers) {
        if (layer.kind == OpKind::conv2d) {
            auto& p = layer.conv();
            try {
                std::tie(p.p, p.q) = conv_out_dims(p);
            } catch (const ShapeError& e) {
                throw ModelError("layer '" + layer.id + "': " + e.what());
            }
            shape_mismatch_guard(layer, conv_input_shape(p, layer.layout), *current, producer);
        } else if (layer.kind == OpKind::dense) {
            shape_mismatch_guard(layer, Shape{{1, layer.fc().in_features}, Layout::matrix}, *current, producer);
        }
        layer.input_shape = *current;
        layer.output_shape = output_of(layer, *current);
        current = layer.output_shape;
        producer = "layer '" + layer.id + "'";
    }
    return model;
}

}  // namespace accelmap

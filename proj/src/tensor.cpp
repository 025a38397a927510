#include "accelmap/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "accelmap/error.hpp"

namespace accelmap {

namespace {

constexpr std::array<std::string_view, 7> kLayoutNames = {"NCHW", "NHWC", "KCRS", "RSCK",
                                                          "NPQK", "NKPQ", "MATRIX"};

}  // namespace

std::string_view to_string(Layout layout) { return kLayoutNames[static_cast<std::size_t>(layout)]; }

Layout parse_layout(std::string_view text) {
    for (std::size_t i = 0; i < kLayoutNames.size(); ++i) {
        if (kLayoutNames[i] == text) return static_cast<Layout>(i);
    }
    throw ShapeError("unknown layout tag '" + std::string(text) + "'");
}

std::size_t rank_of(Layout layout) { return layout == Layout::matrix ? 2 : 4; }

std::size_t element_count(const Dims& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string format_dims(const Dims& dims) {
    std::string out = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(dims[i]);
    }
    return out + ")";
}

Tensor::Tensor(Dims dims, Layout layout) : dims_(std::move(dims)), layout_(layout) {
    if (dims_.size() != rank_of(layout_)) {
        throw ShapeError("layout " + std::string(to_string(layout_)) + " needs " +
                         std::to_string(rank_of(layout_)) + " dims, got " + format_dims(dims_));
    }
    data_.assign(element_count(dims_), 0.0f);
}

Tensor::Tensor(Dims dims, Layout layout, std::vector<float> data)
    : dims_(std::move(dims)), layout_(layout), data_(std::move(data)) {
    if (dims_.size() != rank_of(layout_)) {
        throw ShapeError("layout " + std::string(to_string(layout_)) + " needs " +
                         std::to_string(rank_of(layout_)) + " dims, got " + format_dims(dims_));
    }
    if (element_count(dims_) != data_.size()) {
        throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements does not fill " +
                         format_dims(dims_));
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}, Layout::matrix); }

Tensor Tensor::reinterpret(Dims dims, Layout layout) const& {
    return Tensor(std::move(dims), layout, data_);
}

Tensor Tensor::reinterpret(Dims dims, Layout layout) && {
    return Tensor(std::move(dims), layout, std::move(data_));
}

std::string_view to_string(ValueMode mode) { return mode == ValueMode::integer ? "integer" : "real"; }

ValueMode parse_value_mode(std::string_view text) {
    if (text == "integer") return ValueMode::integer;
    if (text == "real") return ValueMode::real;
    throw ModelError("unknown value mode '" + std::string(text) + "' (expected integer|real)");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    // splitmix64 finalizer over the combined word
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_string(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void fill_values(std::span<float> out, ValueStream source, ValueMode mode, ValueRole role) {
    // Raw engine output only; std distributions are implementation-defined.
    std::mt19937_64 engine(mix_seed(source.seed, source.stream));
    for (float& v : out) {
        const std::uint64_t bits = engine();
        if (mode == ValueMode::integer) {
            v = role == ValueRole::weight ? static_cast<float>(static_cast<int>(bits % 3) - 1)
                                          : static_cast<float>(static_cast<int>(bits % 5) - 2);
        } else {
            const double unit = static_cast<double>(bits >> 11) * 0x1.0p-53;
            v = static_cast<float>(role == ValueRole::weight ? unit - 0.5 : 2.0 * unit - 1.0);
        }
    }
}

void prune_values(std::span<float> values, unsigned percent, std::uint64_t seed) {
    if (percent == 0 || values.empty()) return;
    const std::size_t zeros = (values.size() * std::min(percent, 100u) + 50) / 100;
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 engine(mix_seed(seed, 0x5eed));
    // Fisher-Yates on the raw engine, stopping once the zeroed prefix is drawn.
    for (std::size_t i = 0; i < zeros; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(engine() % (values.size() - i));
        std::swap(order[i], order[j]);
        values[order[i]] = 0.0f;
    }
}

std::vector<float> read_blob(const std::string& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor blob '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != expected_count * 4) {
        throw IoError("tensor blob '" + path + "' holds " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected_count * 4));
    }
    std::vector<float> values(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        const std::uint32_t word = std::uint32_t{bytes[4 * i]} | (std::uint32_t{bytes[4 * i + 1]} << 8) |
                                   (std::uint32_t{bytes[4 * i + 2]} << 16) |
                                   (std::uint32_t{bytes[4 * i + 3]} << 24);
        values[i] = std::bit_cast<float>(word);
    }
    return values;
}

void write_blob(const std::string& path, std::span<const float> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write tensor blob '" + path + "'");
    for (float v : values) {
        const auto word = std::bit_cast<std::uint32_t>(v);
        const char bytes[4] = {static_cast<char>(word & 0xff), static_cast<char>((word >> 8) & 0xff),
                               static_cast<char>((word >> 16) & 0xff), static_cast<char>((word >> 24) & 0xff)};
        out.write(bytes, 4);
    }
    if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace accelmap

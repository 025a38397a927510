#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace accelmap {

/// Dimension order of a tensor buffer. Four-dimensional tags name their axes
/// outermost first; `matrix` is a row-major rows x cols buffer.
enum class Layout { nchw, nhwc, kcrs, rsck, npqk, nkpq, matrix };

std::string_view to_string(Layout layout);
Layout parse_layout(std::string_view text);
std::size_t rank_of(Layout layout);

using Dims = std::vector<std::size_t>;

std::size_t element_count(const Dims& dims);
std::string format_dims(const Dims& dims);

/// Dense float tensor stored row-major in the order given by its layout tag.
class Tensor {
public:
    Tensor() = default;
    Tensor(Dims dims, Layout layout);
    Tensor(Dims dims, Layout layout, std::vector<float> data);

    static Tensor matrix(std::size_t rows, std::size_t cols);

    const Dims& dims() const noexcept { return dims_; }
    Layout layout() const noexcept { return layout_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    std::vector<float>& buffer() noexcept { return data_; }
    const std::vector<float>& buffer() const noexcept { return data_; }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    std::size_t offset(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept {
        return ((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d;
    }
    std::size_t offset(std::size_t row, std::size_t col) const noexcept { return row * dims_[1] + col; }

    float& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) noexcept {
        return data_[offset(a, b, c, d)];
    }
    float at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept {
        return data_[offset(a, b, c, d)];
    }
    float& at(std::size_t row, std::size_t col) noexcept { return data_[offset(row, col)]; }
    float at(std::size_t row, std::size_t col) const noexcept { return data_[offset(row, col)]; }

    std::size_t rows() const noexcept { return dims_[0]; }
    std::size_t cols() const noexcept { return dims_[1]; }

    /// Same buffer under a different tag or shape; element count must agree.
    Tensor reinterpret(Dims dims, Layout layout) const&;
    Tensor reinterpret(Dims dims, Layout layout) &&;

    bool operator==(const Tensor& other) const = default;

private:
    Dims dims_;
    Layout layout_ = Layout::matrix;
    std::vector<float> data_;
};

/// Value distribution for generated weights and inputs. `integer` draws small
/// integers so every accumulation is exact and comparisons need no tolerance.
enum class ValueMode { integer, real };

std::string_view to_string(ValueMode mode);
ValueMode parse_value_mode(std::string_view text);

/// Deterministic pseudo-random fill. Identical (seed, stream) pairs give
/// identical buffers on every platform.
struct ValueStream {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

enum class ValueRole { activation, weight };

void fill_values(std::span<float> out, ValueStream source, ValueMode mode, ValueRole role);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;
std::uint64_t hash_string(std::string_view text) noexcept;

/// Zeroes round(percent% of size) elements chosen by a seeded shuffle.
void prune_values(std::span<float> values, unsigned percent, std::uint64_t seed);

/// Little-endian float32 blob I/O.
std::vector<float> read_blob(const std::string& path, std::size_t expected_count);
void write_blob(const std::string& path, std::span<const float> values);

}  // namespace accelmap

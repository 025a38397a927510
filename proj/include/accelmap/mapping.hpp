#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "accelmap/config.hpp"
#include "accelmap/graph.hpp"

namespace accelmap {

/// Tile extents of a convolution dataflow: filter rows/cols, channels and
/// filters per group, groups, images, output rows/cols.
struct ConvMapping {
    std::size_t t_r = 1, t_s = 1, t_c = 1, t_k = 1, t_g = 1, t_n = 1, t_x = 1, t_y = 1;

    static constexpr std::size_t kTiles = 8;
    static constexpr std::array<std::string_view, kTiles> kNames = {"t_r", "t_s", "t_c", "t_k",
                                                                    "t_g", "t_n", "t_x", "t_y"};

    std::array<std::size_t, kTiles> tiles() const noexcept { return {t_r, t_s, t_c, t_k, t_g, t_n, t_x, t_y}; }
    static ConvMapping from_tiles(const std::array<std::size_t, kTiles>& t) noexcept {
        return {t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7]};
    }
    std::uint64_t footprint() const noexcept {
        return std::uint64_t{t_r} * t_s * t_c * t_k * t_g * t_n * t_x * t_y;
    }
    auto operator<=>(const ConvMapping&) const = default;
};

/// Tile extents of a fully connected dataflow: output neurons, batches,
/// input neurons.
struct FcMapping {
    std::size_t t_s = 1, t_n = 1, t_k = 1;

    static constexpr std::size_t kTiles = 3;
    static constexpr std::array<std::string_view, kTiles> kNames = {"t_s", "t_n", "t_k"};

    std::array<std::size_t, kTiles> tiles() const noexcept { return {t_s, t_n, t_k}; }
    static FcMapping from_tiles(const std::array<std::size_t, kTiles>& t) noexcept { return {t[0], t[1], t[2]}; }
    std::uint64_t footprint() const noexcept { return std::uint64_t{t_s} * t_n * t_k; }
    auto operator<=>(const FcMapping&) const = default;
};

using Mapping = std::variant<ConvMapping, FcMapping>;

std::vector<std::size_t> tile_values(const Mapping& m);
std::uint64_t footprint(const Mapping& m);
/// "t_r=3;t_s=3;..." in declaration order.
std::string format_mapping(const Mapping& m);

/// All-ones tiles for conv2d/dense; MappingError for any other op.
Mapping default_mapping(const Layer& layer);

/// Upper bound of each tile for the layer, in tile declaration order.
std::vector<std::size_t> tile_bounds(const Layer& layer);

/// Every bound and footprint violation; empty means valid.
std::vector<Diagnostic> check_mapping(const Mapping& m, const Layer& layer, const ValidatedConfig& cfg);
/// Throws MappingError carrying all diagnostics from check_mapping.
void validate_mapping(const Mapping& m, const Layer& layer, const ValidatedConfig& cfg);

enum class SpacePolicy { divisors, full_range };

std::string_view to_string(SpacePolicy policy);
SpacePolicy parse_space_policy(std::string_view text);

/// Footprint-feasible tile vectors of one layer, ordered lexicographically.
/// Points are ranked and unranked without materializing the space, so very
/// large spaces can still be counted and sampled.
class MappingSpace {
public:
    MappingSpace(OpKind kind, std::vector<std::vector<std::size_t>> candidates, std::uint64_t budget);

    OpKind kind() const noexcept { return kind_; }
    std::size_t axes() const noexcept { return candidates_.size(); }
    const std::vector<std::vector<std::size_t>>& candidates() const noexcept { return candidates_; }
    std::uint64_t budget() const noexcept { return budget_; }

    /// Feasible points (footprint <= budget).
    std::uint64_t size() const noexcept { return size_; }
    /// Product of candidate list lengths, before the footprint filter.
    std::uint64_t raw_size() const noexcept;

    /// Point at lexicographic rank `index` (< size()).
    Mapping at(std::uint64_t index) const;
    /// Rank of a feasible point whose tiles all appear in the candidate lists.
    std::uint64_t index_of(const Mapping& m) const;
    Mapping from_tiles(const std::vector<std::size_t>& tiles) const;

    /// Feasible completions of axes [axis, end) within `budget`.
    std::uint64_t completions(std::size_t axis, std::uint64_t budget) const;

private:
    OpKind kind_;
    std::vector<std::vector<std::size_t>> candidates_;
    std::uint64_t budget_;
    std::uint64_t size_ = 0;
    std::vector<std::map<std::uint64_t, std::uint64_t>> memo_;

    std::uint64_t count(std::size_t axis, std::uint64_t budget);
};

MappingSpace enumerate_space(const Layer& layer, const ValidatedConfig& cfg, SpacePolicy policy);

/// Sorted divisors of n.
std::vector<std::size_t> divisors(std::size_t n);

/// Layer id -> mapping, as stored in mapping files.
using MappingTable = std::map<std::string, Mapping>;

/// Parses a mapping file against a model: ids must name conv2d/dense layers
/// and each entry must carry exactly that kind's tile keys.
MappingTable parse_mappings(std::string_view text, const Model& model);
MappingTable load_mappings(const std::string& path, const Model& model);
/// Entries are written in model layer order.
std::string serialize_mappings(const MappingTable& table, const Model& model);

/// Pluggable source of mappings produced outside the tuner. A provider
/// returns mapping-file text; the layer's entry is extracted and validated.
using MappingProviderFn = std::function<std::string(const Layer&, const ValidatedConfig&)>;

class ProviderRegistry {
public:
    void add(std::string id, MappingProviderFn fn);
    bool contains(std::string_view id) const;
    /// Resolves `id`: registered names first, then the built-in schemes
    /// "file:<path>" (a mapping file) and "exec:<command>" (a program that
    /// receives a JSON layer description path as its last argument and
    /// prints a mapping file).
    Mapping request(std::string_view id, const Layer& layer, const ValidatedConfig& cfg) const;

private:
    std::map<std::string, MappingProviderFn, std::less<>> providers_;
};

Mapping external_mapping_provider(const Layer& layer, const ValidatedConfig& cfg, std::string_view provider_id,
                                  const ProviderRegistry& registry = {});

}  // namespace accelmap

#include "accelmap/mapping.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace accelmap {

using nlohmann::json;

namespace {

template <typename M>
M mapping_from_vector(const std::vector<std::size_t>& v) {
    std::array<std::size_t, M::kTiles> t{};
    std::copy_n(v.begin(), M::kTiles, t.begin());
    return M::from_tiles(t);
}

const std::vector<std::string_view>& names_for(OpKind kind) {
    static const std::vector<std::string_view> conv(ConvMapping::kNames.begin(), ConvMapping::kNames.end());
    static const std::vector<std::string_view> fc(FcMapping::kNames.begin(), FcMapping::kNames.end());
    return kind == OpKind::conv2d ? conv : fc;
}

Mapping parse_entry(const json& obj, const Layer& layer) {
    const std::string where = "mapping for layer '" + layer.id + "'";
    if (!obj.is_object()) throw MappingError(where + ": expected an object");
    const auto& names = names_for(layer.kind);
    for (const auto& item : obj.items()) {
        if (std::find(names.begin(), names.end(), item.key()) == names.end()) {
            throw MappingError(where + ": unexpected key '" + item.key() + "' for a " +
                               std::string(to_string(layer.kind)) + " layer");
        }
    }
    std::vector<std::size_t> tiles;
    for (auto name : names) {
        const std::string key(name);
        if (!obj.contains(key)) throw MappingError(where + ": missing '" + key + "'");
        const json& v = obj.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
            throw MappingError(where + ": '" + key + "' must be a non-negative integer");
        }
        tiles.push_back(v.get<std::size_t>());
    }
    if (layer.kind == OpKind::conv2d) return mapping_from_vector<ConvMapping>(tiles);
    return mapping_from_vector<FcMapping>(tiles);
}

json layer_description(const Layer& layer, const ValidatedConfig& cfg) {
    json out = json::object();
    out["id"] = layer.id;
    out["op"] = std::string(to_string(layer.kind));
    if (layer.kind == OpKind::conv2d) {
        const auto& p = layer.conv();
        out["params"] = {{"n", p.n}, {"r", p.r}, {"s", p.s}, {"c", p.c}, {"k", p.k}, {"g", p.g},
                         {"h", p.h}, {"w", p.w}, {"p", p.p}, {"q", p.q}, {"pad_h", p.pad_h}, {"pad_w", p.pad_w},
                         {"stride_h", p.stride_h}, {"stride_w", p.stride_w}};
    } else if (layer.kind == OpKind::dense) {
        out["params"] = {{"in_features", layer.fc().in_features}, {"out_features", layer.fc().out_features}};
    }
    out["config"] = json::parse(save_config(cfg.config()));
    return out;
}

Mapping extract_for_layer(const std::string& text, const Layer& layer, const std::string& source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MappingError("provider '" + source + "' returned malformed JSON: " + e.what());
    }
    if (!doc.is_object()) throw MappingError("provider '" + source + "' must return a JSON object");
    if (!doc.contains(layer.id)) {
        throw MappingError("provider '" + source + "' has no mapping for layer '" + layer.id + "'");
    }
    return parse_entry(doc.at(layer.id), layer);
}

std::string run_command(const std::string& command) {
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(command.c_str(), "r"), pclose);
    if (!pipe) throw MappingError("cannot start mapping provider command '" + command + "'");
    std::string output;
    char buffer[4096];
    while (std::size_t n = std::fread(buffer, 1, sizeof buffer, pipe.get())) output.append(buffer, n);
    const int status = pclose(pipe.release());
    if (status != 0) throw MappingError("mapping provider command '" + command + "' failed with status " + std::to_string(status));
    return output;
}

}  // namespace

std::vector<std::size_t> tile_values(const Mapping& m) {
    return std::visit([](const auto& v) {
        const auto t = v.tiles();
        return std::vector<std::size_t>(t.begin(), t.end());
    }, m);
}

std::uint64_t footprint(const Mapping& m) {
    return std::visit([](const auto& v) { return v.footprint(); }, m);
}

std::string format_mapping(const Mapping& m) {
    return std::visit([](const auto& v) {
        std::string out;
        const auto t = v.tiles();
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (i) out += ";";
            out += std::string(v.kNames[i]) + "=" + std::to_string(t[i]);
        }
        return out;
    }, m);
}

Mapping default_mapping(const Layer& layer) {
    if (layer.kind == OpKind::conv2d) return ConvMapping{};
    if (layer.kind == OpKind::dense) return FcMapping{};
    throw MappingError("layer '" + layer.id + "' (" + std::string(to_string(layer.kind)) +
                       ") has no dataflow mapping; only conv2d and dense are mapped");
}

std::vector<std::size_t> tile_bounds(const Layer& layer) {
    if (layer.kind == OpKind::conv2d) {
        const auto& p = layer.conv();
        if (p.p == 0 || p.q == 0) throw MappingError("layer '" + layer.id + "': shapes not inferred");
        return {p.r, p.s, p.c_per_group(), p.k_per_group(), p.g, p.n, p.p, p.q};
    }
    if (layer.kind == OpKind::dense) {
        const auto& p = layer.fc();
        return {p.out_features, p.batch, p.in_features};
    }
    throw MappingError("layer '" + layer.id + "' (" + std::string(to_string(layer.kind)) + ") has no mapping space");
}

std::vector<Diagnostic> check_mapping(const Mapping& m, const Layer& layer, const ValidatedConfig& cfg) {
    std::vector<Diagnostic> out;
    const bool conv_mapping = std::holds_alternative<ConvMapping>(m);
    if ((layer.kind == OpKind::conv2d) != conv_mapping || !layer.offloadable()) {
        out.push_back({Severity::error, layer.id, "kind",
                       std::string(conv_mapping ? "conv" : "fc") + " mapping given for a " +
                           std::string(to_string(layer.kind)) + " layer"});
        return out;
    }
    const auto bounds = tile_bounds(layer);
    const auto tiles = tile_values(m);
    const auto& names = names_for(layer.kind);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const std::string field(names[i]);
        if (tiles[i] < 1) {
            out.push_back({Severity::error, field, "minimum", "tile must be >= 1"});
        } else if (names[i] == "t_n" && tiles[i] != 1) {
            out.push_back({Severity::error, field, "batch", "only a single batch is supported, got " + std::to_string(tiles[i])});
        } else if (tiles[i] > bounds[i]) {
            out.push_back({Severity::error, field, "bound",
                           std::to_string(tiles[i]) + " exceeds the layer extent " + std::to_string(bounds[i])});
        }
    }
    const std::uint64_t fp = footprint(m);
    if (fp > cfg.multipliers()) {
        out.push_back({Severity::error, "footprint", "multipliers",
                       "tile product " + std::to_string(fp) + " exceeds " + std::to_string(cfg.multipliers()) +
                           " multipliers"});
    }
    return out;
}

void validate_mapping(const Mapping& m, const Layer& layer, const ValidatedConfig& cfg) {
    auto diags = check_mapping(m, layer, cfg);
    if (!diags.empty()) {
        const std::string what = "invalid mapping for layer '" + layer.id + "': " + join_diagnostics(diags);
        throw MappingError(what, std::move(diags));
    }
}

std::string_view to_string(SpacePolicy policy) { return policy == SpacePolicy::divisors ? "divisors" : "full"; }

SpacePolicy parse_space_policy(std::string_view text) {
    if (text == "divisors") return SpacePolicy::divisors;
    if (text == "full") return SpacePolicy::full_range;
    throw MappingError("unknown space policy '" + std::string(text) + "' (expected divisors|full)");
}

std::vector<std::size_t> divisors(std::size_t n) {
    std::vector<std::size_t> lo, hi;
    for (std::size_t d = 1; d * d <= n; ++d) {
        if (n % d == 0) {
            lo.push_back(d);
            if (d != n / d) hi.push_back(n / d);
        }
    }
    lo.insert(lo.end(), hi.rbegin(), hi.rend());
    return lo;
}

MappingSpace::MappingSpace(OpKind kind, std::vector<std::vector<std::size_t>> candidates, std::uint64_t budget)
    : kind_(kind), candidates_(std::move(candidates)), budget_(budget), memo_(candidates_.size() + 1) {
    for (auto& list : candidates_) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    size_ = count(0, budget_);
}

std::uint64_t MappingSpace::count(std::size_t axis, std::uint64_t budget) {
    if (axis == candidates_.size()) return 1;
    if (auto it = memo_[axis].find(budget); it != memo_[axis].end()) return it->second;
    std::uint64_t total = 0;
    for (std::size_t v : candidates_[axis]) {
        if (v == 0 || v > budget) break;
        total += count(axis + 1, budget / v);
    }
    memo_[axis].emplace(budget, total);
    return total;
}

std::uint64_t MappingSpace::completions(std::size_t axis, std::uint64_t budget) const {
    if (axis == candidates_.size()) return 1;
    if (auto it = memo_[axis].find(budget); it != memo_[axis].end()) return it->second;
    // Budgets outside the memo are never produced by at()/index_of(); count directly.
    std::uint64_t total = 0;
    for (std::size_t v : candidates_[axis]) {
        if (v == 0 || v > budget) break;
        total += completions(axis + 1, budget / v);
    }
    return total;
}

std::uint64_t MappingSpace::raw_size() const noexcept {
    std::uint64_t total = 1;
    for (const auto& list : candidates_) total *= list.size();
    return total;
}

Mapping MappingSpace::at(std::uint64_t index) const {
    if (index >= size_) throw MappingError("mapping space index " + std::to_string(index) + " out of range");
    std::vector<std::size_t> tiles(candidates_.size());
    std::uint64_t budget = budget_;
    for (std::size_t axis = 0; axis < candidates_.size(); ++axis) {
        for (std::size_t v : candidates_[axis]) {
            if (v > budget) break;
            const std::uint64_t below = completions(axis + 1, budget / v);
            if (index < below) {
                tiles[axis] = v;
                budget /= v;
                break;
            }
            index -= below;
        }
    }
    return from_tiles(tiles);
}

std::uint64_t MappingSpace::index_of(const Mapping& m) const {
    const auto tiles = tile_values(m);
    if (tiles.size() != candidates_.size()) throw MappingError("mapping kind does not match the space");
    std::uint64_t index = 0;
    std::uint64_t budget = budget_;
    for (std::size_t axis = 0; axis < candidates_.size(); ++axis) {
        bool found = false;
        for (std::size_t v : candidates_[axis]) {
            if (v > budget) break;
            if (v == tiles[axis]) {
                found = true;
                break;
            }
            index += completions(axis + 1, budget / v);
        }
        if (!found) throw MappingError("mapping " + format_mapping(m) + " is not a point of the space");
        budget /= tiles[axis];
    }
    return index;
}

Mapping MappingSpace::from_tiles(const std::vector<std::size_t>& tiles) const {
    if (kind_ == OpKind::conv2d) return mapping_from_vector<ConvMapping>(tiles);
    return mapping_from_vector<FcMapping>(tiles);
}

MappingSpace enumerate_space(const Layer& layer, const ValidatedConfig& cfg, SpacePolicy policy) {
    const auto bounds = tile_bounds(layer);
    const auto& names = names_for(layer.kind);
    std::vector<std::vector<std::size_t>> candidates;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        if (names[i] == "t_n") {
            candidates.push_back({1});
        } else if (policy == SpacePolicy::divisors) {
            candidates.push_back(divisors(bounds[i]));
        } else {
            std::vector<std::size_t> all(bounds[i]);
            for (std::size_t v = 0; v < bounds[i]; ++v) all[v] = v + 1;
            candidates.push_back(std::move(all));
        }
        // Values above the multiplier count can never fit.
        auto& list = candidates.back();
        list.erase(std::remove_if(list.begin(), list.end(), [&](std::size_t v) { return v > cfg.multipliers(); }),
                   list.end());
    }
    return MappingSpace(layer.kind, std::move(candidates), cfg.multipliers());
}

MappingTable parse_mappings(std::string_view text, const Model& model) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MappingError(std::string("malformed mapping file: ") + e.what());
    }
    if (!doc.is_object()) throw MappingError("mapping file must be a JSON object keyed by layer id");
    MappingTable table;
    for (const auto& item : doc.items()) {
        const Layer* layer = model.find(item.key());
        if (!layer) throw MappingError("mapping file names unknown layer '" + item.key() + "'");
        if (!layer->offloadable()) {
            throw MappingError("mapping file names layer '" + item.key() + "' which is not conv2d/dense");
        }
        table.emplace(item.key(), parse_entry(item.value(), *layer));
    }
    return table;
}

MappingTable load_mappings(const std::string& path, const Model& model) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mapping file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_mappings(buffer.str(), model);
}

std::string serialize_mappings(const MappingTable& table, const Model& model) {
    // nlohmann::ordered_json keeps model order in the output.
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    for (const auto& layer : model.layers) {
        auto it = table.find(layer.id);
        if (it == table.end()) continue;
        nlohmann::ordered_json entry = nlohmann::ordered_json::object();
        std::visit([&](const auto& v) {
            const auto t = v.tiles();
            for (std::size_t i = 0; i < t.size(); ++i) entry[std::string(v.kNames[i])] = t[i];
        }, it->second);
        doc[layer.id] = std::move(entry);
    }
    return doc.dump(2) + "\n";
}

void ProviderRegistry::add(std::string id, MappingProviderFn fn) { providers_[std::move(id)] = std::move(fn); }

bool ProviderRegistry::contains(std::string_view id) const { return providers_.find(id) != providers_.end(); }

Mapping ProviderRegistry::request(std::string_view id, const Layer& layer, const ValidatedConfig& cfg) const {
    const std::string source(id);
    if (!layer.offloadable()) {
        throw MappingError("layer '" + layer.id + "' (" + std::string(to_string(layer.kind)) + ") cannot be mapped");
    }
    std::string text;
    if (auto it = providers_.find(id); it != providers_.end()) {
        text = it->second(layer, cfg);
    } else if (id.starts_with("file:")) {
        const std::string path(id.substr(5));
        std::ifstream in(path);
        if (!in) throw MappingError("mapping provider '" + source + "' is unreadable: cannot open '" + path + "'");
        std::stringstream buffer;
        buffer << in.rdbuf();
        text = buffer.str();
    } else if (id.starts_with("exec:")) {
        const auto request_path = std::filesystem::temp_directory_path() /
                                  ("accelmap_layer_" + std::to_string(hash_string(layer.id + source)) + ".json");
        {
            std::ofstream out(request_path);
            out << layer_description(layer, cfg).dump(2);
        }
        text = run_command(std::string(id.substr(5)) + " '" + request_path.string() + "'");
        std::filesystem::remove(request_path);
    } else {
        throw MappingError("unknown mapping provider '" + source + "'");
    }
    Mapping m = extract_for_layer(text, layer, source);
    auto diags = check_mapping(m, layer, cfg);
    if (!diags.empty()) {
        const std::string what = "provider '" + source + "' returned an invalid mapping for layer '" + layer.id +
                                 "': " + join_diagnostics(diags);
        throw MappingError(what, std::move(diags));
    }
    return m;
}

Mapping external_mapping_provider(const Layer& layer, const ValidatedConfig& cfg, std::string_view provider_id,
                                  const ProviderRegistry& registry) {
    return registry.request(provider_id, layer, cfg);
}

}  // namespace accelmap

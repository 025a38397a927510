#include "accelmap/config.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace accelmap {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 10> kFields = {"controller_type",     "ms_network_type", "ms_size",
                                                      "ms_rows",             "ms_cols",         "dn_bw",
                                                      "rn_bw",               "reduce_network_type",
                                                      "sparsity_ratio",      "accumulation_buffer"};

Diagnostic error(std::string field, std::string rule, std::string message) {
    return Diagnostic{Severity::error, std::move(field), std::move(rule), std::move(message)};
}

void check_power_of_two(std::vector<Diagnostic>& out, const char* field, std::uint64_t value) {
    if (!is_power_of_two(value)) {
        out.push_back(error(field, "power-of-two", std::to_string(value) + " is not a power of two"));
    }
}

std::uint32_t read_count(const json& doc, const char* key, std::uint32_t min_value) {
    const json& v = doc.at(key);
    if (!v.is_number_integer()) throw ConfigError(std::string(key) + ": expected an integer");
    const std::int64_t x = v.get<std::int64_t>();
    if (x < static_cast<std::int64_t>(min_value) || x > 0x7fffffff) {
        throw ConfigError(std::string(key) + ": value " + std::to_string(x) + " out of range",
                          {error(key, "range", "value " + std::to_string(x) + " out of range")});
    }
    return static_cast<std::uint32_t>(x);
}

std::uint32_t parse_uint(std::string_view field, std::string_view text) {
    std::uint32_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError(std::string(field) + ": '" + std::string(text) + "' is not a non-negative integer");
    }
    return value;
}

}  // namespace

bool is_power_of_two(std::uint64_t x) noexcept { return std::has_single_bit(x); }

std::uint32_t ceil_log2(std::uint64_t x) noexcept {
    return x <= 1 ? 0 : static_cast<std::uint32_t>(std::bit_width(x - 1));
}

std::string_view to_string(ControllerType v) {
    switch (v) {
        case ControllerType::flex_linear: return "FLEX_LINEAR";
        case ControllerType::sparse_gemm: return "SPARSE_GEMM";
        case ControllerType::systolic_os: return "SYSTOLIC_OS";
    }
    return "?";
}

std::string_view to_string(MsNetworkType v) { return v == MsNetworkType::linear ? "LINEAR" : "OS_MESH"; }

std::string_view to_string(ReduceNetworkType v) {
    switch (v) {
        case ReduceNetworkType::asnetwork: return "ASNETWORK";
        case ReduceNetworkType::fenetwork: return "FENETWORK";
        case ReduceNetworkType::temporalrn: return "TEMPORALRN";
    }
    return "?";
}

ControllerType parse_controller_type(std::string_view text) {
    if (text == "FLEX_LINEAR" || text == "MAERI_DENSE_WORKLOAD") return ControllerType::flex_linear;
    if (text == "SPARSE_GEMM" || text == "SIGMA_SPARSE_GEMM") return ControllerType::sparse_gemm;
    if (text == "SYSTOLIC_OS" || text == "TPU_OS_DENSE") return ControllerType::systolic_os;
    throw ConfigError("controller_type: unknown value '" + std::string(text) + "'");
}

MsNetworkType parse_ms_network_type(std::string_view text) {
    if (text == "LINEAR") return MsNetworkType::linear;
    if (text == "OS_MESH") return MsNetworkType::os_mesh;
    throw ConfigError("ms_network_type: unknown value '" + std::string(text) + "'");
}

ReduceNetworkType parse_reduce_network_type(std::string_view text) {
    if (text == "ASNETWORK") return ReduceNetworkType::asnetwork;
    if (text == "FENETWORK") return ReduceNetworkType::fenetwork;
    if (text == "TEMPORALRN") return ReduceNetworkType::temporalrn;
    throw ConfigError("reduce_network_type: unknown value '" + std::string(text) + "'");
}

std::vector<Diagnostic> check_config(const HardwareConfig& cfg) {
    std::vector<Diagnostic> out;
    const bool systolic = cfg.controller_type == ControllerType::systolic_os;

    if (systolic && cfg.ms_network_type != MsNetworkType::os_mesh) {
        out.push_back(error("ms_network_type", "os-mesh-required", "SYSTOLIC_OS must use OS_MESH"));
    }
    if (!systolic && cfg.ms_network_type != MsNetworkType::linear) {
        out.push_back(error("ms_network_type", "linear-required",
                            std::string(to_string(cfg.controller_type)) + " must use LINEAR"));
    }

    if (cfg.ms_network_type == MsNetworkType::linear) {
        if (!cfg.ms_size) {
            out.push_back(error("ms_size", "required", "LINEAR networks need ms_size"));
        } else {
            check_power_of_two(out, "ms_size", *cfg.ms_size);
            if (*cfg.ms_size < 8) {
                out.push_back(error("ms_size", "minimum-8", std::to_string(*cfg.ms_size) + " is below the minimum of 8"));
            }
        }
    } else {
        if (!cfg.ms_rows) out.push_back(error("ms_rows", "required", "OS_MESH networks need ms_rows"));
        if (!cfg.ms_cols) out.push_back(error("ms_cols", "required", "OS_MESH networks need ms_cols"));
        if (cfg.ms_size) {
            out.push_back({Severity::warning, "ms_size", "unused", "ms_size is ignored for OS_MESH; ms_rows x ms_cols is used"});
        }
    }
    if (cfg.ms_rows) check_power_of_two(out, "ms_rows", *cfg.ms_rows);
    if (cfg.ms_cols) check_power_of_two(out, "ms_cols", *cfg.ms_cols);

    if (systolic) {
        if (cfg.reduce_network_type != ReduceNetworkType::temporalrn) {
            out.push_back(error("reduce_network_type", "temporalrn-required", "SYSTOLIC_OS must use TEMPORALRN"));
        }
        if (!cfg.accumulation_buffer) {
            out.push_back(error("accumulation_buffer", "required-true", "SYSTOLIC_OS needs the accumulation buffer enabled"));
        }
        if (cfg.ms_rows && cfg.ms_cols) {
            // The mesh equality rule replaces the power-of-two rule for bandwidths.
            const std::uint32_t dn = *cfg.ms_rows + *cfg.ms_cols;
            const std::uint32_t rn = *cfg.ms_rows * *cfg.ms_cols;
            if (cfg.dn_bw != dn) {
                out.push_back({Severity::notice, "dn_bw", "mesh-bandwidth",
                               "corrected from " + std::to_string(cfg.dn_bw) + " to ms_rows+ms_cols=" + std::to_string(dn)});
            }
            if (cfg.rn_bw != rn) {
                out.push_back({Severity::notice, "rn_bw", "mesh-bandwidth",
                               "corrected from " + std::to_string(cfg.rn_bw) + " to ms_rows*ms_cols=" + std::to_string(rn)});
            }
        }
    } else {
        check_power_of_two(out, "dn_bw", cfg.dn_bw);
        check_power_of_two(out, "rn_bw", cfg.rn_bw);
        if (cfg.reduce_network_type == ReduceNetworkType::temporalrn) {
            out.push_back({Severity::warning, "reduce_network_type", "temporalrn",
                           "TEMPORALRN is meant for SYSTOLIC_OS; modeled as a tree reduction here"});
        }
    }

    if (cfg.sparsity_ratio > 100) {
        out.push_back(error("sparsity_ratio", "range", std::to_string(cfg.sparsity_ratio) + " is outside 0..100"));
    } else if (cfg.sparsity_ratio != 0 && cfg.controller_type != ControllerType::sparse_gemm) {
        out.push_back({Severity::warning, "sparsity_ratio", "unused", "sparsity_ratio only affects SPARSE_GEMM"});
    }
    return out;
}

ValidatedConfig validate_config(const HardwareConfig& cfg) {
    std::vector<Diagnostic> diags = check_config(cfg);
    std::vector<Diagnostic> errors;
    for (const auto& d : diags) {
        if (d.severity == Severity::error) errors.push_back(d);
    }
    if (!errors.empty()) {
        const std::string what = "invalid hardware configuration: " + join_diagnostics(errors);
        throw ConfigError(what, std::move(errors));
    }
    ValidatedConfig out;
    out.cfg_ = cfg;
    if (cfg.controller_type == ControllerType::systolic_os) {
        out.cfg_.dn_bw = *cfg.ms_rows + *cfg.ms_cols;
        out.cfg_.rn_bw = *cfg.ms_rows * *cfg.ms_cols;
        out.multipliers_ = *cfg.ms_rows * *cfg.ms_cols;
    } else {
        out.multipliers_ = *cfg.ms_size;
        out.tree_levels_ = ceil_log2(*cfg.ms_size);
    }
    out.notices_ = std::move(diags);
    return out;
}

HardwareConfig load_config(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed config document: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
    for (const auto& item : doc.items()) {
        if (std::find(kFields.begin(), kFields.end(), item.key()) == kFields.end()) {
            throw ConfigError("unknown config field '" + item.key() + "'",
                              {error(item.key(), "unknown-field", "not a hardware configuration option")});
        }
    }
    auto read_enum_text = [&](const char* key) {
        if (!doc.at(key).is_string()) throw ConfigError(std::string(key) + ": expected a string");
        return doc.at(key).get<std::string>();
    };
    if (!doc.contains("controller_type")) {
        throw ConfigError("missing required field 'controller_type'", {error("controller_type", "required", "missing")});
    }
    HardwareConfig cfg;
    cfg.controller_type = parse_controller_type(read_enum_text("controller_type"));
    const bool systolic = cfg.controller_type == ControllerType::systolic_os;

    cfg.ms_network_type = doc.contains("ms_network_type") ? parse_ms_network_type(read_enum_text("ms_network_type"))
                                                          : (systolic ? MsNetworkType::os_mesh : MsNetworkType::linear);
    cfg.reduce_network_type = doc.contains("reduce_network_type")
                                  ? parse_reduce_network_type(read_enum_text("reduce_network_type"))
                                  : (systolic ? ReduceNetworkType::temporalrn : ReduceNetworkType::asnetwork);
    if (doc.contains("ms_size")) cfg.ms_size = read_count(doc, "ms_size", 1);
    if (doc.contains("ms_rows")) cfg.ms_rows = read_count(doc, "ms_rows", 1);
    if (doc.contains("ms_cols")) cfg.ms_cols = read_count(doc, "ms_cols", 1);
    if (doc.contains("dn_bw")) cfg.dn_bw = read_count(doc, "dn_bw", 1);
    if (doc.contains("rn_bw")) cfg.rn_bw = read_count(doc, "rn_bw", 1);
    if (doc.contains("sparsity_ratio")) {
        const json& v = doc.at("sparsity_ratio");
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > 100) {
            throw ConfigError("sparsity_ratio: must be an integer in 0..100",
                              {error("sparsity_ratio", "range", "must be an integer in 0..100")});
        }
        cfg.sparsity_ratio = v.get<std::uint32_t>();
    }
    if (doc.contains("accumulation_buffer")) {
        if (!doc.at("accumulation_buffer").is_boolean()) throw ConfigError("accumulation_buffer: expected true or false");
        cfg.accumulation_buffer = doc.at("accumulation_buffer").get<bool>();
    } else {
        cfg.accumulation_buffer = systolic;
    }

    if (cfg.ms_network_type == MsNetworkType::linear && !cfg.ms_size) {
        throw ConfigError("missing required field 'ms_size' for LINEAR", {error("ms_size", "required", "missing")});
    }
    if (cfg.ms_network_type == MsNetworkType::os_mesh && (!cfg.ms_rows || !cfg.ms_cols)) {
        throw ConfigError("missing required fields 'ms_rows'/'ms_cols' for OS_MESH",
                          {error(cfg.ms_rows ? "ms_cols" : "ms_rows", "required", "missing")});
    }
    return cfg;
}

HardwareConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return load_config(buffer.str());
}

std::string save_config(const HardwareConfig& cfg) {
    json doc = json::object();
    doc["controller_type"] = std::string(to_string(cfg.controller_type));
    doc["ms_network_type"] = std::string(to_string(cfg.ms_network_type));
    if (cfg.ms_size) doc["ms_size"] = *cfg.ms_size;
    if (cfg.ms_rows) doc["ms_rows"] = *cfg.ms_rows;
    if (cfg.ms_cols) doc["ms_cols"] = *cfg.ms_cols;
    doc["dn_bw"] = cfg.dn_bw;
    doc["rn_bw"] = cfg.rn_bw;
    doc["reduce_network_type"] = std::string(to_string(cfg.reduce_network_type));
    doc["sparsity_ratio"] = cfg.sparsity_ratio;
    doc["accumulation_buffer"] = cfg.accumulation_buffer;
    return doc.dump(2) + "\n";
}

HardwareConfig with_field(HardwareConfig cfg, std::string_view field, std::string_view value) {
    if (field == "controller_type") cfg.controller_type = parse_controller_type(value);
    else if (field == "ms_network_type") cfg.ms_network_type = parse_ms_network_type(value);
    else if (field == "reduce_network_type") cfg.reduce_network_type = parse_reduce_network_type(value);
    else if (field == "ms_size") cfg.ms_size = parse_uint(field, value);
    else if (field == "ms_rows") cfg.ms_rows = parse_uint(field, value);
    else if (field == "ms_cols") cfg.ms_cols = parse_uint(field, value);
    else if (field == "dn_bw") cfg.dn_bw = parse_uint(field, value);
    else if (field == "rn_bw") cfg.rn_bw = parse_uint(field, value);
    else if (field == "sparsity_ratio") cfg.sparsity_ratio = parse_uint(field, value);
    else if (field == "accumulation_buffer") {
        if (value == "true") cfg.accumulation_buffer = true;
        else if (value == "false") cfg.accumulation_buffer = false;
        else throw ConfigError("accumulation_buffer: expected true or false, got '" + std::string(value) + "'");
    } else {
        throw ConfigError("unknown hardware parameter '" + std::string(field) + "'");
    }
    return cfg;
}

bool is_hardware_field(std::string_view field) noexcept {
    static constexpr std::string_view kFields[] = {"controller_type", "ms_network_type", "reduce_network_type",
                                                   "ms_size",         "ms_rows",         "ms_cols",
                                                   "dn_bw",           "rn_bw",           "sparsity_ratio",
                                                   "accumulation_buffer"};
    return std::find(std::begin(kFields), std::end(kFields), field) != std::end(kFields);
}

}  // namespace accelmap

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "accelmap/error.hpp"

namespace accelmap {

/// Accelerator family. FLEX_LINEAR is a MAERI-like flexible tree fabric,
/// SPARSE_GEMM a SIGMA-like sparse GEMM engine, SYSTOLIC_OS a TPU-like
/// output-stationary mesh.
enum class ControllerType { flex_linear, sparse_gemm, systolic_os };
enum class MsNetworkType { linear, os_mesh };
enum class ReduceNetworkType { asnetwork, fenetwork, temporalrn };

std::string_view to_string(ControllerType v);
std::string_view to_string(MsNetworkType v);
std::string_view to_string(ReduceNetworkType v);
/// Accepts the neutral names and the MAERI_DENSE_WORKLOAD /
/// SIGMA_SPARSE_GEMM / TPU_OS_DENSE aliases.
ControllerType parse_controller_type(std::string_view text);
MsNetworkType parse_ms_network_type(std::string_view text);
ReduceNetworkType parse_reduce_network_type(std::string_view text);

struct HardwareConfig {
    ControllerType controller_type = ControllerType::flex_linear;
    MsNetworkType ms_network_type = MsNetworkType::linear;
    std::optional<std::uint32_t> ms_size;
    std::optional<std::uint32_t> ms_rows;
    std::optional<std::uint32_t> ms_cols;
    std::uint32_t dn_bw = 8;
    std::uint32_t rn_bw = 8;
    ReduceNetworkType reduce_network_type = ReduceNetworkType::asnetwork;
    std::uint32_t sparsity_ratio = 0;  // percent
    bool accumulation_buffer = false;

    bool operator==(const HardwareConfig&) const = default;
};

/// Immutable, rule-checked configuration; the only form the simulators accept.
class ValidatedConfig {
public:
    const HardwareConfig& config() const noexcept { return cfg_; }
    ControllerType controller() const noexcept { return cfg_.controller_type; }
    std::uint32_t dn_bw() const noexcept { return cfg_.dn_bw; }
    std::uint32_t rn_bw() const noexcept { return cfg_.rn_bw; }
    bool accumulation_buffer() const noexcept { return cfg_.accumulation_buffer; }
    std::uint32_t ms_rows() const noexcept { return cfg_.ms_rows.value_or(0); }
    std::uint32_t ms_cols() const noexcept { return cfg_.ms_cols.value_or(0); }
    /// Multiplier count: ms_size for LINEAR, ms_rows*ms_cols for OS_MESH.
    std::uint32_t multipliers() const noexcept { return multipliers_; }
    /// ceil(log2(ms_size)) for LINEAR fabrics, 0 otherwise.
    std::uint32_t tree_levels() const noexcept { return tree_levels_; }
    /// Warnings and correction notices raised while validating.
    const std::vector<Diagnostic>& notices() const noexcept { return notices_; }

private:
    friend ValidatedConfig validate_config(const HardwareConfig& cfg);
    ValidatedConfig() = default;

    HardwareConfig cfg_;
    std::uint32_t multipliers_ = 0;
    std::uint32_t tree_levels_ = 0;
    std::vector<Diagnostic> notices_;
};

/// Every rule finding for `cfg`: errors, warnings, and correction notices.
std::vector<Diagnostic> check_config(const HardwareConfig& cfg);

/// Throws ConfigError carrying every violated rule. For SYSTOLIC_OS the
/// bandwidths are rewritten to dn_bw = rows + cols and rn_bw = rows * cols.
ValidatedConfig validate_config(const HardwareConfig& cfg);

HardwareConfig load_config(std::string_view text);
HardwareConfig load_config_file(const std::string& path);
std::string save_config(const HardwareConfig& cfg);

/// Replaces one named field with a value parsed from text (used by sweeps).
/// Throws ConfigError for unknown names or unparsable values.
HardwareConfig with_field(HardwareConfig cfg, std::string_view field, std::string_view value);
bool is_hardware_field(std::string_view field) noexcept;

bool is_power_of_two(std::uint64_t x) noexcept;
std::uint32_t ceil_log2(std::uint64_t x) noexcept;

}  // namespace accelmap

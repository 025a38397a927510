#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "accelmap/config.hpp"
#include "accelmap/graph.hpp"
#include "accelmap/mapping.hpp"

namespace accelmap {

enum class Objective { cycles, psums };
enum class Strategy { grid, random, genetic };

std::string_view to_string(Objective objective);
std::string_view to_string(Strategy strategy);
Objective parse_objective(std::string_view text);
/// Accepts "grid", "random", "genetic" and the short form "ga".
Strategy parse_strategy(std::string_view text);

struct TunerOptions {
    Strategy strategy = Strategy::grid;
    /// Unique trials allowed. Unset means the whole space for grid and
    /// min(space, 1000) otherwise.
    std::optional<std::uint64_t> budget;
    /// Consecutive trials without improvement before halting; unset disables.
    std::optional<std::uint64_t> early_stop;
    std::uint64_t seed = 0;
    /// Upper bound; a generation never exceeds max(4, budget / 4) members.
    std::size_t population = 32;
    double mutation_rate = 0.2;
    double elite_fraction = 0.125;
    /// Concurrent evaluations; 0 reads BIFROST_PARALLELISM, then the core count.
    std::size_t parallelism = 0;
    SpacePolicy policy = SpacePolicy::divisors;
};

/// Throws ConfigError for out-of-range options.
void check_options(const TunerOptions& options);

/// BIFROST_PARALLELISM when set (a positive integer), else the core count.
std::size_t resolve_parallelism(std::size_t requested);

struct Trial {
    std::uint64_t trial_index = 0;
    std::uint64_t space_index = 0;  // lexicographic rank in the mapping space
    Mapping mapping;
    std::uint64_t cost = 0;
    std::uint64_t best_so_far = 0;
};

struct TuneResult {
    Mapping best_mapping;
    std::uint64_t best_cost = 0;
    std::uint64_t trials_evaluated = 0;
    std::vector<Trial> history;
    bool converged = false;  // halted by early stopping
    std::uint64_t space_size = 0;
};

/// Cost of one mapping. The cycles objective runs the flexible simulator on
/// generated operands; the psums objective is count_psums alone.
std::uint64_t trial_cost(const Layer& layer, const Mapping& m, const ValidatedConfig& cfg, Objective objective);

/// Searches the layer's mapping space. Needs a FLEX_LINEAR configuration and
/// inferred shapes. Cost ties go to the lexicographically smallest mapping.
TuneResult tune_layer(const Layer& layer, const ValidatedConfig& cfg, Objective objective, const TunerOptions& options);

struct ModelTuning {
    std::vector<std::pair<std::string, TuneResult>> results;  // model order
    std::vector<std::pair<std::string, std::string>> failures;  // layer id, message

    MappingTable mappings() const;
};

/// Tunes every conv2d/dense layer independently; a failing layer is recorded
/// and the others still run. Each layer's seed is derived from its id.
ModelTuning tune_model(const Model& model, const ValidatedConfig& cfg, Objective objective,
                       const TunerOptions& options);

/// "trial_index,layer_id,tiles,cost,best_so_far" rows for every layer.
std::string history_csv(const ModelTuning& tuning);

struct SweepRow {
    std::string param;
    std::string value;
    std::string status;  // "ok", "invalid" (config rejected), "error"
    std::optional<std::uint64_t> best_cost;
    std::string message;
};

/// For each value: substitute, validate, then tune (or simulate `fixed`
/// mappings when given) and record the summed best cost over the selected
/// layers. `layer_id` empty selects every conv2d/dense layer. Unknown
/// parameter names throw; per-value failures become rows.
std::vector<SweepRow> sweep_hardware(const Model& model, const std::string& layer_id, const HardwareConfig& base,
                                     const std::string& param, const std::vector<std::string>& values,
                                     Objective objective, const TunerOptions& options,
                                     const MappingTable* fixed = nullptr);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace accelmap

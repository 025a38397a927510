#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "accelmap/config.hpp"
#include "accelmap/graph.hpp"
#include "accelmap/mapping.hpp"
#include "accelmap/simulator.hpp"
#include "accelmap/tensor.hpp"

namespace accelmap {

enum class StepKind {
    transpose,       // operand permuted between paired layouts
    retag,           // same buffer, new layout tag
    im2col,          // input patches to a matrix (per group)
    kernel_matrix,   // kernel to a GEMM operand (per group)
    simulate,        // simulator call
    scatter,         // GEMM product back into the 4-D output (per group)
    fallback,        // host-side reference kernel, no cycles
};

std::string_view to_string(StepKind kind);

enum class SimEntry { none, flexible_conv, flexible_fc, sparse_gemm, systolic_gemm };

std::string_view to_string(SimEntry entry);

/// GEMM operand order for convolutions lowered on GEMM-only fabrics.
enum class GemmOrder { none, weight_x_data, data_x_weight };

struct LoweringStep {
    StepKind kind;
    std::string operand;  // "input", "kernel", "output"
    Layout from = Layout::matrix;
    Layout to = Layout::matrix;
    Dims result;  // dims the step must produce (one group's for grouped steps)

    std::string describe() const;
};

struct LayerPlan {
    std::string layer_id;
    OpKind op = OpKind::relu;
    bool offload = false;
    SimEntry entry = SimEntry::none;
    GemmOrder order = GemmOrder::none;
    std::size_t groups = 1;  // GEMM count per layer on GEMM fabrics
    std::vector<LoweringStep> steps;
    std::optional<Mapping> mapping;  // flexible fabric only
    bool default_mapping = false;    // mapping was generated, not supplied
};

struct ExecutionPlan {
    std::vector<LayerPlan> layers;
    std::vector<Diagnostic> notices;
};

/// Lowering recipe of one layer. Shapes must be inferred. On FLEX_LINEAR a
/// layer without an entry in `mappings` gets the all-ones mapping.
LayerPlan plan_layer(const Layer& layer, const ValidatedConfig& cfg, const MappingTable* mappings = nullptr);
ExecutionPlan plan_model(const Model& model, const ValidatedConfig& cfg, const MappingTable* mappings = nullptr);

/// Weight source of a run. Values are regenerated from this on demand so a
/// report can be verified without keeping every weight tensor alive.
struct WeightPolicy {
    std::uint64_t seed = 0;
    ValueMode mode = ValueMode::integer;
    unsigned prune_percent = 0;  // applied to conv2d/dense weights
};

/// The layer's weights: conv kernel in the layer's kernel layout, dense
/// weights as in x out, bias as a 1 x channels matrix. Loaded from the
/// layer's blob when it names one, generated otherwise.
std::optional<Tensor> layer_weights(const Model& model, const Layer& layer, const WeightPolicy& policy);

/// The model input generated from `seed` in the model's value mode.
Tensor generate_input(const Model& model, std::uint64_t seed);
/// Shape of the first layer's input.
Shape model_input_shape(const Model& model);

/// Executes one planned layer. Every lowering step is checked against the
/// dims the plan recorded; a disagreement is a SimulationError.
struct LayerExecution {
    SimReport sim;  // zero metrics for fallback layers; output is the layer output
};
LayerExecution execute_layer(const Layer& layer, const LayerPlan& plan, const ValidatedConfig& cfg,
                             const Tensor& input, const std::optional<Tensor>& weights);

struct LayerResult {
    std::string layer_id;
    OpKind op = OpKind::relu;
    bool offloaded = false;
    std::uint64_t cycles = 0;
    std::uint64_t psums = 0;
    std::uint64_t macs = 0;
    std::uint64_t skipped_macs = 0;
    double utilization = 0.0;
    std::optional<Tensor> output;  // dropped in low-memory runs
};

struct RunTotals {
    std::uint64_t cycles = 0;
    std::uint64_t psums = 0;
    std::uint64_t macs = 0;
    std::uint64_t skipped_macs = 0;
    double utilization = 0.0;  // cycle-weighted over offloaded layers
};

struct RunReport {
    std::vector<LayerResult> layers;
    RunTotals totals;
    Tensor output;
    WeightPolicy weights;
    std::vector<Diagnostic> notices;
};

struct RunOptions {
    std::optional<std::uint64_t> seed;  // defaults to the model's seed
    bool low_memory = false;
};

/// Runs every layer in order. `input` must match the first layer's input
/// shape; errors are rethrown with the failing layer id.
RunReport run_model(const Model& model, const ValidatedConfig& cfg, const MappingTable* mappings, const Tensor& input,
                    const RunOptions& options = {});

struct VerifyRow {
    std::string layer_id;
    bool ok = false;
    std::size_t mismatches = 0;
    double max_abs_diff = 0.0;
};

/// Recomputes each layer with reference kernels from the previous layer's
/// retained output. Integer mode compares exactly, real mode with a 1e-4
/// relative tolerance. Layers whose output was dropped report ok=false.
std::vector<VerifyRow> verify_against_reference(const Model& model, const Tensor& input, const RunReport& run);

/// Fixed-column CSV of a run, with a TOTAL row.
std::string report_csv(const RunReport& report);

}  // namespace accelmap

#include "accelmap/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "accelmap/error.hpp"
#include "accelmap/tensorops.hpp"

namespace accelmap {

namespace {

Dims matrix_dims(std::size_t r, std::size_t c) { return {r, c}; }

void expect_dims(const Tensor& t, const LoweringStep& step, const std::string& layer_id) {
    if (t.dims() != step.result) {
        throw SimulationError("layer '" + layer_id + "': step '" + step.describe() + "' produced " +
                              format_dims(t.dims()) + ", plan expected " + format_dims(step.result));
    }
}

std::size_t channel_count(const Shape& shape) {
    switch (shape.layout) {
        case Layout::nchw: return shape.dims.at(1);
        case Layout::nhwc: return shape.dims.at(3);
        default: return shape.dims.back();
    }
}

std::string resolve_blob(const Model& model, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute() || model.base_dir.empty()) return path;
    return (std::filesystem::path(model.base_dir) / p).string();
}

void plan_flexible_conv(const Layer& layer, LayerPlan& plan) {
    const auto& p = layer.conv();
    plan.entry = SimEntry::flexible_conv;
    if (layer.layout == Layout::nchw) {
        plan.steps.push_back({StepKind::transpose, "input", Layout::nchw, Layout::nhwc, {1, p.h, p.w, p.c}});
    }
    if (layer.kernel_layout == Layout::kcrs) {
        plan.steps.push_back({StepKind::transpose, "kernel", Layout::kcrs, Layout::rsck, kernel_dims(p, Layout::rsck)});
    }
    plan.steps.push_back({StepKind::simulate, "output", Layout::nhwc, Layout::npqk,
                          {1, p.p, p.q, p.k}});
    if (layer.layout == Layout::nchw) {
        plan.steps.push_back({StepKind::transpose, "output", Layout::npqk, Layout::nkpq, {1, p.k, p.p, p.q}});
        plan.steps.push_back({StepKind::retag, "output", Layout::nkpq, Layout::nchw, {1, p.k, p.p, p.q}});
    } else {
        plan.steps.push_back({StepKind::retag, "output", Layout::npqk, Layout::nhwc, {1, p.p, p.q, p.k}});
    }
}

void plan_gemm_conv(const Layer& layer, LayerPlan& plan) {
    const auto& p = layer.conv();
    const bool nchw = layer.layout == Layout::nchw;
    if ((nchw && layer.kernel_layout != Layout::kcrs) || (!nchw && layer.kernel_layout != Layout::rsck)) {
        throw SimulationError("layer '" + layer.id + "': GEMM lowering supports NCHW/KCRS or NHWC/RSCK, got " +
                              std::string(to_string(layer.layout)) + "/" + std::string(to_string(layer.kernel_layout)));
    }
    const std::size_t taps = p.c_per_group() * p.r * p.s, pixels = p.p * p.q, kg = p.k_per_group();
    plan.groups = p.g;
    plan.order = nchw ? GemmOrder::weight_x_data : GemmOrder::data_x_weight;
    plan.steps.push_back({StepKind::im2col, "input", layer.layout, Layout::matrix,
                          nchw ? matrix_dims(taps, pixels) : matrix_dims(pixels, taps)});
    plan.steps.push_back({StepKind::kernel_matrix, "kernel", layer.kernel_layout, Layout::matrix,
                          nchw ? matrix_dims(kg, taps) : matrix_dims(taps, kg)});
    plan.steps.push_back({StepKind::simulate, "output", Layout::matrix, Layout::matrix,
                          nchw ? matrix_dims(kg, pixels) : matrix_dims(pixels, kg)});
    plan.steps.push_back({StepKind::scatter, "output", Layout::matrix, layer.layout,
                          nchw ? Dims{1, p.k, p.p, p.q} : Dims{1, p.p, p.q, p.k}});
}

SimEntry gemm_entry(ControllerType controller) {
    return controller == ControllerType::sparse_gemm ? SimEntry::sparse_gemm : SimEntry::systolic_gemm;
}

SimReport run_gemm(SimEntry entry, const Tensor& a, const Tensor& b, const ValidatedConfig& cfg) {
    return entry == SimEntry::sparse_gemm ? simulate_sparse_gemm(a, b, cfg) : simulate_systolic_gemm(a, b, cfg);
}

LayerExecution execute_flexible_conv(const Layer& layer, const LayerPlan& plan, const ValidatedConfig& cfg,
                                     const Tensor& input, const Tensor& kernel) {
    const Tensor* in = &input;
    const Tensor* kern = &kernel;
    Tensor lowered_in, lowered_kern;
    LayerExecution ex;
    for (const auto& step : plan.steps) {
        if (step.kind == StepKind::transpose && step.operand == "input") {
            lowered_in = transpose(*in, step.from, step.to);
            expect_dims(lowered_in, step, layer.id);
            in = &lowered_in;
        } else if (step.kind == StepKind::transpose && step.operand == "kernel") {
            lowered_kern = transpose(*kern, step.from, step.to);
            expect_dims(lowered_kern, step, layer.id);
            kern = &lowered_kern;
        } else if (step.kind == StepKind::simulate) {
            ex.sim = simulate_flexible_conv(*in, *kern, layer.conv(), std::get<ConvMapping>(*plan.mapping), cfg);
            expect_dims(ex.sim.output, step, layer.id);
        } else if (step.kind == StepKind::transpose) {
            ex.sim.output = transpose(ex.sim.output, step.from, step.to);
            expect_dims(ex.sim.output, step, layer.id);
        } else if (step.kind == StepKind::retag) {
            ex.sim.output = std::move(ex.sim.output).reinterpret(step.result, step.to);
        }
    }
    return ex;
}

LayerExecution execute_gemm_conv(const Layer& layer, const LayerPlan& plan, const ValidatedConfig& cfg,
                                 const Tensor& input, const Tensor& kernel) {
    const auto& p = layer.conv();
    const auto& scatter_step = plan.steps.back();
    Tensor output(scatter_step.result, layer.layout);
    LayerExecution ex;
    double busy = 0.0;
    for (std::size_t g = 0; g < p.g; ++g) {
        Tensor patches = im2col(input, p, g);
        expect_dims(patches, plan.steps[0], layer.id);
        Tensor weights = kernel_matrix(kernel, p, g);
        expect_dims(weights, plan.steps[1], layer.id);
        SimReport part = plan.order == GemmOrder::weight_x_data ? run_gemm(plan.entry, weights, patches, cfg)
                                                                 : run_gemm(plan.entry, patches, weights, cfg);
        expect_dims(part.output, plan.steps[2], layer.id);
        scatter_group_output(part.output, p, g, output);
        ex.sim.cycles += part.cycles;
        ex.sim.psums += part.psums;
        ex.sim.macs += part.macs;
        ex.sim.skipped_macs += part.skipped_macs;
        ex.sim.iterations += part.iterations;
        busy += part.utilization * static_cast<double>(part.cycles);
    }
    ex.sim.utilization = ex.sim.cycles == 0 ? 0.0 : busy / static_cast<double>(ex.sim.cycles);
    expect_dims(output, scatter_step, layer.id);
    ex.sim.output = std::move(output);
    return ex;
}

bool close_enough(float a, float b, ValueMode mode) {
    if (a == b) return true;
    if (mode == ValueMode::integer) return false;
    const double diff = std::fabs(static_cast<double>(a) - b);
    return diff <= 1e-4 * std::max(std::fabs(static_cast<double>(a)), std::fabs(static_cast<double>(b)));
}

Tensor reference_layer(const Model& model, const Layer& layer, const Tensor& input, const WeightPolicy& policy) {
    const auto weights = layer_weights(model, layer, policy);
    switch (layer.kind) {
        case OpKind::conv2d: {
            const Layout want = layer.layout == Layout::nchw ? Layout::kcrs : Layout::rsck;
            if (weights->layout() == want) return conv2d_ref(input, *weights, layer.conv());
            return conv2d_ref(input, transpose(*weights, weights->layout(), want), layer.conv());
        }
        case OpKind::dense: return dense_ref(input, *weights);
        default:
            return fallback_op(layer, input, weights ? weights->data() : std::span<const float>{});
    }
}

}  // namespace

std::string_view to_string(StepKind kind) {
    switch (kind) {
        case StepKind::transpose: return "transpose";
        case StepKind::retag: return "retag";
        case StepKind::im2col: return "im2col";
        case StepKind::kernel_matrix: return "kernel_matrix";
        case StepKind::simulate: return "simulate";
        case StepKind::scatter: return "scatter";
        case StepKind::fallback: return "fallback";
    }
    return "?";
}

std::string_view to_string(SimEntry entry) {
    switch (entry) {
        case SimEntry::none: return "none";
        case SimEntry::flexible_conv: return "flexible_conv";
        case SimEntry::flexible_fc: return "flexible_fc";
        case SimEntry::sparse_gemm: return "sparse_gemm";
        case SimEntry::systolic_gemm: return "systolic_gemm";
    }
    return "?";
}

std::string LoweringStep::describe() const {
    std::string text = std::string(to_string(kind)) + " " + operand;
    if (kind == StepKind::transpose || kind == StepKind::retag) {
        text += " " + std::string(to_string(from)) + "->" + std::string(to_string(to));
    }
    return text + " " + format_dims(result);
}

LayerPlan plan_layer(const Layer& layer, const ValidatedConfig& cfg, const MappingTable* mappings) {
    if (!layer.output_shape) {
        throw ModelError("layer '" + layer.id + "': shapes are not inferred");
    }
    LayerPlan plan;
    plan.layer_id = layer.id;
    plan.op = layer.kind;
    plan.offload = layer.offloadable();
    if (!plan.offload) {
        plan.steps.push_back({StepKind::fallback, "output", layer.input_shape->layout, layer.output_shape->layout,
                              layer.output_shape->dims});
        return plan;
    }

    if (cfg.controller() == ControllerType::flex_linear) {
        if (mappings) {
            if (auto it = mappings->find(layer.id); it != mappings->end()) plan.mapping = it->second;
        }
        if (!plan.mapping) {
            plan.mapping = default_mapping(layer);
            plan.default_mapping = true;
        }
        validate_mapping(*plan.mapping, layer, cfg);
        if (layer.kind == OpKind::conv2d) {
            plan_flexible_conv(layer, plan);
        } else {
            const auto& p = layer.fc();
            plan.entry = SimEntry::flexible_fc;
            plan.steps.push_back({StepKind::simulate, "output", Layout::matrix, Layout::matrix, {1, p.out_features}});
        }
        return plan;
    }

    plan.entry = gemm_entry(cfg.controller());
    if (layer.kind == OpKind::conv2d) {
        plan_gemm_conv(layer, plan);
    } else {
        const auto& p = layer.fc();
        plan.order = GemmOrder::data_x_weight;
        plan.steps.push_back({StepKind::simulate, "output", Layout::matrix, Layout::matrix, {1, p.out_features}});
    }
    return plan;
}

ExecutionPlan plan_model(const Model& model, const ValidatedConfig& cfg, const MappingTable* mappings) {
    ExecutionPlan plan;
    for (const auto& layer : model.layers) {
        plan.layers.push_back(plan_layer(layer, cfg, mappings));
        if (plan.layers.back().default_mapping) {
            plan.notices.push_back({Severity::notice, layer.id, "default-mapping",
                                    "no mapping supplied; using " + format_mapping(*plan.layers.back().mapping)});
        }
    }
    return plan;
}

std::optional<Tensor> layer_weights(const Model& model, const Layer& layer, const WeightPolicy& policy) {
    Dims dims;
    Layout layout = Layout::matrix;
    Layout generate_as = Layout::matrix;
    switch (layer.kind) {
        case OpKind::conv2d:
            layout = layer.kernel_layout;
            generate_as = Layout::kcrs;
            dims = kernel_dims(layer.conv(), Layout::kcrs);
            break;
        case OpKind::dense: dims = {layer.fc().in_features, layer.fc().out_features}; break;
        case OpKind::bias_add:
            if (!layer.input_shape) throw ModelError("layer '" + layer.id + "': shapes are not inferred");
            dims = {1, channel_count(*layer.input_shape)};
            break;
        default: return std::nullopt;
    }

    Tensor weights;
    if (layer.weights_path) {
        const Dims stored = layer.kind == OpKind::conv2d ? kernel_dims(layer.conv(), layout) : dims;
        weights = Tensor(stored, layout, read_blob(resolve_blob(model, *layer.weights_path), element_count(stored)));
    } else {
        // Generated in canonical order so a model computes the same function
        // whichever kernel layout it declares.
        weights = Tensor(dims, generate_as);
        fill_values(weights.data(), {policy.seed, hash_string(layer.id)}, policy.mode, ValueRole::weight);
        if (generate_as != layout) weights = transpose(weights, generate_as, layout);
    }
    if (policy.prune_percent > 0 && layer.offloadable()) {
        prune_values(weights.data(), policy.prune_percent, mix_seed(policy.seed, hash_string(layer.id) + 1));
    }
    return weights;
}

Shape model_input_shape(const Model& model) {
    if (model.input) return *model.input;
    if (model.layers.empty() || !model.layers.front().input_shape) {
        throw ModelError("model '" + model.name + "' has no resolvable input shape; declare 'input'");
    }
    return *model.layers.front().input_shape;
}

Tensor generate_input(const Model& model, std::uint64_t seed) {
    const Shape shape = model_input_shape(model);
    if (shape.layout == Layout::nhwc) {
        const Dims& d = shape.dims;
        Tensor canonical({d[0], d[3], d[1], d[2]}, Layout::nchw);
        fill_values(canonical.data(), {seed, hash_string("input")}, model.value_mode, ValueRole::activation);
        return transpose(canonical, Layout::nchw, Layout::nhwc);
    }
    Tensor t(shape.dims, shape.layout);
    fill_values(t.data(), {seed, hash_string("input")}, model.value_mode, ValueRole::activation);
    return t;
}

LayerExecution execute_layer(const Layer& layer, const LayerPlan& plan, const ValidatedConfig& cfg,
                             const Tensor& input, const std::optional<Tensor>& weights) {
    if (!plan.offload) {
        LayerExecution ex;
        ex.sim.output = fallback_op(layer, input, weights ? weights->data() : std::span<const float>{});
        expect_dims(ex.sim.output, plan.steps.back(), layer.id);
        return ex;
    }
    if (!weights) throw SimulationError("layer '" + layer.id + "': missing weights");
    switch (plan.entry) {
        case SimEntry::flexible_conv: return execute_flexible_conv(layer, plan, cfg, input, *weights);
        case SimEntry::flexible_fc: {
            LayerExecution ex;
            ex.sim = simulate_flexible_fc(input, *weights, layer.fc(), std::get<FcMapping>(*plan.mapping), cfg);
            expect_dims(ex.sim.output, plan.steps.back(), layer.id);
            return ex;
        }
        case SimEntry::sparse_gemm:
        case SimEntry::systolic_gemm:
            if (layer.kind == OpKind::conv2d) return execute_gemm_conv(layer, plan, cfg, input, *weights);
            {
                LayerExecution ex;
                ex.sim = run_gemm(plan.entry, input, *weights, cfg);
                expect_dims(ex.sim.output, plan.steps.back(), layer.id);
                return ex;
            }
        case SimEntry::none: break;
    }
    throw SimulationError("layer '" + layer.id + "': no simulator for this plan");
}

RunReport run_model(const Model& model, const ValidatedConfig& cfg, const MappingTable* mappings, const Tensor& input,
                    const RunOptions& options) {
    const Shape expected = model_input_shape(model);
    if (input.dims() != expected.dims || input.layout() != expected.layout) {
        throw ShapeError("model input must be " + format_shape(expected) + ", got " + format_dims(input.dims()) + " " +
                         std::string(to_string(input.layout())));
    }
    const ExecutionPlan plan = plan_model(model, cfg, mappings);

    RunReport report;
    report.notices = plan.notices;
    report.weights.seed = options.seed.value_or(model.seed);
    report.weights.mode = model.value_mode;
    if (cfg.controller() == ControllerType::sparse_gemm) report.weights.prune_percent = cfg.config().sparsity_ratio;

    Tensor current = input;
    double busy = 0.0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const Layer& layer = model.layers[i];
        LayerExecution ex;
        try {
            ex = execute_layer(layer, plan.layers[i], cfg, current, layer_weights(model, layer, report.weights));
        } catch (const Error& e) {
            const std::string where = "layer '" + layer.id + "'";
            const std::string what = e.what();
            if (what.find(where) != std::string::npos) throw;
            throw SimulationError(where + ": " + what);
        }
        LayerResult row;
        row.layer_id = layer.id;
        row.op = layer.kind;
        row.offloaded = plan.layers[i].offload;
        row.cycles = ex.sim.cycles;
        row.psums = ex.sim.psums;
        row.macs = ex.sim.macs;
        row.skipped_macs = ex.sim.skipped_macs;
        row.utilization = ex.sim.utilization;
        report.totals.cycles += row.cycles;
        report.totals.psums += row.psums;
        report.totals.macs += row.macs;
        report.totals.skipped_macs += row.skipped_macs;
        busy += row.utilization * static_cast<double>(row.cycles);

        current = std::move(ex.sim.output);
        if (!options.low_memory) row.output = current;
        report.layers.push_back(std::move(row));
    }
    report.totals.utilization = report.totals.cycles == 0 ? 0.0 : busy / static_cast<double>(report.totals.cycles);
    report.output = std::move(current);
    return report;
}

std::vector<VerifyRow> verify_against_reference(const Model& model, const Tensor& input, const RunReport& run) {
    std::vector<VerifyRow> rows;
    const Tensor* previous = &input;
    for (std::size_t i = 0; i < model.layers.size() && i < run.layers.size(); ++i) {
        const Layer& layer = model.layers[i];
        const LayerResult& result = run.layers[i];
        VerifyRow row;
        row.layer_id = layer.id;
        if (previous && result.output) {
            const Tensor expected = reference_layer(model, layer, *previous, run.weights);
            const Tensor& actual = *result.output;
            if (expected.dims() == actual.dims()) {
                const auto a = actual.data();
                const auto b = expected.data();
                for (std::size_t j = 0; j < a.size(); ++j) {
                    if (!close_enough(a[j], b[j], model.value_mode)) ++row.mismatches;
                    row.max_abs_diff = std::max(row.max_abs_diff, std::fabs(static_cast<double>(a[j]) - b[j]));
                }
                row.ok = row.mismatches == 0;
            } else {
                row.mismatches = expected.size();
            }
        }
        previous = result.output ? &*result.output : nullptr;
        rows.push_back(row);
    }
    return rows;
}

std::string report_csv(const RunReport& report) {
    std::ostringstream out;
    char util[32];
    out << "layer_id,op,offloaded,cycles,psums,macs,skipped_macs,utilization\n";
    for (const auto& row : report.layers) {
        std::snprintf(util, sizeof util, "%.6f", row.utilization);
        out << row.layer_id << ',' << to_string(row.op) << ',' << (row.offloaded ? "true" : "false") << ','
            << row.cycles << ',' << row.psums << ',' << row.macs << ',' << row.skipped_macs << ',' << util << '\n';
    }
    std::snprintf(util, sizeof util, "%.6f", report.totals.utilization);
    out << "TOTAL,,," << report.totals.cycles << ',' << report.totals.psums << ',' << report.totals.macs << ','
        << report.totals.skipped_macs << ',' << util << '\n';
    return out.str();
}

}  // namespace accelmap

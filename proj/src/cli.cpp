#include "accelmap/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <ostream>

#include "accelmap/error.hpp"
#include "accelmap/runner.hpp"

namespace accelmap {

namespace {

struct RawOptions {
    std::string objective;
    std::string strategy;
    std::string policy = "divisors";
    std::optional<std::uint64_t> budget;
    std::optional<std::uint64_t> early_stop;
    std::size_t population = TunerOptions{}.population;
    double mutation_rate = TunerOptions{}.mutation_rate;
    std::string values;
};

void add_tuner_flags(CLI::App* sub, Command& cmd, RawOptions& raw, bool objective_required) {
    auto* obj = sub->add_option("--objective", raw.objective, "cycles or psums");
    if (objective_required) obj->required();
    sub->add_option("--tuner", raw.strategy, "grid, random or ga");
    sub->add_option("--budget", raw.budget, "maximum trials per layer");
    sub->add_option("--early-stop", raw.early_stop, "trials without improvement before halting");
    sub->add_option("--seed", cmd.seed, "search seed");
    sub->add_option("--policy", raw.policy, "tile candidates: divisors or full");
    sub->add_option("--population", raw.population, "genetic population size");
    sub->add_option("--mutation-rate", raw.mutation_rate, "genetic per-tile mutation probability");
}

std::vector<std::string> split_values(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto end = comma == std::string::npos ? text.size() : comma;
        std::string item = text.substr(start, end - start);
        if (item.empty()) throw UsageError("--values contains an empty entry");
        out.push_back(std::move(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    out.close();
    if (!out) throw IoError("failed writing '" + path + "'");
}

void print_diagnostics(std::ostream& err, const std::vector<Diagnostic>& diags) {
    for (const auto& d : diags) err << to_string(d) << '\n';
}

Model load_inferred_model(const std::string& path) { return infer_shapes(load_model(path)); }

ValidatedConfig load_validated_config(const std::string& path, std::ostream& err) {
    const HardwareConfig raw = load_config_file(path);
    ValidatedConfig cfg = validate_config(raw);
    print_diagnostics(err, cfg.notices());
    return cfg;
}

void guard_grid(const Model& model, const ValidatedConfig& cfg, const TunerOptions& options) {
    if (options.strategy != Strategy::grid) return;
    for (const auto& layer : model.layers) {
        if (!layer.offloadable()) continue;
        const auto size = enumerate_space(layer, cfg, options.policy).size();
        if (size > kGridSpaceLimit) {
            throw UsageError("grid search refused: layer '" + layer.id + "' has " + std::to_string(size) +
                             " mappings (limit " + std::to_string(kGridSpaceLimit) +
                             "); use --tuner random|ga or --policy divisors");
        }
    }
}

int report_failures(const ModelTuning& tuning, std::ostream& err) {
    for (const auto& [id, message] : tuning.failures) err << "error: layer '" << id << "': " << message << '\n';
    return tuning.failures.empty() ? 0 : MappingError("").exit_code();
}

int run_validate(const Command& cmd, std::ostream& err) {
    const HardwareConfig raw = load_config_file(cmd.config);
    const auto diags = check_config(raw);
    print_diagnostics(err, diags);
    const bool ok = std::none_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.severity == Severity::error; });
    if (ok) {
        err << "config valid\n";
        return 0;
    }
    return ConfigError("").exit_code();
}

int run_run(const Command& cmd, std::ostream& err) {
    const Model model = load_inferred_model(cmd.model);
    const ValidatedConfig cfg = load_validated_config(cmd.config, err);
    std::optional<MappingTable> mappings;
    int status = 0;
    if (!cmd.mappings.empty()) {
        mappings = load_mappings(cmd.mappings, model);
    } else if (cmd.tune_first) {
        if (cfg.controller() != ControllerType::flex_linear) {
            err << "notice: --tune-first ignored; mappings only apply to FLEX_LINEAR\n";
        } else {
            TunerOptions options = cmd.tuner;
            options.seed = cmd.seed.value_or(model.seed);
            const ModelTuning tuning = tune_model(model, cfg, cmd.objective, options);
            status = report_failures(tuning, err);
            mappings = tuning.mappings();
        }
    }
    const std::uint64_t seed = cmd.seed.value_or(model.seed);
    Tensor input;
    if (!cmd.input.empty()) {
        const Shape shape = model_input_shape(model);
        input = Tensor(shape.dims, shape.layout, read_blob(cmd.input, element_count(shape.dims)));
    } else {
        input = generate_input(model, seed);
    }
    RunOptions options;
    options.seed = seed;
    options.low_memory = cmd.low_memory && !cmd.verify;
    const RunReport report = run_model(model, cfg, mappings ? &*mappings : nullptr, input, options);
    print_diagnostics(err, report.notices);
    write_text(cmd.output, report_csv(report));

    if (cmd.verify) {
        const auto rows = verify_against_reference(model, input, report);
        std::size_t failed = 0;
        for (const auto& row : rows) {
            if (row.ok) continue;
            ++failed;
            err << "error: verification failed for layer '" << row.layer_id << "': " << row.mismatches
                << " mismatching elements, max abs diff " << row.max_abs_diff << '\n';
        }
        if (failed > 0) return SimulationError("").exit_code();
        err << "verified " << rows.size() << " layers against reference kernels\n";
    }
    return status;
}

int run_tune(const Command& cmd, std::ostream& err) {
    const Model model = load_inferred_model(cmd.model);
    const ValidatedConfig cfg = load_validated_config(cmd.config, err);
    TunerOptions options = cmd.tuner;
    options.seed = cmd.seed.value_or(model.seed);
    guard_grid(model, cfg, options);
    const ModelTuning tuning = tune_model(model, cfg, cmd.objective, options);
    const int status = report_failures(tuning, err);
    for (const auto& [id, result] : tuning.results) {
        err << "layer " << id << ": " << to_string(cmd.objective) << " " << result.best_cost << " after "
            << result.trials_evaluated << " of " << result.space_size << " mappings"
            << (result.converged ? " (early stop)" : "") << '\n';
    }
    const std::string mapping_text = serialize_mappings(tuning.mappings(), model);
    const std::string history_text = cmd.history.empty() ? std::string() : history_csv(tuning);
    write_text(cmd.output, mapping_text);
    if (!cmd.history.empty()) write_text(cmd.history, history_text);
    return status;
}

int run_sweep(const Command& cmd, std::ostream& err) {
    const Model model = load_inferred_model(cmd.model);
    const HardwareConfig base = load_config_file(cmd.config);
    std::optional<MappingTable> fixed;
    if (!cmd.mappings.empty()) fixed = load_mappings(cmd.mappings, model);
    TunerOptions options = cmd.tuner;
    options.seed = cmd.seed.value_or(model.seed);
    const auto rows = sweep_hardware(model, cmd.layer, base, cmd.param, cmd.values, cmd.objective, options,
                                     fixed ? &*fixed : nullptr);
    for (const auto& row : rows) {
        if (row.status != "ok") err << "warning: " << row.param << "=" << row.value << ": " << row.message << '\n';
    }
    write_text(cmd.output, sweep_csv(rows));
    return 0;
}

}  // namespace

Command parse_args(const std::vector<std::string>& args) {
    Command cmd;
    RawOptions raw;
    CLI::App app{"Dataflow mapping exploration on simulated DNN accelerators", "accelmap"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "show help for every subcommand");

    auto* validate = app.add_subcommand("validate", "check a hardware configuration");
    validate->add_option("-c,--config", cmd.config, "hardware config JSON")->required();

    auto* run = app.add_subcommand("run", "execute a model and write a per-layer CSV report");
    run->add_option("-m,--model", cmd.model, "model JSON")->required();
    run->add_option("-c,--config", cmd.config, "hardware config JSON")->required();
    auto* run_maps = run->add_option("--mappings", cmd.mappings, "mapping file");
    run->add_option("--input", cmd.input, "float32 little-endian input blob");
    run->add_option("--seed", cmd.seed, "seed for generated input and weights");
    run->add_flag("--verify", cmd.verify, "check every layer against reference kernels");
    run->add_flag("--low-memory", cmd.low_memory, "drop per-layer outputs once consumed");
    auto* tune_first = run->add_flag("--tune-first", cmd.tune_first, "tune mappings (psums, ga) before running");
    tune_first->excludes(run_maps);
    run->add_option("-o,--output", cmd.output, "report CSV")->required();

    auto* tune = app.add_subcommand("tune", "search per-layer mappings");
    tune->add_option("-m,--model", cmd.model, "model JSON")->required();
    tune->add_option("-c,--config", cmd.config, "hardware config JSON")->required();
    add_tuner_flags(tune, cmd, raw, true);
    tune->get_option("--tuner")->required();
    tune->add_option("-o,--output", cmd.output, "mapping file to write")->required();
    tune->add_option("--history", cmd.history, "tuning history CSV");

    auto* sweep = app.add_subcommand("sweep", "tune across values of one hardware parameter");
    sweep->add_option("-m,--model", cmd.model, "model JSON")->required();
    sweep->add_option("-c,--config", cmd.config, "base hardware config JSON")->required();
    sweep->add_option("--param", cmd.param, "hardware parameter name")->required();
    sweep->add_option("--values", raw.values, "comma-separated values")->required();
    sweep->add_option("--layer", cmd.layer, "restrict to one layer id");
    sweep->add_option("--mappings", cmd.mappings, "simulate these mappings instead of tuning");
    add_tuner_flags(sweep, cmd, raw, true);
    sweep->add_option("-o,--output", cmd.output, "sweep CSV")->required();

    std::vector<const char*> argv{"accelmap"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        cmd.help = true;
        const CLI::App* target = &app;
        for (auto* sub : {validate, run, tune, sweep}) {
            if (sub->parsed()) target = sub;
        }
        cmd.help_text = target->help();
        return cmd;
    } catch (const CLI::CallForAllHelp&) {
        cmd.help = true;
        cmd.help_text = app.help("", CLI::AppFormatMode::All);
        return cmd;
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (validate->parsed()) cmd.action = Action::validate;
    if (run->parsed()) cmd.action = Action::run;
    if (tune->parsed()) cmd.action = Action::tune;
    if (sweep->parsed()) cmd.action = Action::sweep;

    try {
        if (!raw.objective.empty()) cmd.objective = parse_objective(raw.objective);
        cmd.tuner.strategy = raw.strategy.empty() ? (cmd.action == Action::run ? Strategy::genetic : Strategy::grid)
                                                  : parse_strategy(raw.strategy);
        cmd.tuner.policy = parse_space_policy(raw.policy);
        cmd.tuner.budget = raw.budget;
        cmd.tuner.early_stop = raw.early_stop;
        cmd.tuner.population = raw.population;
        cmd.tuner.mutation_rate = raw.mutation_rate;
        check_options(cmd.tuner);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (cmd.action == Action::sweep) cmd.values = split_values(raw.values);
    return cmd;
}

int execute(const Command& cmd, std::ostream& err) {
    switch (cmd.action) {
        case Action::validate: return run_validate(cmd, err);
        case Action::run: return run_run(cmd, err);
        case Action::tune: return run_tune(cmd, err);
        case Action::sweep: return run_sweep(cmd, err);
    }
    return 1;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        const Command cmd = parse_args(args);
        if (cmd.help) {
            out << cmd.help_text;
            return 0;
        }
        return execute(cmd, err);
    } catch (const Error& e) {
        err << "error[" << e.exit_code() << "]: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        err << "error[4]: " << e.what() << '\n';
        return 4;
    }
}

}  // namespace accelmap

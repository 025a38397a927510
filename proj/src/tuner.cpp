#include "accelmap/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "accelmap/error.hpp"
#include "accelmap/runner.hpp"
#include "accelmap/simulator.hpp"
#include "accelmap/tensorops.hpp"

namespace accelmap {

namespace {

constexpr std::uint64_t kDefaultSampleBudget = 1000;

void require_shapes(const Layer& layer) {
    if (!layer.output_shape) throw ModelError("layer '" + layer.id + "': shapes are not inferred");
}

/// Cost function of one layer with operands generated once and shared
/// read-only between worker threads.
class Evaluator {
public:
    Evaluator(const Layer& layer, const ValidatedConfig& cfg, Objective objective)
        : layer_(layer), cfg_(cfg), objective_(objective) {
        if (objective_ != Objective::cycles) return;
        if (cfg.controller() != ControllerType::flex_linear) {
            throw ConfigError("the cycles objective of a mapping needs a FLEX_LINEAR configuration");
        }
        const ValueStream source{0x7475, hash_string(layer.id)};
        if (layer.kind == OpKind::conv2d) {
            const auto& p = layer.conv();
            input_ = Tensor(conv_input_shape(p, Layout::nhwc).dims, Layout::nhwc);
            weights_ = Tensor(kernel_dims(p, Layout::rsck), Layout::rsck);
        } else if (layer.kind == OpKind::dense) {
            input_ = Tensor::matrix(1, layer.fc().in_features);
            weights_ = Tensor::matrix(layer.fc().in_features, layer.fc().out_features);
        } else {
            throw MappingError("layer '" + layer.id + "' (" + std::string(to_string(layer.kind)) + ") has no mapping");
        }
        fill_values(input_.data(), source, ValueMode::integer, ValueRole::activation);
        fill_values(weights_.data(), {source.seed, source.stream + 1}, ValueMode::integer, ValueRole::weight);
    }

    std::uint64_t operator()(const Mapping& m) const {
        if (objective_ == Objective::psums) {
            validate_mapping(m, layer_, cfg_);
            return count_psums(layer_, m);
        }
        if (layer_.kind == OpKind::conv2d) {
            return simulate_flexible_conv(input_, weights_, layer_.conv(), std::get<ConvMapping>(m), cfg_).cycles;
        }
        return simulate_flexible_fc(input_, weights_, layer_.fc(), std::get<FcMapping>(m), cfg_).cycles;
    }

private:
    const Layer& layer_;
    const ValidatedConfig& cfg_;
    Objective objective_;
    Tensor input_, weights_;
};

/// Evaluates points on `threads` workers with a fixed stride partition;
/// results land at their input position.
std::vector<std::uint64_t> evaluate_all(const Evaluator& eval, const MappingSpace& space,
                                        const std::vector<std::uint64_t>& points, std::size_t threads) {
    std::vector<std::uint64_t> costs(points.size());
    std::vector<std::exception_ptr> errors(points.size());
    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t i = first; i < points.size(); i += stride) {
            try {
                costs[i] = eval(space.at(points[i]));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, points.size()));
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return costs;
}

class Search {
public:
    Search(const MappingSpace& space, const Evaluator& eval, const TunerOptions& options)
        : space_(space), eval_(eval), early_stop_(options.early_stop), threads_(resolve_parallelism(options.parallelism)) {
        const std::uint64_t fallback =
            options.strategy == Strategy::grid ? space.size() : std::min(space.size(), kDefaultSampleBudget);
        budget_ = std::min(options.budget.value_or(fallback), space.size());
        result_.space_size = space.size();
    }

    bool done() const noexcept { return done_; }
    bool visited(std::uint64_t index) const { return costs_.count(index) != 0; }
    std::uint64_t remaining() const noexcept { return budget_ - result_.trials_evaluated; }
    std::uint64_t cost_of(std::uint64_t index) const { return costs_.at(index); }

    /// Evaluates the unvisited points of `points` in order; stops at the
    /// budget or when early stopping triggers.
    void submit(const std::vector<std::uint64_t>& points) {
        std::vector<std::uint64_t> fresh;
        std::unordered_set<std::uint64_t> seen;
        for (auto p : points) {
            if (fresh.size() >= remaining()) break;
            if (!visited(p) && seen.insert(p).second) fresh.push_back(p);
        }
        if (fresh.empty()) return;
        const auto costs = evaluate_all(eval_, space_, fresh, threads_);
        for (std::size_t i = 0; i < fresh.size() && !done_; ++i) record(fresh[i], costs[i]);
    }

    void finish() {
        if (result_.history.empty()) {
            throw MappingError("mapping search evaluated no trials");
        }
        result_.best_mapping = space_.at(best_index_);
    }

    TuneResult take() { return std::move(result_); }

private:
    void record(std::uint64_t index, std::uint64_t cost) {
        costs_.emplace(index, cost);
        const bool first = result_.history.empty();
        if (first || cost < result_.best_cost || (cost == result_.best_cost && index < best_index_)) {
            if (first || cost < result_.best_cost) stale_ = 0;
            result_.best_cost = cost;
            best_index_ = index;
        } else {
            ++stale_;
        }
        Trial trial;
        trial.trial_index = result_.trials_evaluated++;
        trial.space_index = index;
        trial.mapping = space_.at(index);
        trial.cost = cost;
        trial.best_so_far = result_.best_cost;
        result_.history.push_back(std::move(trial));
        if (result_.trials_evaluated >= budget_) {
            done_ = true;
        } else if (early_stop_ && stale_ >= *early_stop_) {
            done_ = true;
            result_.converged = true;
        }
    }

    const MappingSpace& space_;
    const Evaluator& eval_;
    std::optional<std::uint64_t> early_stop_;
    std::size_t threads_;
    std::uint64_t budget_ = 0;
    TuneResult result_;
    std::uint64_t best_index_ = 0;
    std::uint64_t stale_ = 0;
    bool done_ = false;
    std::unordered_map<std::uint64_t, std::uint64_t> costs_;
};

std::size_t chunk_size(std::size_t threads) { return std::max<std::size_t>(64, threads * 16); }

/// Up to `count` distinct indices below `size` not yet visited, in draw order.
std::vector<std::uint64_t> draw_unvisited(std::mt19937_64& rng, std::uint64_t size, std::uint64_t count,
                                          const Search& search) {
    std::vector<std::uint64_t> out;
    if (count == 0) return out;
    std::uniform_int_distribution<std::uint64_t> pick(0, size - 1);
    std::unordered_set<std::uint64_t> taken;
    // Rejection first; when the space is nearly exhausted fall back to a
    // scan from a random start so the draw always terminates.
    for (std::uint64_t attempts = 0; out.size() < count && attempts < 32 * count; ++attempts) {
        const auto i = pick(rng);
        if (!search.visited(i) && taken.insert(i).second) out.push_back(i);
    }
    if (out.size() < count) {
        const auto start = pick(rng);
        for (std::uint64_t k = 0; k < size && out.size() < count; ++k) {
            const auto i = (start + k) % size;
            if (!search.visited(i) && taken.insert(i).second) out.push_back(i);
        }
    }
    return out;
}

void run_grid(Search& search, const MappingSpace& space, std::size_t threads) {
    const std::size_t chunk = chunk_size(threads);
    std::vector<std::uint64_t> points;
    for (std::uint64_t first = 0; first < space.size() && !search.done(); first += chunk) {
        points.clear();
        for (std::uint64_t i = first; i < std::min<std::uint64_t>(space.size(), first + chunk); ++i) points.push_back(i);
        search.submit(points);
    }
}

void run_random(Search& search, const MappingSpace& space, std::uint64_t seed, std::size_t threads) {
    std::mt19937_64 rng(seed);
    if (space.size() <= (std::uint64_t{1} << 22)) {
        // Partial Fisher-Yates: sampling without replacement.
        std::vector<std::uint64_t> order(space.size());
        std::iota(order.begin(), order.end(), std::uint64_t{0});
        const std::size_t chunk = chunk_size(threads);
        for (std::size_t pos = 0; pos < order.size() && !search.done();) {
            const std::size_t end = std::min(order.size(), pos + chunk);
            for (std::size_t i = pos; i < end; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
                std::swap(order[i], order[pick(rng)]);
            }
            search.submit({order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(end)});
            pos = end;
        }
        return;
    }
    while (!search.done()) {
        search.submit(draw_unvisited(rng, space.size(), std::min<std::uint64_t>(chunk_size(threads), search.remaining()),
                                     search));
    }
}

class Genetic {
public:
    Genetic(Search& search, const MappingSpace& space, const TunerOptions& options)
        : search_(search), space_(space), options_(options), rng_(options.seed) {}

    void run() {
        // A quarter of the budget at most, so tight budgets still see several generations.
        const std::uint64_t cap = std::min<std::uint64_t>(options_.population, std::max<std::uint64_t>(4, search_.remaining() / 4));
        const std::size_t pop_size =
            static_cast<std::size_t>(std::max<std::uint64_t>(2, std::min<std::uint64_t>(cap, space_.size())));
        population_ = draw_unvisited(rng_, space_.size(), pop_size, search_);
        search_.submit(population_);
        const std::size_t elites =
            std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(options_.elite_fraction * pop_size)), 1, pop_size);

        while (!search_.done()) {
            rank_population();
            std::vector<std::uint64_t> next(population_.begin(),
                                            population_.begin() + static_cast<std::ptrdiff_t>(std::min(elites, population_.size())));
            std::vector<std::uint64_t> children;
            while (next.size() + children.size() < pop_size) children.push_back(breed());

            bool any_new = std::any_of(children.begin(), children.end(), [&](auto c) { return !search_.visited(c); });
            if (!any_new) {
                // Converged onto visited points; inject unexplored ones.
                children = draw_unvisited(rng_, space_.size(), pop_size - next.size(), search_);
                if (children.empty()) break;
            }
            search_.submit(children);
            for (auto c : children) {
                if (search_.visited(c)) next.push_back(c);
            }
            population_ = std::move(next);
        }
    }

private:
    bool better(std::uint64_t a, std::uint64_t b) const {
        const auto ca = search_.cost_of(a), cb = search_.cost_of(b);
        return ca != cb ? ca < cb : a < b;
    }

    void rank_population() {
        std::sort(population_.begin(), population_.end(), [&](auto a, auto b) { return better(a, b); });
        population_.erase(std::unique(population_.begin(), population_.end()), population_.end());
    }

    std::uint64_t tournament() {
        std::uniform_int_distribution<std::size_t> pick(0, population_.size() - 1);
        std::uint64_t best = population_[pick(rng_)];
        for (int round = 1; round < 3; ++round) {
            const auto other = population_[pick(rng_)];
            if (better(other, best)) best = other;
        }
        return best;
    }

    std::vector<std::size_t> genes_of(std::uint64_t index) const {
        const auto tiles = tile_values(space_.at(index));
        std::vector<std::size_t> genes(tiles.size());
        for (std::size_t axis = 0; axis < tiles.size(); ++axis) {
            const auto& list = space_.candidates()[axis];
            genes[axis] = static_cast<std::size_t>(std::lower_bound(list.begin(), list.end(), tiles[axis]) - list.begin());
        }
        return genes;
    }

    std::uint64_t breed() {
        const auto a = genes_of(tournament());
        const auto b = genes_of(tournament());
        std::bernoulli_distribution coin(0.5), mutate(options_.mutation_rate);
        std::vector<std::size_t> child(a.size());
        for (std::size_t axis = 0; axis < a.size(); ++axis) {
            child[axis] = coin(rng_) ? a[axis] : b[axis];
            const auto& list = space_.candidates()[axis];
            if (list.size() > 1 && mutate(rng_)) {
                std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
                child[axis] = pick(rng_);
            }
        }
        // Repair: shrink the largest tile until the footprint fits.
        std::vector<std::size_t> tiles(child.size());
        auto refresh = [&] {
            std::uint64_t product = 1;
            for (std::size_t axis = 0; axis < child.size(); ++axis) {
                tiles[axis] = space_.candidates()[axis][child[axis]];
                product *= tiles[axis];
            }
            return product;
        };
        while (refresh() > space_.budget()) {
            const auto widest = std::max_element(tiles.begin(), tiles.end()) - tiles.begin();
            --child[static_cast<std::size_t>(widest)];
        }
        return space_.index_of(space_.from_tiles(tiles));
    }

    Search& search_;
    const MappingSpace& space_;
    const TunerOptions& options_;
    std::mt19937_64 rng_;
    std::vector<std::uint64_t> population_;
};

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<const Layer*> selected_layers(const Model& model, const std::string& layer_id) {
    std::vector<const Layer*> out;
    if (!layer_id.empty()) {
        const Layer* layer = model.find(layer_id);
        if (!layer) throw ModelError("model has no layer '" + layer_id + "'");
        if (!layer->offloadable()) throw ModelError("layer '" + layer_id + "' is not conv2d/dense");
        out.push_back(layer);
        return out;
    }
    for (const auto& layer : model.layers) {
        if (layer.offloadable()) out.push_back(&layer);
    }
    return out;
}

/// Cycles of a layer on a GEMM fabric, where the mapping is internal.
std::uint64_t gemm_layer_cycles(const Model& model, const Layer& layer, const ValidatedConfig& cfg) {
    const LayerPlan plan = plan_layer(layer, cfg);
    Tensor input(layer.input_shape->dims, layer.input_shape->layout);
    fill_values(input.data(), {model.seed, hash_string(layer.id) + 2}, model.value_mode, ValueRole::activation);
    WeightPolicy policy{model.seed, model.value_mode, 0};
    if (cfg.controller() == ControllerType::sparse_gemm) policy.prune_percent = cfg.config().sparsity_ratio;
    return execute_layer(layer, plan, cfg, input, layer_weights(model, layer, policy)).sim.cycles;
}

}  // namespace

std::string_view to_string(Objective objective) { return objective == Objective::cycles ? "cycles" : "psums"; }

std::string_view to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::grid: return "grid";
        case Strategy::random: return "random";
        case Strategy::genetic: return "genetic";
    }
    return "?";
}

Objective parse_objective(std::string_view text) {
    if (text == "cycles") return Objective::cycles;
    if (text == "psums") return Objective::psums;
    throw ConfigError("unknown objective '" + std::string(text) + "' (expected cycles or psums)");
}

Strategy parse_strategy(std::string_view text) {
    if (text == "grid") return Strategy::grid;
    if (text == "random") return Strategy::random;
    if (text == "genetic" || text == "ga") return Strategy::genetic;
    throw ConfigError("unknown tuner '" + std::string(text) + "' (expected grid, random or ga)");
}

void check_options(const TunerOptions& options) {
    std::vector<Diagnostic> errors;
    auto fail = [&](const char* field, const std::string& message) {
        errors.push_back({Severity::error, field, "range", message});
    };
    if (options.budget && *options.budget == 0) fail("budget", "budget must be at least 1");
    if (options.early_stop && *options.early_stop == 0) fail("early_stop", "early stop must be at least 1");
    if (!(options.mutation_rate > 0.0 && options.mutation_rate < 1.0)) fail("mutation_rate", "must lie in (0, 1)");
    if (!(options.elite_fraction >= 0.0 && options.elite_fraction < 1.0)) fail("elite_fraction", "must lie in [0, 1)");
    if (options.population < 2) fail("population", "population must be at least 2");
    if (!errors.empty()) throw ConfigError("invalid tuner options: " + join_diagnostics(errors), errors);
}

std::size_t resolve_parallelism(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("BIFROST_PARALLELISM"); env && *env) {
        char* end = nullptr;
        const unsigned long long value = std::strtoull(env, &end, 10);
        if (*end != '\0' || value == 0 || value > 4096) {
            throw ConfigError("BIFROST_PARALLELISM must be a positive integer, got '" + std::string(env) + "'");
        }
        return static_cast<std::size_t>(value);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::uint64_t trial_cost(const Layer& layer, const Mapping& m, const ValidatedConfig& cfg, Objective objective) {
    require_shapes(layer);
    return Evaluator(layer, cfg, objective)(m);
}

namespace {

void require_flexible(const ValidatedConfig& cfg) {
    if (cfg.controller() != ControllerType::flex_linear) {
        throw ConfigError("mapping search needs a FLEX_LINEAR configuration, got " +
                          std::string(to_string(cfg.controller())));
    }
}

}  // namespace

TuneResult tune_layer(const Layer& layer, const ValidatedConfig& cfg, Objective objective, const TunerOptions& options) {
    check_options(options);
    require_shapes(layer);
    require_flexible(cfg);
    const MappingSpace space = enumerate_space(layer, cfg, options.policy);
    if (space.size() == 0) throw MappingError("layer '" + layer.id + "' has an empty mapping space");
    const Evaluator eval(layer, cfg, objective);
    Search search(space, eval, options);
    const std::size_t threads = resolve_parallelism(options.parallelism);
    switch (options.strategy) {
        case Strategy::grid: run_grid(search, space, threads); break;
        case Strategy::random: run_random(search, space, options.seed, threads); break;
        case Strategy::genetic: Genetic(search, space, options).run(); break;
    }
    search.finish();
    return search.take();
}

MappingTable ModelTuning::mappings() const {
    MappingTable table;
    for (const auto& [id, result] : results) table.emplace(id, result.best_mapping);
    return table;
}

ModelTuning tune_model(const Model& model, const ValidatedConfig& cfg, Objective objective, const TunerOptions& options) {
    check_options(options);
    require_flexible(cfg);
    ModelTuning tuning;
    for (const auto& layer : model.layers) {
        if (!layer.offloadable()) continue;
        TunerOptions local = options;
        local.seed = mix_seed(options.seed, hash_string(layer.id));
        try {
            tuning.results.emplace_back(layer.id, tune_layer(layer, cfg, objective, local));
        } catch (const Error& e) {
            tuning.failures.emplace_back(layer.id, e.what());
        }
    }
    return tuning;
}

std::string history_csv(const ModelTuning& tuning) {
    std::ostringstream out;
    out << "trial_index,layer_id,tiles,cost,best_so_far\n";
    for (const auto& [id, result] : tuning.results) {
        for (const auto& t : result.history) {
            out << t.trial_index << ',' << csv_field(id) << ',' << format_mapping(t.mapping) << ',' << t.cost << ','
                << t.best_so_far << '\n';
        }
    }
    return out.str();
}

std::vector<SweepRow> sweep_hardware(const Model& model, const std::string& layer_id, const HardwareConfig& base,
                                     const std::string& param, const std::vector<std::string>& values,
                                     Objective objective, const TunerOptions& options, const MappingTable* fixed) {
    if (!is_hardware_field(param)) throw ConfigError("unknown hardware parameter '" + param + "'");
    check_options(options);
    const auto layers = selected_layers(model, layer_id);
    std::vector<SweepRow> rows;
    for (const auto& value : values) {
        SweepRow row{param, value, "ok", std::nullopt, ""};
        std::optional<ValidatedConfig> cfg;
        try {
            cfg = validate_config(with_field(base, param, value));
        } catch (const ConfigError& e) {
            row.status = "invalid";
            row.message = e.diagnostics().empty() ? e.what() : join_diagnostics(e.diagnostics());
            rows.push_back(std::move(row));
            continue;
        }
        try {
            std::uint64_t total = 0;
            std::string detail;
            for (const Layer* layer : layers) {
                if (cfg->controller() != ControllerType::flex_linear) {
                    if (objective != Objective::cycles) {
                        throw ConfigError("the psums objective needs a FLEX_LINEAR configuration");
                    }
                    total += gemm_layer_cycles(model, *layer, *cfg);
                    continue;
                }
                if (fixed) {
                    const auto it = fixed->find(layer->id);
                    const Mapping m = it != fixed->end() ? it->second : default_mapping(*layer);
                    total += trial_cost(*layer, m, *cfg, objective);
                } else {
                    TunerOptions local = options;
                    local.seed = mix_seed(options.seed, hash_string(layer->id));
                    const TuneResult result = tune_layer(*layer, *cfg, objective, local);
                    total += result.best_cost;
                    if (layers.size() == 1) detail = format_mapping(result.best_mapping);
                }
            }
            row.best_cost = total;
            row.message = detail;
        } catch (const Error& e) {
            row.status = "error";
            row.message = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "param,value,status,best_cost,message\n";
    for (const auto& row : rows) {
        out << csv_field(row.param) << ',' << csv_field(row.value) << ',' << row.status << ',';
        if (row.best_cost) out << *row.best_cost;
        out << ',' << csv_field(row.message) << '\n';
    }
    return out.str();
}

}  // namespace accelmap

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "accelmap/error.hpp"
#include "accelmap/simulator.hpp"
#include "accelmap/tuner.hpp"
#include "support.hpp"

using namespace accelmap;

namespace {

Model fixture_model(const std::string& name) { return infer_shapes(load_model(oracle::fixture(name))); }

TunerOptions opts(Strategy s, std::size_t parallelism = 2) {
    TunerOptions o;
    o.strategy = s;
    o.parallelism = parallelism;
    return o;
}

// Brute-force optimum over the divisor space using the closed-form cycle
// oracle; ties keep the first (lexicographically smallest) point.
std::pair<std::vector<std::size_t>, std::uint64_t> brute_best_cycles(const Layer& layer, std::uint64_t ms) {
    const auto& p = layer.conv();
    const auto space =
        oracle::brute_space({p.r, p.s, p.c / p.g, p.k / p.g, p.g, 1, p.p, p.q}, 5, true, ms);
    std::pair<std::vector<std::size_t>, std::uint64_t> best{{}, UINT64_MAX};
    for (const auto& t : space) {
        const auto c = oracle::flex_conv_cycles(p, t, ms, 8, 8, false);
        if (c < best.second) best = {t, c};
    }
    return best;
}

void check_history(const TuneResult& r) {
    std::set<std::uint64_t> seen;
    std::uint64_t best = UINT64_MAX;
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        const Trial& t = r.history[i];
        CHECK(t.trial_index == i);
        CHECK(seen.insert(t.space_index).second);
        best = std::min(best, t.cost);
        CHECK(t.best_so_far == best);
    }
    CHECK(r.history.size() == r.trials_evaluated);
    CHECK(best == r.best_cost);
}

}  // namespace

TEST_CASE("grid on a small dense layer finds the full-depth tile") {
    const Model m = fixture_model("fc_small.json");
    const TuneResult r = tune_layer(m.layers[0], oracle::flex(32), Objective::psums, opts(Strategy::grid));
    CHECK(r.space_size == 12);
    CHECK(r.trials_evaluated == 12);
    CHECK(r.best_cost == 4);
    CHECK(std::get<FcMapping>(r.best_mapping).t_k == 6);
    CHECK(std::get<FcMapping>(r.best_mapping).t_s == 1);
    CHECK_FALSE(r.converged);
    check_history(r);
}

TEST_CASE("grid optimum equals the brute-force optimum") {
    std::mt19937_64 rng(211);
    for (int i = 0; i < 25; ++i) {
        const Layer layer = oracle::random_conv(rng, 10);
        const std::uint32_t ms = 8u << (i % 4);
        const TuneResult r = tune_layer(layer, oracle::flex(ms), Objective::cycles, opts(Strategy::grid));
        const auto [tiles, cost] = brute_best_cycles(layer, ms);
        CHECK(r.best_cost == cost);
        CHECK(tile_values(r.best_mapping) == tiles);
        check_history(r);
    }
}

TEST_CASE("random and genetic searches with full coverage match grid") {
    std::mt19937_64 rng(223);
    for (int i = 0; i < 10; ++i) {
        const Layer layer = oracle::random_conv(rng, 8);
        const auto cfg = oracle::flex(16);
        const TuneResult grid = tune_layer(layer, cfg, Objective::psums, opts(Strategy::grid));
        for (Strategy s : {Strategy::random, Strategy::genetic}) {
            TunerOptions o = opts(s);
            o.seed = static_cast<std::uint64_t>(i);
            o.budget = grid.space_size;
            const TuneResult r = tune_layer(layer, cfg, Objective::psums, o);
            CHECK(r.trials_evaluated == grid.space_size);
            CHECK(r.best_cost == grid.best_cost);
            CHECK(r.best_mapping == grid.best_mapping);
            check_history(r);
        }
    }
}

TEST_CASE("a one-point space is evaluated once") {
    ConvLayerParams p;
    p.r = p.s = p.c = p.k = p.h = p.w = 1;
    const Layer layer = oracle::conv_layer(p);
    for (Strategy s : {Strategy::grid, Strategy::random, Strategy::genetic}) {
        const TuneResult r = tune_layer(layer, oracle::flex(8), Objective::cycles, opts(s));
        CHECK(r.space_size == 1);
        CHECK(r.trials_evaluated == 1);
        CHECK(r.best_mapping == Mapping{ConvMapping{}});
        CHECK(r.best_cost == 6);
    }
}

TEST_CASE("budget limits unique trials") {
    const Layer layer = oracle::conv_layer(oracle::example_conv_params());
    for (Strategy s : {Strategy::grid, Strategy::random, Strategy::genetic}) {
        TunerOptions o = opts(s);
        o.budget = 7;
        const TuneResult r = tune_layer(layer, oracle::flex(64), Objective::psums, o);
        CHECK(r.trials_evaluated == 7);
        CHECK_FALSE(r.converged);
        check_history(r);
    }
}

TEST_CASE("early stopping halts before the budget") {
    const Layer layer = oracle::conv_layer(oracle::example_conv_params());
    for (Strategy s : {Strategy::grid, Strategy::random, Strategy::genetic}) {
        TunerOptions o = opts(s);
        o.budget = 100;
        o.early_stop = 5;
        const TuneResult r = tune_layer(layer, oracle::flex(64), Objective::psums, o);
        CHECK(r.trials_evaluated < 100);
        CHECK(r.converged);
        // The last five trials did not improve on the best seen before them.
        const auto& h = r.history;
        REQUIRE(h.size() > 5);
        CHECK(h[h.size() - 6].best_so_far == h.back().best_so_far);
    }
}

TEST_CASE("results do not depend on parallelism") {
    const Model m = fixture_model("alexnet.json");
    const Layer& layer = *m.find("conv2");
    for (Strategy s : {Strategy::random, Strategy::genetic}) {
        TunerOptions a = opts(s, 1), b = opts(s, 8);
        a.seed = b.seed = 99;
        a.budget = b.budget = 200;
        const TuneResult ra = tune_layer(layer, oracle::flex(128), Objective::psums, a);
        const TuneResult rb = tune_layer(layer, oracle::flex(128), Objective::psums, b);
        REQUIRE(ra.history.size() == rb.history.size());
        for (std::size_t i = 0; i < ra.history.size(); ++i) {
            CHECK(ra.history[i].space_index == rb.history[i].space_index);
            CHECK(ra.history[i].cost == rb.history[i].cost);
        }
        CHECK(ra.best_mapping == rb.best_mapping);
    }
}

TEST_CASE("different seeds explore different orders") {
    const Layer layer = oracle::conv_layer(oracle::example_conv_params());
    TunerOptions a = opts(Strategy::random), b = opts(Strategy::random);
    a.seed = 1;
    b.seed = 2;
    a.budget = b.budget = 20;
    const auto ra = tune_layer(layer, oracle::flex(64), Objective::psums, a);
    const auto rb = tune_layer(layer, oracle::flex(64), Objective::psums, b);
    bool differ = false;
    for (std::size_t i = 0; i < 20; ++i) differ |= ra.history[i].space_index != rb.history[i].space_index;
    CHECK(differ);
}

TEST_CASE("option checks") {
    const Layer layer = oracle::conv_layer(oracle::example_conv_params());
    TunerOptions o;
    o.budget = 0;
    CHECK_THROWS_AS(tune_layer(layer, oracle::flex(8), Objective::psums, o), ConfigError);
    o = {};
    o.population = 1;
    CHECK_THROWS_AS(check_options(o), ConfigError);
    o = {};
    o.mutation_rate = 1.5;
    CHECK_THROWS_AS(check_options(o), ConfigError);
    o = {};
    o.early_stop = 0;
    CHECK_THROWS_AS(check_options(o), ConfigError);
    CHECK_THROWS_AS(tune_layer(layer, oracle::sparse(64), Objective::psums, {}), ConfigError);
    CHECK_THROWS_AS(tune_layer(layer, oracle::systolic(4, 4), Objective::cycles, {}), ConfigError);
    CHECK(parse_strategy("ga") == Strategy::genetic);
    CHECK(parse_objective("cycles") == Objective::cycles);
    CHECK_THROWS_AS(parse_objective("watts"), ConfigError);
    CHECK(resolve_parallelism(3) == 3);
}

TEST_CASE("trial cost agrees with the simulator and the psum count") {
    std::mt19937_64 rng(227);
    for (int i = 0; i < 20; ++i) {
        const Layer layer = oracle::random_conv(rng, 10);
        const auto cfg = oracle::flex(32);
        const Mapping m = oracle::random_mapping(rng, layer, cfg);
        CHECK(trial_cost(layer, m, cfg, Objective::psums) == count_psums(layer, m));
        CHECK(trial_cost(layer, m, cfg, Objective::cycles) ==
              flexible_timing(layer.conv(), std::get<ConvMapping>(m), cfg).cycles);
    }
}

TEST_CASE("model tuning covers conv and dense layers only") {
    const Model m = fixture_model("alexnet.json");
    TunerOptions o = opts(Strategy::genetic, 4);
    o.budget = 30;
    const ModelTuning t = tune_model(m, oracle::flex(128), Objective::psums, o);
    CHECK(t.failures.empty());
    REQUIRE(t.results.size() == 8);
    CHECK(t.results.front().first == "conv1");
    CHECK(t.results.back().first == "fc8");

    const MappingTable table = parse_mappings(serialize_mappings(t.mappings(), m), m);
    CHECK(table.size() == 8);
    for (const auto& [id, mapping] : table) CHECK_NOTHROW(validate_mapping(mapping, *m.find(id), oracle::flex(128)));

    const std::string csv = history_csv(t);
    CHECK(csv.rfind("trial_index,layer_id,tiles,cost,best_so_far\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 8 * 30);

    const ModelTuning none = tune_model(fixture_model("relu_only.json"), oracle::flex(8), Objective::psums, o);
    CHECK(none.results.empty());
    CHECK(none.failures.empty());
}

TEST_CASE("grouped and dense layers of a small network all tune") {
    const Model m = fixture_model("small_cnn.json");
    TunerOptions o = opts(Strategy::random);
    o.budget = 5;
    const ModelTuning t = tune_model(m, oracle::flex(32), Objective::cycles, o);
    CHECK(t.failures.empty());
    CHECK(t.results.size() == 4);
}

TEST_CASE("hardware sweep") {
    const Model m = fixture_model("example_conv.json");
    HardwareConfig base = oracle::flex(8).config();
    const std::vector<std::string> values = {"8", "12", "16", "32", "64", "128"};
    const auto rows = sweep_hardware(m, "", base, "ms_size", values, Objective::cycles, opts(Strategy::grid));
    REQUIRE(rows.size() == values.size());
    CHECK(rows[1].status == "invalid");
    CHECK_FALSE(rows[1].best_cost);
    CHECK(rows[1].message.find("power") != std::string::npos);
    std::uint64_t prev = UINT64_MAX;
    for (const auto& row : rows) {
        if (row.status != "ok") continue;
        REQUIRE(row.best_cost);
        CHECK(*row.best_cost <= prev);
        prev = *row.best_cost;
    }

    const auto one = sweep_hardware(m, "conv", base, "ms_size", {"32"}, Objective::cycles, opts(Strategy::grid));
    const auto direct = tune_layer(m.layers[0], oracle::flex(32), Objective::cycles, opts(Strategy::grid));
    CHECK(one.at(0).best_cost == direct.best_cost);

    CHECK_THROWS_AS(sweep_hardware(m, "", base, "voltage", {"1"}, Objective::cycles, {}), ConfigError);

    const std::string csv = sweep_csv(rows);
    CHECK(csv.rfind("param,value,status,best_cost,message\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + values.size());
}

TEST_CASE("sweep with fixed mappings and non-flexible fabrics") {
    const Model m = fixture_model("small_cnn.json");
    const HardwareConfig base = oracle::sparse(64).config();
    const auto rows = sweep_hardware(m, "", base, "ms_size", {"32", "64", "128"}, Objective::cycles, {});
    for (const auto& row : rows) {
        CHECK(row.status == "ok");
        CHECK(row.best_cost > 0u);
    }
    CHECK(*rows[2].best_cost <= *rows[0].best_cost);
    const auto psums = sweep_hardware(m, "", base, "ms_size", {"64"}, Objective::psums, {});
    CHECK(psums[0].status == "error");
}

#include <doctest.h>

#include <random>

#include "accelmap/error.hpp"
#include "accelmap/simulator.hpp"
#include "accelmap/tensorops.hpp"
#include "support.hpp"

using namespace accelmap;

namespace {

Tensor ints(std::mt19937_64& rng, Dims dims, Layout layout, int lo = -2, int hi = 2) {
    Tensor t(dims, layout);
    const auto v = oracle::ints(rng, t.size(), lo, hi);
    std::copy(v.begin(), v.end(), t.data().begin());
    return t;
}

struct ConvCase {
    Layer layer;
    Tensor x, w;  // NHWC / RSCK
};

ConvCase conv_case(std::mt19937_64& rng, std::size_t max_dim = 16) {
    ConvCase c{oracle::random_conv(rng, max_dim), {}, {}};
    const auto& p = c.layer.conv();
    c.x = ints(rng, {1, p.h, p.w, p.c}, Layout::nhwc);
    c.w = ints(rng, kernel_dims(p, Layout::rsck), Layout::rsck, -1, 1);
    return c;
}

}  // namespace

TEST_CASE("flexible conv output equals the oracle for random layers and mappings") {
    std::mt19937_64 rng(101);
    for (int i = 0; i < 100; ++i) {
        const ConvCase c = conv_case(rng);
        const auto& p = c.layer.conv();
        const auto cfg = oracle::flex(8u << (i % 5), 1u << (i % 4), 1u << (i % 3), i % 2 == 0);
        const Mapping m = oracle::random_mapping(rng, c.layer, cfg);
        const SimReport r = simulate_flexible_conv(c.x, c.w, p, std::get<ConvMapping>(m), cfg);

        const auto x_nchw = oracle::nhwc_to_nchw(c.x.buffer(), p.h, p.w, p.c);
        const auto w_kcrs = oracle::rsck_to_kcrs(c.w.buffer(), p.r, p.s, p.c / p.g, p.k);
        const Tensor out = transpose(r.output, Layout::npqk, Layout::nkpq);
        CHECK(oracle::as_int(out.data()) == oracle::conv_nchw(x_nchw, w_kcrs, p));

        CHECK(r.cycles == oracle::flex_conv_cycles(p, tile_values(m), cfg.multipliers(), cfg.dn_bw(), cfg.rn_bw(),
                                                    cfg.accumulation_buffer()));
        CHECK(r.cycles == flexible_timing(p, std::get<ConvMapping>(m), cfg).cycles);
        CHECK(r.psums == count_psums(c.layer, m));
        CHECK(r.psums == oracle::conv_psums(p, tile_values(m)));
        CHECK(r.macs == p.macs());
        CHECK(r.skipped_macs == 0);
        CHECK(r.utilization == doctest::Approx(double(footprint(m)) / cfg.multipliers()));
        CHECK(r.utilization <= 1.0);
    }
}

TEST_CASE("1x1 conv on 8 multipliers costs 6 cycles") {
    ConvLayerParams p;
    p.r = p.s = p.c = p.k = p.h = p.w = 1;
    const Layer layer = oracle::conv_layer(p);
    Tensor x({1, 1, 1, 1}, Layout::nhwc, {2});
    Tensor w({1, 1, 1, 1}, Layout::rsck, {3});
    const auto cfg = oracle::flex(8, 8, 8);
    const SimReport r = simulate_flexible_conv(x, w, layer.conv(), ConvMapping{}, cfg);
    const FlexibleTiming t = flexible_timing(layer.conv(), ConvMapping{}, cfg);
    CHECK(t.iterations == 1);
    CHECK(t.distribution == 1);
    CHECK(t.reduction == 1);
    CHECK(t.tree_levels == 3);
    CHECK(r.cycles == 6);
    CHECK(r.output.buffer() == std::vector<float>{6});
}

TEST_CASE("doubling t_k halves the filter iterations") {
    ConvLayerParams p = oracle::example_conv_params();
    p.k = 8;
    const Layer layer = oracle::conv_layer(p);
    const auto cfg = oracle::flex(64, 64, 64, true);
    ConvMapping a;
    a.t_k = 1;
    ConvMapping b;
    b.t_k = 2;
    const auto ta = flexible_timing(layer.conv(), a, cfg), tb = flexible_timing(layer.conv(), b, cfg);
    CHECK(tb.iterations * 2 == ta.iterations);
    CHECK(ta.distribution == tb.distribution);
    CHECK(ta.reduction == tb.reduction);
    CHECK(tb.cycles < ta.cycles);
}

TEST_CASE("accumulation buffer removes read-back traffic") {
    const Layer layer = oracle::conv_layer(oracle::example_conv_params());
    ConvMapping m;
    m.t_k = 2;
    m.t_x = 4;
    const auto with = flexible_timing(layer.conv(), m, oracle::flex(8, 8, 2, true));
    const auto without = flexible_timing(layer.conv(), m, oracle::flex(8, 8, 2, false));
    CHECK(with.readback_penalty == 0);
    CHECK(without.readback_penalty == 4);  // ceil(16/2) - ceil(8/2)
    CHECK(without.cycles == with.cycles + (with.iterations - with.iterations / with.reduction_steps) * 4);
}

TEST_CASE("flexible fc output, psums and cycles") {
    std::mt19937_64 rng(103);
    for (int i = 0; i < 60; ++i) {
        const std::size_t in = 1 + rng() % 40, out = 1 + rng() % 40;
        const Layer layer = oracle::dense_layer(in, out);
        const auto cfg = oracle::flex(8u << (i % 4), 1u << (i % 5), 1u << (i % 3), i % 2 == 1);
        const Mapping m = oracle::random_mapping(rng, layer, cfg);
        const auto& fm = std::get<FcMapping>(m);
        Tensor x = ints(rng, {1, in}, Layout::matrix);
        Tensor w = ints(rng, {in, out}, Layout::matrix, -1, 1);
        const SimReport r = simulate_flexible_fc(x, w, layer.fc(), fm, cfg);
        CHECK(oracle::as_int(r.output.data()) == oracle::gemm(x.buffer(), w.buffer(), 1, in, out));
        CHECK(r.psums == count_psums(layer, m));
        CHECK(r.psums == oracle::fc_psums(in, out, {fm.t_s, fm.t_n, fm.t_k}));
        CHECK(r.cycles == oracle::flex_fc_cycles(in, out, {fm.t_s, fm.t_n, fm.t_k}, cfg.multipliers(), cfg.dn_bw(),
                                                 cfg.rn_bw(), cfg.accumulation_buffer()));
        CHECK(r.macs == in * out);
        const std::uint64_t iters = oracle::cdiv(out, fm.t_s) * oracle::cdiv(in, fm.t_k);
        const std::uint64_t red = oracle::cdiv(fm.t_s, cfg.rn_bw());
        const std::uint64_t per = oracle::cdiv(fm.t_s * fm.t_k + fm.t_k, cfg.dn_bw()) + 1 + oracle::log2_ceil(cfg.multipliers()) + red;
        const std::uint64_t extra = cfg.accumulation_buffer() ? 0 : oracle::cdiv(2 * fm.t_s, cfg.rn_bw()) - red;
        CHECK(r.cycles == iters * per + (iters - oracle::cdiv(out, fm.t_s)) * extra);
    }
    const Layer one = oracle::dense_layer(1, 1);
    const SimReport r = simulate_flexible_fc(Tensor({1, 1}, Layout::matrix, {2}), Tensor({1, 1}, Layout::matrix, {-1}),
                                             one.fc(), FcMapping{}, oracle::flex(8));
    CHECK(r.iterations == 1);
    CHECK(r.macs == 1);
    CHECK(r.output.buffer() == std::vector<float>{-2});
}

TEST_CASE("fc mapping orientation changes cycles") {
    const Layer layer = oracle::dense_layer(64, 64);
    const auto cfg = oracle::flex(16, 4, 4);
    const auto a = flexible_timing(layer.fc(), FcMapping{1, 1, 16}, cfg).cycles;
    const auto b = flexible_timing(layer.fc(), FcMapping{16, 1, 1}, cfg).cycles;
    MESSAGE("t_s=1,t_k=16: " << a << " cycles; t_s=16,t_k=1: " << b << " cycles");
    CHECK(a != b);
}

TEST_CASE("count_psums examples") {
    const Layer fc = oracle::dense_layer(6, 4);
    CHECK(count_psums(fc, FcMapping{1, 1, 2}) == 12);
    CHECK(count_psums(fc, FcMapping{1, 1, 6}) == 4);
    CHECK(count_psums(oracle::conv_layer(oracle::example_conv_params()), ConvMapping{}) == 2304);
    CHECK_THROWS_AS(count_psums(fc, FcMapping{1, 1, 7}), MappingError);
}

TEST_CASE("flexible simulator rejects wrong controllers and bad operands") {
    const Layer layer = oracle::conv_layer(oracle::example_conv_params());
    const auto& p = layer.conv();
    Tensor x({1, 10, 10, 2}, Layout::nhwc), w(kernel_dims(p, Layout::rsck), Layout::rsck);
    CHECK_THROWS_AS(simulate_flexible_conv(x, w, p, ConvMapping{}, oracle::sparse(64)), SimulationError);
    CHECK_THROWS_AS(simulate_flexible_conv(Tensor({1, 2, 10, 10}, Layout::nchw), w, p, ConvMapping{}, oracle::flex(8)),
                    SimulationError);
    ConvMapping big;
    big.t_x = 8;
    big.t_y = 8;
    CHECK_THROWS_AS(simulate_flexible_conv(x, w, p, big, oracle::flex(8)), MappingError);
}

TEST_CASE("sparse GEMM") {
    std::mt19937_64 rng(107);
    Tensor a = ints(rng, {8, 8}, Layout::matrix, 1, 3), b = ints(rng, {8, 8}, Layout::matrix, 1, 3);
    const auto cfg = oracle::sparse(64, 16, 16);
    const SimReport dense = simulate_sparse_gemm(a, b, cfg);
    CHECK(dense.macs == 512);
    CHECK(dense.cycles == 8 + 128 / 16 + 64 / 16);
    CHECK(oracle::as_int(dense.output.data()) == oracle::gemm(a.buffer(), b.buffer(), 8, 8, 8));

    const SimReport zero = simulate_sparse_gemm(a, Tensor::matrix(8, 8), cfg);
    CHECK(zero.macs == 0);
    CHECK(zero.skipped_macs == 512);
    CHECK(zero.utilization == 0.0);
    CHECK(zero.output.buffer() == std::vector<float>(64, 0.0f));

    for (int i = 0; i < 40; ++i) {
        const std::size_t m = 1 + rng() % 20, k = 1 + rng() % 20, n = 1 + rng() % 20;
        Tensor x = ints(rng, {m, k}, Layout::matrix), y = ints(rng, {k, n}, Layout::matrix, -1, 1);
        const SimReport r = simulate_sparse_gemm(x, y, oracle::sparse(8u << (i % 4)));
        CHECK(oracle::as_int(r.output.data()) == oracle::gemm(x.buffer(), y.buffer(), m, k, n));
        std::uint64_t effective = 0;
        for (std::size_t i2 = 0; i2 < m; ++i2)
            for (std::size_t t = 0; t < k; ++t)
                for (std::size_t j = 0; j < n; ++j) effective += x.at(i2, t) != 0 && y.at(t, j) != 0;
        CHECK(r.macs == effective);
        CHECK(r.macs + r.skipped_macs == m * k * n);
        CHECK(r.utilization <= 1.0);
    }
    CHECK_THROWS_AS(simulate_sparse_gemm(a, Tensor::matrix(7, 8), cfg), SimulationError);
    CHECK_THROWS_AS(simulate_sparse_gemm(a, b, oracle::flex(8)), SimulationError);
}

TEST_CASE("half-zeroed weights roughly halve sparse compute cycles") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor a({32, 64}, Layout::matrix), b({64, 32}, Layout::matrix);
        fill_values(a.data(), {seed, 1}, ValueMode::real, ValueRole::activation);
        fill_values(b.data(), {seed, 2}, ValueMode::real, ValueRole::weight);
        const auto cfg = oracle::sparse(64);
        const auto full = simulate_sparse_gemm(a, b, cfg);
        prune_values(b.data(), 50, seed);
        const auto half = simulate_sparse_gemm(a, b, cfg);
        const double ratio = double(oracle::cdiv(half.macs, 64)) / double(oracle::cdiv(full.macs, 64));
        CHECK(ratio >= 0.4);
        CHECK(ratio <= 0.6);
    }
}

TEST_CASE("systolic GEMM") {
    Tensor one({1, 1}, Layout::matrix, {3});
    CHECK(simulate_systolic_gemm(one, one, oracle::systolic(2, 2)).cycles == 4);
    std::mt19937_64 rng(109);
    Tensor a = ints(rng, {4, 8}, Layout::matrix), b = ints(rng, {8, 4}, Layout::matrix);
    const SimReport r = simulate_systolic_gemm(a, b, oracle::systolic(4, 4));
    CHECK(r.cycles == 15);
    CHECK(r.psums == 4 * 4 * 8);
    CHECK(r.utilization == doctest::Approx(128.0 / (15 * 16)));
    for (int i = 0; i < 40; ++i) {
        const std::size_t m = 1 + rng() % 20, k = 1 + rng() % 20, n = 1 + rng() % 20;
        Tensor x = ints(rng, {m, k}, Layout::matrix), y = ints(rng, {k, n}, Layout::matrix);
        const std::uint32_t rows = 1u << (i % 4), cols = 1u << ((i / 4) % 4);
        const SimReport s = simulate_systolic_gemm(x, y, oracle::systolic(rows, cols));
        CHECK(oracle::as_int(s.output.data()) == oracle::gemm(x.buffer(), y.buffer(), m, k, n));
        CHECK(s.cycles == oracle::cdiv(m, rows) * oracle::cdiv(n, cols) * (k + rows + cols - 1));
        CHECK(s.macs == m * k * n);
        CHECK(s.skipped_macs == 0);
    }
    CHECK_THROWS_AS(simulate_systolic_gemm(a, b, oracle::sparse(8)), SimulationError);
    CHECK_THROWS_AS(simulate_systolic_gemm(a, a, oracle::systolic(4, 4)), SimulationError);
}

TEST_CASE("simulation is deterministic") {
    std::mt19937_64 rng(113);
    const ConvCase c = conv_case(rng);
    const auto cfg = oracle::flex(32);
    const Mapping m = oracle::random_mapping(rng, c.layer, cfg);
    const auto a = simulate_flexible_conv(c.x, c.w, c.layer.conv(), std::get<ConvMapping>(m), cfg);
    const auto b = simulate_flexible_conv(c.x, c.w, c.layer.conv(), std::get<ConvMapping>(m), cfg);
    CHECK(a.cycles == b.cycles);
    CHECK(a.psums == b.psums);
    CHECK(a.output == b.output);
}

TEST_CASE("optimal cycles fall and the spread widens as multipliers grow") {
    const Layer layer = oracle::conv_layer(oracle::example_conv_params());
    std::uint64_t prev_best = UINT64_MAX;
    double prev_ratio = 0;
    for (std::uint32_t ms = 8; ms <= 128; ms *= 2) {
        const auto cfg = oracle::flex(ms);
        const auto space = enumerate_space(layer, cfg, SpacePolicy::divisors);
        std::uint64_t best = UINT64_MAX, worst = 0;
        for (std::uint64_t i = 0; i < space.size(); ++i) {
            const auto c = flexible_timing(layer.conv(), std::get<ConvMapping>(space.at(i)), cfg).cycles;
            best = std::min(best, c);
            worst = std::max(worst, c);
        }
        CHECK(best <= prev_best);
        CHECK(double(worst) / double(best) > prev_ratio);
        prev_best = best;
        prev_ratio = double(worst) / double(best);
    }
}

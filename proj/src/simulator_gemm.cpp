#include <algorithm>
#include <vector>

#include "accelmap/error.hpp"
#include "accelmap/kernels.hpp"
#include "accelmap/simulator.hpp"

namespace accelmap {

namespace {

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

void check_operands(const Tensor& a, const Tensor& b, const char* who) {
    if (a.layout() != Layout::matrix || b.layout() != Layout::matrix) {
        throw SimulationError(std::string(who) + ": operands must be matrices");
    }
    if (a.cols() != b.rows()) {
        throw SimulationError(std::string(who) + ": inner dimensions differ, " + format_dims(a.dims()) + " x " +
                              format_dims(b.dims()));
    }
}

}  // namespace

SimReport simulate_sparse_gemm(const Tensor& a, const Tensor& b, const ValidatedConfig& cfg) {
    if (cfg.controller() != ControllerType::sparse_gemm) {
        throw SimulationError("simulate_sparse_gemm needs a SPARSE_GEMM configuration, got " +
                              std::string(to_string(cfg.controller())));
    }
    check_operands(a, b, "simulate_sparse_gemm");
    const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
    const auto& kern = kernels::active();

    // A product survives only when both operands are nonzero, so the work is
    // the sum over k of nnz(column k of A) * nnz(row k of B).
    std::vector<std::uint64_t> col_nnz(K, 0);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) col_nnz[k] += a.at(i, k) != 0.0f;
    std::uint64_t effective = 0, nonzeros = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const std::uint64_t row_nnz = kern.count_nonzero(&b.data()[k * N], N);
        effective += col_nnz[k] * row_nnz;
        nonzeros += col_nnz[k] + row_nnz;
    }

    std::vector<double> acc(M * N, 0.0);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
            const float av = a.at(i, k);
            if (av == 0.0f) continue;
            kern.axpy_widen(&acc[i * N], av, &b.data()[k * N], N);
        }

    const std::uint64_t dense = std::uint64_t{M} * K * N;
    const std::uint64_t compute = ceil_div(effective, cfg.multipliers());
    SimReport report;
    report.macs = effective;
    report.skipped_macs = dense - effective;
    report.cycles = compute + ceil_div(nonzeros, cfg.dn_bw()) + ceil_div(std::uint64_t{M} * N, cfg.rn_bw());
    report.psums = std::uint64_t{M} * N * ceil_div(K, cfg.multipliers());
    report.utilization = compute == 0 ? 0.0 : static_cast<double>(effective) / (static_cast<double>(compute) * cfg.multipliers());
    report.iterations = compute;
    report.output = Tensor::matrix(M, N);
    kern.narrow(report.output.data().data(), acc.data(), acc.size());
    return report;
}

SimReport simulate_systolic_gemm(const Tensor& a, const Tensor& b, const ValidatedConfig& cfg) {
    if (cfg.controller() != ControllerType::systolic_os) {
        throw SimulationError("simulate_systolic_gemm needs a SYSTOLIC_OS configuration, got " +
                              std::string(to_string(cfg.controller())));
    }
    check_operands(a, b, "simulate_systolic_gemm");
    const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
    const std::size_t rows = cfg.ms_rows(), cols = cfg.ms_cols();
    const auto& kern = kernels::active();

    // Each rows x cols output block stays resident while K operand pairs
    // stream through; fill and drain add rows + cols - 1 cycles per block.
    std::vector<double> acc(M * N, 0.0);
    std::uint64_t blocks = 0;
    for (std::size_t i0 = 0; i0 < M; i0 += rows) {
        const std::size_t il = std::min(rows, M - i0);
        for (std::size_t j0 = 0; j0 < N; j0 += cols) {
            const std::size_t jl = std::min(cols, N - j0);
            ++blocks;
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t i = i0; i < i0 + il; ++i)
                    kern.axpy_widen(&acc[i * N + j0], a.at(i, k), &b.data()[k * N + j0], jl);
        }
    }

    const std::uint64_t dense = std::uint64_t{M} * K * N;
    SimReport report;
    report.cycles = blocks * (K + rows + cols - 1);
    report.macs = dense;
    report.skipped_macs = 0;
    report.psums = dense;
    report.utilization = report.cycles == 0 ? 0.0
                                            : static_cast<double>(dense) / (static_cast<double>(report.cycles) * rows * cols);
    report.iterations = blocks;
    report.output = Tensor::matrix(M, N);
    kern.narrow(report.output.data().data(), acc.data(), acc.size());
    return report;
}

}  // namespace accelmap

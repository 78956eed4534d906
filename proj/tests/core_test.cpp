#include <gtest/gtest.h>

#include "adabatch/core.hpp"
#include "adabatch/errors.hpp"
#include "support.hpp"

using namespace adabatch;
using testsupport::batch_of;
using testsupport::brute_stats;
using testsupport::Gen;
using testsupport::rel_err;

namespace {

const StatsRequest kAll{true, true, true, true};

}  // namespace

TEST(BatchStats, IdenticalRowsHaveZeroVariance) {
    const auto s = compute_batch_stats(batch_of({{2, 0}, {2, 0}, {2, 0}}), kAll);
    EXPECT_EQ(s.mean_grad, (Vector{2, 0}));
    EXPECT_EQ(*s.norm_var, 0.0);
    EXPECT_EQ(*s.ip_var, 0.0);
    EXPECT_EQ(*s.ortho_var, 0.0);
}

TEST(BatchStats, TwoRowHandExample) {
    const auto s = compute_batch_stats(batch_of({{1, 0}, {3, 0}}), true, false, false);
    EXPECT_EQ(s.mean_grad, (Vector{2, 0}));
    EXPECT_DOUBLE_EQ(s.mean_grad_sq_norm, 4.0);
    EXPECT_DOUBLE_EQ(*s.norm_var, 2.0);
    EXPECT_DOUBLE_EQ(*s.ip_var, 8.0);
    EXPECT_FALSE(s.ortho_var.has_value());
    EXPECT_FALSE(s.coord_var.has_value());
}

TEST(BatchStats, SymmetricCancellation) {
    const auto g = batch_of({{1, 1}, {-1, -1}});
    const auto s = compute_batch_stats(g, false, false, false);
    EXPECT_EQ(s.mean_grad, (Vector{0, 0}));
    EXPECT_DOUBLE_EQ(*s.norm_var, 4.0);
    EXPECT_THROW(compute_batch_stats(g, false, true, false), ZeroMeanGradient);
}

TEST(BatchStats, OrthogonalResidualHandExample) {
    const auto s = compute_batch_stats(batch_of({{1, 1}, {1, -1}}), kAll);
    EXPECT_EQ(s.mean_grad, (Vector{1, 0}));
    EXPECT_DOUBLE_EQ(*s.ortho_var, 2.0);
}

TEST(BatchStats, SingleRowRejectedWhenVarianceRequested) {
    const auto g = batch_of({{1, 2}});
    EXPECT_THROW(compute_batch_stats(g, kAll), DegenerateBatch);
    const auto mean_only = compute_batch_stats(g, StatsRequest{false, false, false, false});
    EXPECT_EQ(mean_only.mean_grad, (Vector{1, 2}));
    EXPECT_FALSE(mean_only.norm_var.has_value());
}

TEST(BatchStats, EmptyBatchRejected) {
    PerSampleGradBatch g;
    g.grads = Matrix(0, 3);
    EXPECT_THROW(compute_batch_stats(g, StatsRequest{false, false, false, false}), EmptyBatch);
}

TEST(BatchStats, MatchesBruteForceOracle) {
    Gen gen(11);
    for (int trial = 0; trial < 300; ++trial) {
        const auto g = gen.grad_batch(gen.integer(2, 64), gen.integer(1, 32));
        const auto s = compute_batch_stats(g, kAll);
        const auto o = brute_stats(g.grads);
        EXPECT_LT(rel_err(*s.norm_var, o.norm_var), 1e-9);
        EXPECT_LT(rel_err(*s.ip_var, o.ip_var), 1e-9);
        // In one dimension every residual is exactly zero; only rounding is left.
        if (g.dim() == 1)
            EXPECT_LE(*s.ortho_var, 1e-9 * *s.norm_var);
        else
            EXPECT_LT(rel_err(*s.ortho_var, o.ortho_var), 1e-9);
        EXPECT_LT(rel_err(s.mean_grad_sq_norm, o.mean_sq), 1e-12);
        for (std::size_t j = 0; j < g.dim(); ++j) EXPECT_LT(rel_err((*s.coord_var)[j], o.coord_var[j]), 1e-9);
    }
}

TEST(BatchStats, CoordVarSumsToNormVar) {
    Gen gen(12);
    for (int trial = 0; trial < 200; ++trial) {
        const auto g = gen.grad_batch(gen.integer(2, 40), gen.integer(1, 20));
        const auto s = compute_batch_stats(g, kAll);
        double total = 0;
        for (double c : *s.coord_var) {
            EXPECT_GE(c, 0.0);
            total += c;
        }
        EXPECT_LE(std::fabs(total - *s.norm_var), 1e-10 * std::max(1.0, *s.norm_var));
    }
}

TEST(BatchStats, ShiftInvariance) {
    Gen gen(13);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = gen.grad_batch(gen.integer(2, 30), gen.integer(1, 10));
        const auto before = compute_batch_stats(g, true, false, true);
        std::vector<double> c(g.dim());
        for (double& v : c) v = gen.uniform(-50, 50);
        for (std::size_t i = 0; i < g.batch_size(); ++i)
            for (std::size_t j = 0; j < g.dim(); ++j) g.grads(i, j) += c[j];
        const auto after = compute_batch_stats(g, true, false, true);
        EXPECT_LT(rel_err(*after.norm_var, *before.norm_var), 1e-9);
        for (std::size_t j = 0; j < g.dim(); ++j)
            EXPECT_LE(std::fabs((*after.coord_var)[j] - (*before.coord_var)[j]),
                      1e-9 * std::max(1.0, (*before.coord_var)[j]));
    }
}

TEST(BatchStats, ScalingLaws) {
    Gen gen(14);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = gen.grad_batch(gen.integer(2, 30), gen.integer(1, 10));
        const auto before = compute_batch_stats(g, true, false, false);
        const double s = std::exp(gen.uniform(-4, 4));
        for (double& v : g.grads.data()) v *= s;
        const auto after = compute_batch_stats(g, true, false, false);
        EXPECT_LT(rel_err(*after.norm_var, *before.norm_var * s * s), 1e-8);
        EXPECT_LT(rel_err(*after.ip_var, *before.ip_var * s * s * s * s), 1e-8);
    }
}

TEST(StatsAccumulator, ChunkingMatchesSinglePass) {
    Gen gen(15);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = gen.grad_batch(gen.integer(2, 50), gen.integer(1, 8));
        const auto whole = compute_batch_stats(g, kAll);
        const std::size_t chunk = gen.integer(1, g.batch_size());
        auto feed = [&](auto&& fn) {
            for (std::size_t start = 0; start < g.batch_size(); start += chunk) {
                const std::size_t stop = std::min(g.batch_size(), start + chunk);
                Matrix part(stop - start, g.dim());
                for (std::size_t i = start; i < stop; ++i)
                    for (std::size_t j = 0; j < g.dim(); ++j) part(i - start, j) = g.grads(i, j);
                fn(part);
            }
        };
        StatsAccumulator acc(g.dim(), kAll);
        feed([&](const Matrix& m) { acc.add_mean_rows(m); });
        acc.finish_mean_pass();
        feed([&](const Matrix& m) { acc.add_deviation_rows(m); });
        const auto chunked = acc.finish();
        EXPECT_LT(rel_err(*chunked.norm_var, *whole.norm_var), 1e-12);
        EXPECT_LT(rel_err(*chunked.ip_var, *whole.ip_var), 1e-12);
        EXPECT_LT(rel_err(*chunked.ortho_var, *whole.ortho_var), 1e-12);
    }
}

TEST(StatsAccumulator, LargeOffsetStaysAccurate) {
    // Mean 1e8 with unit spread: a naive sum-of-squares formula loses every digit.
    Gen gen(16);
    auto g = gen.grad_batch(1000, 3);
    for (double& v : g.grads.data()) v += 1e8;
    const auto s = compute_batch_stats(g, true, false, true);
    const auto o = brute_stats(g.grads);
    EXPECT_LT(rel_err(*s.norm_var, o.norm_var), 1e-6);
}

TEST(VectorOps, DotAndNorm) {
    const Vector a{1, 2, 3};
    const Vector b{4, -5, 6};
    EXPECT_DOUBLE_EQ(dot(a, b), 12.0);
    EXPECT_DOUBLE_EQ(sq_norm(a), 14.0);
    EXPECT_TRUE(all_finite(a));
    EXPECT_FALSE(all_finite(Vector{1, std::nan("")}));
    EXPECT_FALSE(all_finite(Vector{INFINITY}));
}

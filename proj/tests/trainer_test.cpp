#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adabatch/errors.hpp"
#include "adabatch/trainer.hpp"
#include "support.hpp"

using namespace adabatch;
using testsupport::Gen;

namespace {

RunConfig blobs_config(std::uint64_t seed = 1) {
    RunConfig c;
    c.objective.kind = ObjectiveKind::logistic_multiclass;
    c.data.synthetic = SyntheticSpec{SyntheticKind::gaussian_blobs, 1000, 5, 2, 3, 1.5};
    c.data.val_fraction = 0.0;
    ControllerConfig cc;
    cc.eta = 0.2;
    cc.b_max = 1000;
    c.controller = cc;
    c.optimizer.kind = OptimizerKind::adagrad_norm;
    c.lr.peak = 0.05;
    c.b_init = 2;
    c.total_samples = 30000;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(SampleBatch, FullBatchWithoutReplacementCoversEveryIndex) {
    Rng rng(1);
    const IndexList idx = sample_batch(rng, 37, 37, Sampling::without_replacement);
    std::set<std::size_t> seen(idx.begin(), idx.end());
    EXPECT_EQ(seen.size(), 37u);
    EXPECT_EQ(*seen.rbegin(), 36u);
}

TEST(SampleBatch, DistinctWithoutReplacement) {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        const IndexList idx = sample_batch(rng, 50, 1 + t % 50, Sampling::without_replacement);
        EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), idx.size());
        for (auto i : idx) EXPECT_LT(i, 50u);
    }
}

TEST(SampleBatch, DeterministicForSeed) {
    Rng a(99), b(99);
    for (int t = 0; t < 20; ++t) {
        EXPECT_EQ(sample_batch(a, 1000, 64, Sampling::without_replacement),
                  sample_batch(b, 1000, 64, Sampling::without_replacement));
        EXPECT_EQ(sample_batch(a, 1000, 64, Sampling::with_replacement),
                  sample_batch(b, 1000, 64, Sampling::with_replacement));
    }
}

TEST(SampleBatch, WithReplacementIsUniform) {
    Rng rng(3);
    const IndexList idx = sample_batch(rng, 10, 100000, Sampling::with_replacement);
    std::vector<double> counts(10, 0.0);
    for (auto i : idx) counts[i] += 1;
    double chi2 = 0;
    for (double c : counts) chi2 += (c - 10000.0) * (c - 10000.0) / 10000.0;
    // Upper 0.001 quantile of chi-square with 9 degrees of freedom.
    EXPECT_LT(chi2, 27.877);
}

TEST(SampleBatch, OversizedBatchWithoutReplacementRejected) {
    Rng rng(4);
    EXPECT_THROW(sample_batch(rng, 5, 6, Sampling::without_replacement), ConfigError);
    EXPECT_EQ(sample_batch(rng, 5, 6, Sampling::with_replacement).size(), 6u);
}

TEST(Run, FixedBatchBudgetArithmetic) {
    RunConfig c = blobs_config();
    c.controller.reset();
    c.b_init = 16;
    c.total_samples = 160;
    const auto r = run(c);
    ASSERT_EQ(r.records.size(), 10u);
    EXPECT_EQ(r.records.back().samples, 160u);
    for (const auto& rec : r.records) {
        EXPECT_EQ(rec.batch_size, 16u);
        EXPECT_TRUE(std::isnan(rec.statistic));
        EXPECT_FALSE(rec.passed.has_value());
    }
}

TEST(Run, IdenticalGradientsKeepInitialBatch) {
    const Dataset data = testsupport::constant_dataset(200, 3, 2);
    LogisticObjective obj(3, 2);
    TrainData td{data, std::nullopt};
    for (auto kind : {ControllerKind::norm, ControllerKind::norm_coordinatewise, ControllerKind::inner_product,
                      ControllerKind::augmented_inner_product}) {
        RunConfig c = blobs_config();
        c.controller->kind = kind;
        c.controller->b_max = 200;
        c.b_init = 4;
        c.total_samples = 4000;
        const auto r = run(c, obj, td);
        ASSERT_EQ(r.records.size(), 1000u);
        for (const auto& rec : r.records) ASSERT_EQ(rec.batch_size, 4u) << to_string(kind);
    }
}

TEST(Run, BudgetMonotonicityAndConservation) {
    for (auto kind : {ControllerKind::norm, ControllerKind::augmented_inner_product}) {
        RunConfig c = blobs_config(5);
        c.controller->kind = kind;
        c.controller->theta = 0.3;
        c.controller->b_max = 300;
        TrainData td = prepare_data(c.data, c.seed);
        auto obj = make_objective(c.objective, td.train);

        Gen gen(6);
        std::set<std::uint64_t> spot;
        while (spot.size() < 10) spot.insert(gen.integer(1, 40));
        std::size_t checked = 0;
        const auto r = run(c, *obj, td, [&](const StepTrace& t) {
            if (!spot.count(t.record.step)) return;
            EXPECT_EQ(t.record.loss, batch_loss(*obj, t.x_before, td.train, t.batch));
            ++checked;
        });
        EXPECT_EQ(checked, 10u);

        std::uint64_t total = 0;
        for (std::size_t k = 0; k < r.records.size(); ++k) {
            total += r.records[k].batch_size;
            EXPECT_EQ(r.records[k].samples, total);
            if (k > 0) EXPECT_GE(r.records[k].batch_size, r.records[k - 1].batch_size);
        }
        EXPECT_GE(total, c.total_samples);
        EXPECT_LT(total, c.total_samples + c.controller->b_max);
    }
}

TEST(Run, ReplayIsIdentical) {
    const auto a = run(blobs_config(8));
    const auto b = run(blobs_config(8));
    EXPECT_EQ(a.records, b.records);
    EXPECT_EQ(a.final_params, b.final_params);
    const auto c = run(blobs_config(9));
    EXPECT_NE(a.final_params, c.final_params);
}

TEST(Run, SmallerEtaGivesLargerBatches) {
    RunConfig lo = blobs_config(10);
    lo.controller->eta = 0.1;
    RunConfig hi = lo;
    hi.controller->eta = 0.25;
    EXPECT_GT(run(lo).summary.avg_batch_size, run(hi).summary.avg_batch_size);
}

TEST(Run, ChunkedEvaluationMatchesInMemory) {
    RunConfig c = blobs_config(11);
    c.total_samples = 5000;
    c.controller->kind = ControllerKind::augmented_inner_product;
    c.controller->theta = 0.3;
    const auto whole = run(c);
    c.chunk_budget = 7;  // forces one or two rows per chunk
    const auto chunked = run(c);
    ASSERT_EQ(whole.records.size(), chunked.records.size());
    for (std::size_t k = 0; k < whole.records.size(); ++k) {
        EXPECT_EQ(whole.records[k].batch_size, chunked.records[k].batch_size);
        EXPECT_NEAR(whole.records[k].statistic, chunked.records[k].statistic,
                    1e-9 * std::fabs(whole.records[k].statistic));
    }
}

TEST(Run, TestEverySkipsIntermediateSteps) {
    RunConfig c = blobs_config(12);
    c.controller->test_every = 3;
    c.total_samples = 2000;
    const auto r = run(c);
    for (const auto& rec : r.records) EXPECT_EQ(std::isnan(rec.statistic), (rec.step - 1) % 3 != 0) << rec.step;
}

TEST(Run, ValidationMetricsAtCadenceAndEnd) {
    RunConfig c = blobs_config(13);
    c.data.val_fraction = 0.2;
    c.controller->b_max = 800;
    c.eval_every = 5;
    c.total_samples = 3000;
    const auto r = run(c);
    for (const auto& rec : r.records) {
        if (rec.step % 5 == 0 || rec.step == r.records.back().step) {
            ASSERT_TRUE(rec.val_acc.has_value());
            EXPECT_GE(*rec.val_acc, 0.0);
            EXPECT_LE(*rec.val_acc, 1.0);
        } else {
            EXPECT_FALSE(rec.val_loss.has_value());
        }
    }
    EXPECT_TRUE(r.summary.final_val_acc.has_value());
}

TEST(Run, ConfigValidation) {
    RunConfig c = blobs_config();
    c.b_init = 1;
    EXPECT_THROW(run(c), ConfigError);
    c = blobs_config();
    c.controller->b_max = 5000;
    EXPECT_THROW(run(c), ConfigError);
    c = blobs_config();
    c.total_samples = 1;
    EXPECT_THROW(run(c), ConfigError);
    c = blobs_config();
    c.controller->b_max = 0;  // resolves to the training set size
    EXPECT_NO_THROW(run(c));
}

TEST(PrepareData, HoldsOutFraction) {
    DataSpec spec;
    spec.synthetic = SyntheticSpec{SyntheticKind::gaussian_blobs, 500, 3, 2, 1, 1.0};
    spec.val_fraction = 0.1;
    const TrainData td = prepare_data(spec, 4);
    EXPECT_EQ(td.train.size(), 450u);
    ASSERT_TRUE(td.val.has_value());
    EXPECT_EQ(td.val->size(), 50u);
    EXPECT_EQ(prepare_data(spec, 4).train, td.train);
}

TEST(Output, CsvHeaderAndRows) {
    RunRecord a;
    a.step = 1;
    a.samples = 2;
    a.batch_size = 2;
    a.loss = 0.5;
    a.grad_norm = 0.1;
    a.statistic = 3.25;
    a.passed = false;
    a.lr = 0.008;
    RunRecord b = a;
    b.step = 2;
    b.samples = 4;
    b.statistic = NAN;
    b.passed.reset();
    b.val_loss = 0.25;
    b.val_acc = 1.0;
    const std::vector<RunRecord> recs{a, b};
    const std::string csv = metrics_csv(recs);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, kMetricsCsvHeader);
    std::getline(in, line);
    EXPECT_EQ(line, "1,2,2,0.5,0.1,3.25,0,0.008,,,0");
    std::getline(in, line);
    EXPECT_EQ(line, "2,4,2,0.5,0.1,,,0.008,0.25,1,0");

    std::istringstream jl(metrics_jsonl(recs));
    std::getline(jl, line);
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["statistic"].get<double>(), 3.25);
    EXPECT_EQ(j["passed"].get<bool>(), false);
    EXPECT_TRUE(j["val_loss"].is_null());
    std::getline(jl, line);
    EXPECT_TRUE(nlohmann::json::parse(line)["statistic"].is_null());
}

TEST(Output, CsvRoundTripsDoubles) {
    RunRecord r;
    r.loss = 0.1 + 0.2;
    r.lr = 1.0 / 3.0;
    const std::vector<RunRecord> recs{r};
    std::istringstream in(metrics_csv(recs));
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    EXPECT_EQ(std::stod(cells[3]), r.loss);
    EXPECT_EQ(std::stod(cells[7]), r.lr);
}

TEST(Output, ParamsBinaryLayout) {
    const ParamVector x{1.0, -2.5, 1e-300};
    const std::string bytes = encode_params(x);
    ASSERT_EQ(bytes.size(), 8u + 24u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 3u);
    for (int k = 1; k < 8; ++k) EXPECT_EQ(bytes[k], 0);
    // 1.0 is 0x3FF0000000000000; little-endian puts 0xF0, 0x3F last.
    EXPECT_EQ(static_cast<unsigned char>(bytes[8 + 6]), 0xF0u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[8 + 7]), 0x3Fu);
    EXPECT_EQ(decode_params(bytes), x);
    EXPECT_THROW(decode_params(bytes.substr(0, 20)), FormatError);
}

TEST(Output, AtomicWriteReplacesFile) {
    const auto dir = testsupport::scratch_dir("atomic");
    const auto path = (dir / "f.txt").string();
    write_file_atomic(path, "first");
    write_file_atomic(path, "second");
    EXPECT_EQ(testsupport::read_file(path), "second");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
    EXPECT_EQ(files, 1u);
}

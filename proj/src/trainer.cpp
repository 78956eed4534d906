#include "adabatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "adabatch/errors.hpp"

namespace adabatch {

std::string to_string(Sampling s) {
    return s == Sampling::with_replacement ? "with_replacement" : "without_replacement";
}

Sampling parse_sampling(const std::string& s) {
    if (s == "with_replacement") return Sampling::with_replacement;
    if (s == "without_replacement") return Sampling::without_replacement;
    throw ConfigError("unknown sampling mode '" + s + "'");
}

std::string to_string(DataSource s) {
    switch (s) {
        case DataSource::synthetic: return "synthetic";
        case DataSource::idx: return "idx";
        case DataSource::csv: return "csv";
    }
    return "?";
}

DataSource parse_data_source(const std::string& s) {
    if (s == "synthetic") return DataSource::synthetic;
    if (s == "idx") return DataSource::idx;
    if (s == "csv") return DataSource::csv;
    throw ConfigError("unknown data source '" + s + "'");
}

IndexList sample_batch(Rng& rng, std::size_t n, std::size_t b, Sampling mode) {
    if (n == 0) throw ConfigError("cannot sample from an empty dataset");
    IndexList out;
    out.reserve(b);
    if (mode == Sampling::with_replacement) {
        for (std::size_t k = 0; k < b; ++k) out.push_back(rng.index(n));
        return out;
    }
    if (b > n)
        throw ConfigError("batch size " + std::to_string(b) + " exceeds dataset size " +
                          std::to_string(n) + " without replacement");
    // Partial Fisher-Yates.
    IndexList pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t k = 0; k < b; ++k) {
        const std::size_t j = k + rng.index(n - k);
        std::swap(pool[k], pool[j]);
    }
    pool.resize(b);
    return pool;
}

TrainData prepare_data(const DataSpec& spec, std::uint64_t seed) {
    TrainData out;
    switch (spec.source) {
        case DataSource::synthetic: out.train = make_synthetic(spec.synthetic); break;
        case DataSource::idx:
            out.train = load_idx(spec.images, spec.labels);
            if (!spec.val_images.empty()) out.val = load_idx(spec.val_images, spec.val_labels);
            break;
        case DataSource::csv:
            out.train = load_csv(spec.csv);
            if (!spec.val_csv.empty()) out.val = load_csv(spec.val_csv);
            break;
    }
    if (!out.val && spec.val_fraction > 0.0) {
        if (spec.val_fraction >= 1.0) throw ConfigError("data.val_fraction must be below 1");
        const std::size_t n = out.train.size();
        const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(n)));
        if (n_val > 0) {
            if (n - n_val < 2) throw ConfigError("validation split leaves fewer than two training samples");
            Rng rng(mix_seed(seed, 1));
            IndexList perm = sample_batch(rng, n, n, Sampling::without_replacement);
            IndexList val_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
            IndexList train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
            std::sort(val_idx.begin(), val_idx.end());
            std::sort(train_idx.begin(), train_idx.end());
            Dataset full = std::move(out.train);
            out.val = full.subset(val_idx);
            out.train = full.subset(train_idx);
        }
    }
    if (out.val && out.train.num_classes != out.val->num_classes) {
        const std::size_t c = std::max(out.train.num_classes, out.val->num_classes);
        out.train.num_classes = c;
        out.val->num_classes = c;
    }
    out.train.validate();
    return out;
}

void validate_run_config(const RunConfig& cfg, std::size_t n) {
    if (cfg.b_init < 2) throw ConfigError("train.b_init must be at least 2");
    if (cfg.total_samples < cfg.b_init) throw ConfigError("train.total_samples must be >= train.b_init");
    if (cfg.chunk_budget < 1) throw ConfigError("train.chunk_budget must be positive");
    if (cfg.sampling == Sampling::without_replacement && cfg.b_init > n)
        throw ConfigError("train.b_init exceeds the training set size");
    if (cfg.controller) {
        cfg.controller->validate();
        if (cfg.controller->b_max > n)
            throw ConfigError("controller.b_max (" + std::to_string(cfg.controller->b_max) +
                              ") exceeds the training set size (" + std::to_string(n) + ")");
        if (cfg.b_init > cfg.controller->b_max)
            throw ConfigError("train.b_init exceeds controller.b_max");
    }
    cfg.optimizer.validate();
    cfg.lr.validate();
}

namespace {

struct BatchEvaluation {
    BatchGradStats stats;
    bool zero_mean = false;  // orthogonality requested on a zero mean gradient
};

BatchEvaluation evaluate_batch(const Objective& obj, std::span<const double> x,
                               const Dataset& data, const IndexList& batch,
                               StatsRequest request, std::size_t chunk_budget) {
    const std::size_t d = obj.param_dim();
    const std::size_t b = batch.size();
    BatchEvaluation out;

    if (b * d <= chunk_budget) {
        const PerSampleGradBatch g = per_sample_grads(obj, x, data, batch);
        try {
            out.stats = compute_batch_stats(g, request);
        } catch (const ZeroMeanGradient&) {
            request.orthogonality = false;
            out.stats = compute_batch_stats(g, request);
            out.zero_mean = true;
        }
        return out;
    }

    const std::size_t rows = std::max<std::size_t>(1, chunk_budget / d);
    auto for_each_chunk = [&](auto&& fn) {
        for (std::size_t start = 0; start < b; start += rows) {
            const std::size_t stop = std::min(b, start + rows);
            const std::span<const std::size_t> idx(batch.data() + start, stop - start);
            fn(per_sample_grads(obj, x, data, idx).grads);
        }
    };

    StatsAccumulator acc(d, request);
    for_each_chunk([&](const Matrix& m) { acc.add_mean_rows(m); });
    try {
        acc.finish_mean_pass();
    } catch (const ZeroMeanGradient&) {
        request.orthogonality = false;
        StatsAccumulator retry(d, request);
        for_each_chunk([&](const Matrix& m) { retry.add_mean_rows(m); });
        retry.finish_mean_pass();
        if (request.any()) for_each_chunk([&](const Matrix& m) { retry.add_deviation_rows(m); });
        out.stats = retry.finish();
        out.zero_mean = true;
        return out;
    }
    if (request.any()) for_each_chunk([&](const Matrix& m) { acc.add_deviation_rows(m); });
    out.stats = acc.finish();
    return out;
}

}  // namespace

RunResult run(const RunConfig& cfg_in, const Objective& obj, const TrainData& data,
              const StepObserver& observer) {
    const Dataset& train = data.train;
    const std::size_t n = train.size();
    RunConfig cfg = cfg_in;
    if (cfg.controller && cfg.controller->b_max == 0) cfg.controller->b_max = n;
    if (cfg.lr.total_samples == 0) cfg.lr.total_samples = cfg.total_samples;
    validate_run_config(cfg, n);
    obj.check_dataset(train);

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();

    RunResult result;
    ParamVector x = obj.initial_params(cfg.seed);
    OptimizerState opt = make_optimizer_state(cfg.optimizer, x.size());
    Rng sampler(mix_seed(cfg.seed, 2));

    const StatsRequest test_request =
        cfg.controller ? stats_request_for(cfg.controller->kind) : StatsRequest{false, false, false, false};
    const StatsRequest mean_only{false, false, false, false};

    std::size_t b = cfg.b_init;
    std::uint64_t samples = 0;
    std::uint64_t k = 0;
    ParamVector x_before;

    auto evaluate_validation = [&](RunRecord& rec) {
        if (!data.val) return;
        rec.val_loss = full_loss(obj, x, *data.val);
        rec.val_acc = accuracy(obj, x, *data.val);
    };

    while (samples < cfg.total_samples) {
        if (cfg.max_steps > 0 && k >= cfg.max_steps) break;
        ++k;
        const IndexList batch = sample_batch(sampler, n, b, cfg.sampling);
        const bool test_now = cfg.controller && ((k - 1) % cfg.controller->test_every == 0);

        BatchEvaluation ev =
            evaluate_batch(obj, x, train, batch, test_now ? test_request : mean_only, cfg.chunk_budget);

        RunRecord rec;
        rec.step = k;
        rec.batch_size = b;
        rec.loss = batch_loss(obj, x, train, batch);
        rec.grad_norm = std::sqrt(ev.stats.mean_grad_sq_norm);
        rec.statistic = std::numeric_limits<double>::quiet_NaN();

        std::size_t next_b = b;
        if (test_now) {
            if (ev.zero_mean) {
                ++result.summary.indeterminate_tests;
            } else {
                const ControllerDecision dec = decide(*cfg.controller, ev.stats, b, n);
                rec.statistic = dec.statistic;
                rec.passed = dec.passed;
                next_b = dec.next_b;
                if (!dec.passed) ++result.summary.indeterminate_tests;
            }
        }

        samples += b;
        rec.samples = samples;
        rec.lr = lr_at(cfg.lr, samples);

        if (observer) x_before = x;
        step_inplace(opt, x, ev.stats.mean_grad, rec.lr);
        if (!all_finite(x)) throw Error("iterate diverged to non-finite values at step " + std::to_string(k));

        if (cfg.eval_every > 0 && k % cfg.eval_every == 0) evaluate_validation(rec);
        if (cfg.record_timing)
            rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();

        result.records.push_back(rec);
        if (observer) observer(StepTrace{result.records.back(), batch, x_before, ev.stats.mean_grad, next_b});
        b = next_b;
    }

    if (!result.records.empty() && !result.records.back().val_loss) evaluate_validation(result.records.back());

    RunSummary& s = result.summary;
    s.steps = k;
    s.samples = samples;
    s.avg_batch_size = k > 0 ? static_cast<double>(samples) / static_cast<double>(k) : 0.0;
    s.final_batch_size = result.records.empty() ? b : result.records.back().batch_size;
    s.final_train_loss = full_loss(obj, x, train);
    s.final_train_acc = accuracy(obj, x, train);
    if (!result.records.empty()) {
        s.final_val_loss = result.records.back().val_loss;
        s.final_val_acc = result.records.back().val_acc;
    }
    result.final_params = std::move(x);
    return result;
}

RunResult run(const RunConfig& cfg, const StepObserver& observer) {
    TrainData data = prepare_data(cfg.data, cfg.seed);
    auto obj = make_objective(cfg.objective, data.train);
    return run(cfg, *obj, data, observer);
}

}  // namespace adabatch

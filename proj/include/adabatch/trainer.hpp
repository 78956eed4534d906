#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adabatch/controllers.hpp"
#include "adabatch/core.hpp"
#include "adabatch/objectives.hpp"
#include "adabatch/optimizers.hpp"
#include "adabatch/random.hpp"

namespace adabatch {

enum class Sampling { with_replacement, without_replacement };

std::string to_string(Sampling s);
Sampling parse_sampling(const std::string& s);

/// Uniform batch of `b` indices into [0, n).
IndexList sample_batch(Rng& rng, std::size_t n, std::size_t b, Sampling mode);

enum class DataSource { synthetic, idx, csv };

std::string to_string(DataSource s);
DataSource parse_data_source(const std::string& s);

struct DataSpec {
    DataSource source = DataSource::synthetic;
    SyntheticSpec synthetic;
    std::string images;
    std::string labels;
    std::string val_images;
    std::string val_labels;
    std::string csv;
    std::string val_csv;
    /// Held-out fraction split from the training file when no explicit
    /// validation file is given.
    double val_fraction = 0.1;
};

struct TrainData {
    Dataset train;
    std::optional<Dataset> val;
};

/// Loads or generates the data and carves the validation split with `seed`.
TrainData prepare_data(const DataSpec& spec, std::uint64_t seed);

struct RunConfig {
    ObjectiveSpec objective;
    DataSpec data;
    std::optional<ControllerConfig> controller;  // nullopt: fixed batch size
    OptimizerConfig optimizer;
    LrSchedule lr;
    std::size_t b_init = 2;
    std::uint64_t total_samples = 0;
    std::uint64_t seed = 0;
    Sampling sampling = Sampling::without_replacement;
    std::size_t eval_every = 0;  // 0: evaluate only after the final step
    std::size_t chunk_budget = std::size_t{1} << 24;  // max b*d doubles materialised
    std::size_t max_steps = 0;                        // 0: budget-limited only
    bool record_timing = false;
};

/// One optimizer step's metrics.
struct RunRecord {
    std::uint64_t step = 0;
    std::uint64_t samples = 0;  // samples consumed including this step
    std::size_t batch_size = 0;
    double loss = 0.0;       // batch loss at the pre-step iterate
    double grad_norm = 0.0;  // |grad F_B| at the pre-step iterate
    double statistic = 0.0;  // NaN when no test ran or it was indeterminate
    std::optional<bool> passed;
    double lr = 0.0;
    std::optional<double> val_loss;
    std::optional<double> val_acc;
    double wall_ms = 0.0;

    bool operator==(const RunRecord&) const = default;
};

struct RunSummary {
    std::uint64_t steps = 0;
    std::uint64_t samples = 0;
    double avg_batch_size = 0.0;
    std::size_t final_batch_size = 0;
    double final_train_loss = 0.0;
    std::optional<double> final_train_acc;
    std::optional<double> final_val_loss;
    std::optional<double> final_val_acc;
    std::size_t indeterminate_tests = 0;
};

struct RunResult {
    std::vector<RunRecord> records;
    ParamVector final_params;
    RunSummary summary;
};

/// Per-step view handed to an observer; valid only during the callback.
struct StepTrace {
    const RunRecord& record;
    std::span<const std::size_t> batch;
    std::span<const double> x_before;
    std::span<const double> batch_grad;
    std::size_t next_batch_size;
};

using StepObserver = std::function<void(const StepTrace&)>;

/// Throws ConfigError if `cfg` cannot be run on a training set of size n.
void validate_run_config(const RunConfig& cfg, std::size_t n);

/// Training loop on already-prepared data.
///
/// Each step samples a batch of the current size, evaluates per-sample
/// gradients (in chunks when b*d exceeds chunk_budget), computes the
/// statistic the controller needs, decides the next batch size, and then
/// steps the optimizer with the batch mean gradient of the same batch.
RunResult run(const RunConfig& cfg, const Objective& obj, const TrainData& data,
              const StepObserver& observer = {});

/// Prepares data and objective from `cfg`, then trains.
RunResult run(const RunConfig& cfg, const StepObserver& observer = {});

// Output formats.

inline constexpr const char* kMetricsCsvHeader =
    "step,samples,batch_size,loss,grad_norm,statistic,passed,lr,val_loss,val_acc,wall_ms";

std::string metrics_csv(std::span<const RunRecord> records);
std::string metrics_jsonl(std::span<const RunRecord> records);

/// uint64 little-endian length followed by little-endian doubles.
std::string encode_params(std::span<const double> x);
ParamVector decode_params(std::string_view bytes);

/// Writes via a temporary file in the same directory and renames over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace adabatch

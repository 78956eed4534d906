#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "adabatch/core.hpp"

namespace adabatch {

enum class OptimizerKind { sgd, adagrad, adagrad_norm, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& s);

inline constexpr double kDefaultV0 = 1e-8;

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adagrad;
    double v0 = kDefaultV0;  // initial AdaGrad accumulator; 0 means the default
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;

    void validate() const;
};

/// Mutable optimizer memory. Only the fields the kind uses are populated.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::sgd;
    double v_scalar = 0.0;
    Vector v_vec;
    Vector m_vec;
    Vector v2_vec;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    std::uint64_t step_count = 0;

    bool operator==(const OptimizerState&) const = default;
};

OptimizerState make_optimizer_state(const OptimizerConfig& cfg, std::size_t dim);

struct StepResult {
    ParamVector x;
    OptimizerState state;
};

/// One update with gradient `g` and step size `lr`.
///
/// AdaGrad-family accumulators absorb g before it is used:
///   adagrad:      v += g*g,    x -= lr * g / sqrt(v)
///   adagrad_norm: v += |g|^2,  x -= lr * g / sqrt(v)
/// Adam uses bias-corrected moments, x -= lr * m_hat / (sqrt(v_hat) + eps).
StepResult step(OptimizerState state, ParamVector x, std::span<const double> g, double lr);

/// In-place variant used by the trainer.
void step_inplace(OptimizerState& state, ParamVector& x, std::span<const double> g, double lr);

enum class ScheduleKind { constant, warmup_cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& s);

/// Step size as a function of training samples consumed.
struct LrSchedule {
    ScheduleKind kind = ScheduleKind::constant;
    double peak = 0.008;
    double min_lr = 0.0;
    std::uint64_t warmup_samples = 0;
    std::uint64_t total_samples = 0;

    void validate() const;
};

/// constant: peak. warmup_cosine: linear 0 -> peak over warmup_samples, then
/// cosine peak -> min_lr until total_samples. Inputs past total_samples are
/// clamped.
double lr_at(const LrSchedule& sched, std::uint64_t samples_seen);

}  // namespace adabatch

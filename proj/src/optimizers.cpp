#include "adabatch/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adabatch/errors.hpp"

namespace adabatch {

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::adagrad: return "adagrad";
        case OptimizerKind::adagrad_norm: return "adagrad_norm";
        case OptimizerKind::adam: return "adam";
    }
    return "?";
}

OptimizerKind parse_optimizer_kind(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adagrad") return OptimizerKind::adagrad;
    if (s == "adagrad_norm" || s == "adagrad-norm") return OptimizerKind::adagrad_norm;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer kind '" + s + "'");
}

void OptimizerConfig::validate() const {
    if (v0 < 0.0) throw ConfigError("optimizer.v0 must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optimizer.beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer.beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("optimizer.eps must be positive");
}

OptimizerState make_optimizer_state(const OptimizerConfig& cfg, std::size_t dim) {
    cfg.validate();
    const double v0 = cfg.v0 > 0.0 ? cfg.v0 : kDefaultV0;
    OptimizerState s;
    s.kind = cfg.kind;
    s.beta1 = cfg.beta1;
    s.beta2 = cfg.beta2;
    s.eps = cfg.eps;
    switch (cfg.kind) {
        case OptimizerKind::sgd: break;
        case OptimizerKind::adagrad: s.v_vec.assign(dim, v0); break;
        case OptimizerKind::adagrad_norm: s.v_scalar = v0; break;
        case OptimizerKind::adam:
            s.m_vec.assign(dim, 0.0);
            s.v2_vec.assign(dim, 0.0);
            break;
    }
    return s;
}

void step_inplace(OptimizerState& state, ParamVector& x, std::span<const double> g, double lr) {
    if (g.size() != x.size()) throw std::invalid_argument("gradient and parameter sizes differ");
    if (!all_finite(g)) throw Error("non-finite gradient passed to optimizer");
    if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
    const std::size_t d = x.size();
    switch (state.kind) {
        case OptimizerKind::sgd:
            for (std::size_t j = 0; j < d; ++j) x[j] -= lr * g[j];
            break;
        case OptimizerKind::adagrad:
            for (std::size_t j = 0; j < d; ++j) {
                state.v_vec[j] += g[j] * g[j];
                x[j] -= lr * g[j] / std::sqrt(state.v_vec[j]);
            }
            break;
        case OptimizerKind::adagrad_norm: {
            state.v_scalar += sq_norm(g);
            const double scale = lr / std::sqrt(state.v_scalar);
            for (std::size_t j = 0; j < d; ++j) x[j] -= scale * g[j];
            break;
        }
        case OptimizerKind::adam: {
            const double t = static_cast<double>(state.step_count + 1);
            const double c1 = 1.0 - std::pow(state.beta1, t);
            const double c2 = 1.0 - std::pow(state.beta2, t);
            for (std::size_t j = 0; j < d; ++j) {
                state.m_vec[j] = state.beta1 * state.m_vec[j] + (1.0 - state.beta1) * g[j];
                state.v2_vec[j] = state.beta2 * state.v2_vec[j] + (1.0 - state.beta2) * g[j] * g[j];
                const double m_hat = state.m_vec[j] / c1;
                const double v_hat = state.v2_vec[j] / c2;
                x[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
            }
            break;
        }
    }
    ++state.step_count;
}

StepResult step(OptimizerState state, ParamVector x, std::span<const double> g, double lr) {
    step_inplace(state, x, g, lr);
    return {std::move(x), std::move(state)};
}

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::constant ? "constant" : "warmup_cosine";
}

ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "constant" || s == "none") return ScheduleKind::constant;
    if (s == "warmup_cosine") return ScheduleKind::warmup_cosine;
    throw ConfigError("unknown schedule kind '" + s + "'");
}

void LrSchedule::validate() const {
    if (!(peak > 0.0)) throw ConfigError("lr.peak must be positive");
    if (kind == ScheduleKind::warmup_cosine) {
        if (min_lr < 0.0 || min_lr > peak) throw ConfigError("lr.min must lie in [0, peak]");
        if (warmup_samples > total_samples)
            throw ConfigError("lr.warmup_samples exceeds lr.total_samples");
    }
}

double lr_at(const LrSchedule& sched, std::uint64_t samples_seen) {
    if (sched.kind == ScheduleKind::constant) return sched.peak;
    const std::uint64_t s = std::min(samples_seen, sched.total_samples);
    if (s < sched.warmup_samples)
        return sched.peak * static_cast<double>(s) / static_cast<double>(sched.warmup_samples);
    const std::uint64_t decay = sched.total_samples - sched.warmup_samples;
    if (decay == 0) return sched.peak;
    const double progress =
        static_cast<double>(s - sched.warmup_samples) / static_cast<double>(decay);
    return sched.min_lr +
           0.5 * (sched.peak - sched.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace adabatch

#include "adabatch/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adabatch/errors.hpp"

namespace adabatch {

std::string to_string(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::norm: return "norm";
        case ControllerKind::norm_coordinatewise: return "norm_coordinatewise";
        case ControllerKind::inner_product: return "inner_product";
        case ControllerKind::augmented_inner_product: return "augmented_inner_product";
    }
    return "?";
}

ControllerKind parse_controller_kind(const std::string& s) {
    if (s == "norm") return ControllerKind::norm;
    if (s == "norm_coordinatewise" || s == "coordinatewise") return ControllerKind::norm_coordinatewise;
    if (s == "inner_product") return ControllerKind::inner_product;
    if (s == "augmented_inner_product" || s == "augmented") return ControllerKind::augmented_inner_product;
    throw ConfigError("unknown controller kind '" + s + "'");
}

void ControllerConfig::validate() const {
    if (kind == ControllerKind::norm || kind == ControllerKind::norm_coordinatewise) {
        if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("controller.eta must lie in (0, 1)");
    }
    if (kind == ControllerKind::inner_product || kind == ControllerKind::augmented_inner_product) {
        if (!(theta > 0.0)) throw ConfigError("controller.theta must be positive");
    }
    if (kind == ControllerKind::augmented_inner_product && !(nu > 0.0))
        throw ConfigError("controller.nu must be positive");
    if (b_max < 1) throw ConfigError("controller.b_max must be positive");
    if (test_every < 1) throw ConfigError("controller.test_every must be at least 1");
    if (!(eps_guard > 0.0)) throw ConfigError("controller.eps_guard must be positive");
}

StatsRequest stats_request_for(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::norm: return {true, false, false, false};
        case ControllerKind::norm_coordinatewise: return {true, false, false, true};
        case ControllerKind::inner_product: return {true, true, false, false};
        case ControllerKind::augmented_inner_product: return {true, true, true, false};
    }
    return {};
}

double finite_population_factor(std::size_t n, std::size_t b) {
    if (n < 2) throw ConfigError("finite population correction needs n >= 2");
    if (b > n) throw ConfigError("batch larger than population");
    return static_cast<double>(n - b) / static_cast<double>(n - 1);
}

namespace {

template <typename T>
const T& require(const std::optional<T>& field, const char* name) {
    if (!field) throw std::invalid_argument(std::string("batch statistics lack ") + name);
    return *field;
}

void guard_denominator(const BatchGradStats& stats, double eps_guard) {
    if (!(stats.mean_grad_sq_norm > eps_guard))
        throw NearStationaryAmbiguity("batch gradient norm below guard; statistic undefined");
}

}  // namespace

double norm_test_statistic(const BatchGradStats& stats, double eta, std::optional<double> fpc,
                           double eps_guard) {
    const double var = require(stats.norm_var, "norm_var");
    guard_denominator(stats, eps_guard);
    const double factor = fpc.value_or(1.0);
    return factor * var / (eta * eta * stats.mean_grad_sq_norm);
}

CoordStatistic coord_norm_test_statistic_detail(const BatchGradStats& stats, double eta,
                                                double eps_guard) {
    const Vector& cv = require(stats.coord_var, "coord_var");
    const double cutoff = std::sqrt(eps_guard);
    CoordStatistic out;
    bool any = false;
    for (std::size_t j = 0; j < cv.size(); ++j) {
        const double m = stats.mean_grad[j];
        if (std::abs(m) <= cutoff) {
            ++out.guarded;
            continue;
        }
        const double t = cv[j] / (eta * eta * m * m);
        out.value = any ? std::max(out.value, t) : t;
        any = true;
    }
    if (!any) throw NearStationaryAmbiguity("every coordinate of the batch gradient is guarded");
    return out;
}

double coord_norm_test_statistic(const BatchGradStats& stats, double eta, double eps_guard) {
    return coord_norm_test_statistic_detail(stats, eta, eps_guard).value;
}

double inner_product_statistic(const BatchGradStats& stats, double theta, double eps_guard) {
    const double var = require(stats.ip_var, "ip_var");
    guard_denominator(stats, eps_guard);
    const double g2 = stats.mean_grad_sq_norm;
    return var / (theta * theta * g2 * g2);
}

double orthogonality_statistic(const BatchGradStats& stats, double nu, double eps_guard) {
    const double var = require(stats.ortho_var, "ortho_var");
    guard_denominator(stats, eps_guard);
    return var / (nu * nu * stats.mean_grad_sq_norm);
}

std::size_t next_batch_size(double statistic, std::size_t current_b, std::size_t b_max) {
    const double cap = static_cast<double>(b_max);
    std::size_t proposed;
    if (std::isnan(statistic)) {
        proposed = current_b;
    } else {
        const double c = std::ceil(statistic);
        proposed = c >= cap ? b_max : static_cast<std::size_t>(std::max(c, 0.0));
    }
    return std::min(b_max, std::max(proposed, current_b));
}

ControllerDecision decide(const ControllerConfig& cfg, const BatchGradStats& stats,
                          std::size_t current_b, std::optional<std::size_t> population) {
    ControllerDecision d;
    try {
        switch (cfg.kind) {
            case ControllerKind::norm: {
                std::optional<double> fpc;
                if (cfg.use_fpc) {
                    if (!population) throw std::invalid_argument("fpc requires the population size");
                    fpc = finite_population_factor(*population, current_b);
                }
                d.statistic = norm_test_statistic(stats, cfg.eta, fpc, cfg.eps_guard);
                break;
            }
            case ControllerKind::norm_coordinatewise: {
                const CoordStatistic c = coord_norm_test_statistic_detail(stats, cfg.eta, cfg.eps_guard);
                d.statistic = c.value;
                d.guarded_coords = c.guarded;
                break;
            }
            case ControllerKind::inner_product:
                d.statistic = inner_product_statistic(stats, cfg.theta, cfg.eps_guard);
                break;
            case ControllerKind::augmented_inner_product: {
                const double t_ip = inner_product_statistic(stats, cfg.theta, cfg.eps_guard);
                const double t_ortho = orthogonality_statistic(stats, cfg.nu, cfg.eps_guard);
                d.components = std::make_pair(t_ip, t_ortho);
                d.statistic = std::max(t_ip, t_ortho);
                break;
            }
        }
    } catch (const NearStationaryAmbiguity&) {
        d.statistic = std::numeric_limits<double>::quiet_NaN();
        d.passed.reset();
        d.next_b = current_b;
        return d;
    }
    d.passed = d.statistic <= static_cast<double>(current_b);
    d.next_b = next_batch_size(d.statistic, current_b, cfg.b_max);
    return d;
}

}  // namespace adabatch

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>

#include "adabatch/core.hpp"

namespace adabatch {

enum class ControllerKind { norm, norm_coordinatewise, inner_product, augmented_inner_product };

std::string to_string(ControllerKind kind);
ControllerKind parse_controller_kind(const std::string& s);

inline constexpr double kDefaultEpsGuard = 1e-24;

struct ControllerConfig {
    ControllerKind kind = ControllerKind::norm;
    double eta = 0.1;    // norm-test constant, in (0, 1)
    double theta = 0.1;  // inner-product constant
    double nu = 1.0;     // orthogonality constant
    std::size_t b_max = 1;
    std::size_t test_every = 1;
    bool use_fpc = false;
    double eps_guard = kDefaultEpsGuard;

    /// Throws ConfigError when a constant the kind needs is out of range.
    void validate() const;
};

/// Fields of BatchGradStats that `kind` consumes.
StatsRequest stats_request_for(ControllerKind kind);

/// (n - b) / (n - 1): variance shrinkage of sampling b of n without replacement.
double finite_population_factor(std::size_t n, std::size_t b);

/// T = fpc * Var / (eta^2 |grad F_B|^2). Passes iff T <= b.
double norm_test_statistic(const BatchGradStats& stats, double eta,
                           std::optional<double> fpc = std::nullopt,
                           double eps_guard = kDefaultEpsGuard);

struct CoordStatistic {
    double value = 0.0;
    std::size_t guarded = 0;  // coordinates skipped as near-zero
};

/// max_j coord_var[j] / (eta^2 mean_grad[j]^2), skipping coordinates with
/// |mean_grad[j]| <= sqrt(eps_guard).
CoordStatistic coord_norm_test_statistic_detail(const BatchGradStats& stats, double eta,
                                                double eps_guard = kDefaultEpsGuard);
double coord_norm_test_statistic(const BatchGradStats& stats, double eta,
                                 double eps_guard = kDefaultEpsGuard);

/// T_ip = Var(<g_i, grad F_B>) / (theta^2 |grad F_B|^4).
double inner_product_statistic(const BatchGradStats& stats, double theta,
                               double eps_guard = kDefaultEpsGuard);

/// T_ortho = Var(orthogonal residual) / (nu^2 |grad F_B|^2).
double orthogonality_statistic(const BatchGradStats& stats, double nu,
                               double eps_guard = kDefaultEpsGuard);

struct ControllerDecision {
    std::size_t next_b = 0;
    /// The statistic T; NaN when the test was indeterminate.
    double statistic = 0.0;
    /// nullopt when the batch gradient was too small to decide.
    std::optional<bool> passed;
    /// (T_ip, T_ortho) for the augmented inner-product test.
    std::optional<std::pair<double, double>> components;
    std::size_t guarded_coords = 0;
};

/// min(b_max, max(ceil(T), b)). Never decreases b.
std::size_t next_batch_size(double statistic, std::size_t current_b, std::size_t b_max);

/// Runs the configured test on `stats` and proposes the next batch size.
///
/// `population` is the dataset size, used only when cfg.use_fpc is set.
/// A NearStationaryAmbiguity keeps the current batch size and reports an
/// indeterminate outcome.
ControllerDecision decide(const ControllerConfig& cfg, const BatchGradStats& stats,
                          std::size_t current_b, std::optional<std::size_t> population = std::nullopt);

}  // namespace adabatch

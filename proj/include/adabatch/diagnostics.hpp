#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adabatch/controllers.hpp"
#include "adabatch/core.hpp"
#include "adabatch/objectives.hpp"
#include "adabatch/random.hpp"

namespace adabatch {

/// Exact population moments of the per-sample gradients at x, computed by
/// enumerating the whole dataset.
struct PopulationMoments {
    Vector full_grad;
    double full_grad_sq_norm = 0.0;
    /// (1/n) sum_i |g_i - grad F|^2
    double norm_var = 0.0;
    /// (1/n) sum_i (<g_i, grad F> - |grad F|^2)^2
    double ip_var = 0.0;
    /// (1/n) sum_i |g_i - (<g_i, grad F>/|grad F|^2) grad F|^2
    double ortho_var = 0.0;
    /// (1/n) sum_i (g_ij - d_j F)^2
    Vector coord_var;
};

PopulationMoments population_moments(const Objective& obj, std::span<const double> x,
                                     const Dataset& data);

struct ExactTestResult {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
    double std_err = 0.0;
};

/// Monte-Carlo estimate of E|grad F_B - grad F|^2 over with-replacement
/// batches of size b, compared against eta^2 |grad F|^2.
ExactTestResult exact_norm_test(const Objective& obj, std::span<const double> x,
                                const Dataset& data, std::size_t b, double eta,
                                std::size_t n_resamples, Rng& rng);

/// Closed form of the same quantity: population variance / b.
ExactTestResult exact_norm_test_closed_form(const PopulationMoments& m, std::size_t b, double eta);

struct ExactInnerProductResult {
    ExactTestResult inner_product;
    ExactTestResult orthogonality;
    bool holds() const { return inner_product.holds && orthogonality.holds; }
};

/// Exact-variance inner-product and orthogonality tests, evaluated with the
/// population expectations (no sampling error).
ExactInnerProductResult exact_inner_product_test(const PopulationMoments& m, std::size_t b,
                                                 double theta, double nu);

/// Per-coordinate exact norm test: (1/b) coord_var[j] <= eta^2 (d_j F)^2 for all j.
bool exact_coord_norm_test(const PopulationMoments& m, std::size_t b, double eta);

/// Empirical second-moment ratio E|grad F_B|^2 / |grad F|^2.
struct EsgEstimate {
    double tau_hat = 0.0;
    double tau_bound = 0.0;
    std::size_t n_resamples = 0;
    double std_err = 0.0;
    bool holds = false;  // tau_hat <= tau_bound + 3 std_err
    /// Coordinate-wise variant: per-coordinate ratios and standard errors.
    Vector coord_tau_hat;
    Vector coord_std_err;
};

struct EsgConstants {
    double eta = 0.5;
    double theta = 0.5;
    double nu = 0.5;
};

/// Checks the expected strong growth bound implied by an exact test.
///
/// The matching exact test is verified first (Monte-Carlo for the norm test,
/// population moments for the others); PreconditionNotMet is thrown when it
/// does not hold. Sampling is with replacement.
EsgEstimate esg_check(const Objective& obj, std::span<const double> x, const Dataset& data,
                      std::size_t b, ControllerKind kind, const EsgConstants& constants,
                      std::size_t n_resamples, Rng& rng);

/// Agreement between the approximate norm-test numerator Var_B / b and the
/// squared batch-gradient error, averaged over with-replacement batches.
struct AgreementResult {
    double approx_mean = 0.0;
    double exact_mean = 0.0;
    double diff_mean = 0.0;
    double diff_std_err = 0.0;
    bool within(double sigmas) const;
};

AgreementResult approx_exact_agreement(const Objective& obj, std::span<const double> x,
                                       const Dataset& data, std::size_t b,
                                       std::size_t n_resamples, Rng& rng);

/// Largest |central difference - analytic| over coordinates of the per-sample
/// gradient at `sample`.
double fd_gradient_check(const Objective& obj, std::span<const double> x, const Dataset& data,
                         std::size_t sample, double h);

struct SeqLemmaResult {
    double lhs1 = 0.0;
    double bound1 = 0.0;
    double lhs2 = 0.0;
    double bound2 = 0.0;
    /// Both inequalities, with a rounding allowance of 1e-12 relative.
    bool holds() const;
};

/// sum_{k=1..K} a_k / (S_k)^{3/2} <= 2 / sqrt(a_0) and
/// sum_{k=1..K} a_k / S_k <= log S_K - log a_0, where S_k = a_0 + ... + a_k.
SeqLemmaResult seq_lemma_check(std::span<const double> a, std::size_t K);

/// Test hook: wraps an objective and perturbs one gradient coordinate.
class CorruptedObjective final : public Objective {
public:
    CorruptedObjective(const Objective& inner, double offset) : inner_(inner), offset_(offset) {}

    ObjectiveKind kind() const override { return inner_.kind(); }
    std::size_t param_dim() const override { return inner_.param_dim(); }
    double sample_loss(std::span<const double> x, const Dataset& data,
                       std::size_t i) const override {
        return inner_.sample_loss(x, data, i);
    }
    void sample_grad(std::span<const double> x, const Dataset& data, std::size_t i,
                     std::span<double> out) const override {
        inner_.sample_grad(x, data, i, out);
        out[0] += offset_;
    }
    std::optional<int> predict(std::span<const double> x, const Dataset& data,
                               std::size_t i) const override {
        return inner_.predict(x, data, i);
    }
    ParamVector initial_params(std::uint64_t seed) const override {
        return inner_.initial_params(seed);
    }
    void check_dataset(const Dataset& data) const override { inner_.check_dataset(data); }

private:
    const Objective& inner_;
    double offset_;
};

/// One named audit outcome.
struct AuditCheck {
    std::string name;
    bool passed = false;
    bool skipped = false;  // precondition not met; not a failure
    std::map<std::string, double> values;
    double std_err = 0.0;
    std::string note;
};

struct AuditOptions {
    std::size_t resamples = 2000;
    std::size_t fd_samples = 10;
    double fd_step = 1e-5;
    double fd_tolerance = 1e-4;
    double eta = 0.5;
    double theta = 0.5;
    double nu = 0.5;
    std::size_t lemma_sequences = 1000;
    std::uint64_t seed = 0;
    bool corrupt_gradient = false;
};

struct AuditReport {
    std::vector<AuditCheck> checks;
    bool passed() const;
    std::string to_json() const;
};

/// Runs every diagnostic against `obj` on `data` at a seeded random iterate.
AuditReport run_audit(const Objective& obj, const Dataset& data, const AuditOptions& opts);

/// Smallest b in [1, n] for which the closed-form exact norm test holds, or 0.
std::size_t min_batch_for_exact_norm_test(const PopulationMoments& m, std::size_t n, double eta);

}  // namespace adabatch

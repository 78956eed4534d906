#include "adabatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "adabatch/errors.hpp"

namespace adabatch {

namespace {

Matrix all_sample_grads(const Objective& obj, std::span<const double> x, const Dataset& data) {
    IndexList all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return per_sample_grads(obj, x, data, all).grads;
}

Vector mean_of_rows(const Matrix& g) {
    Vector m(g.cols(), 0.0);
    for (std::size_t i = 0; i < g.rows(); ++i) {
        auto r = g.row(i);
        for (std::size_t j = 0; j < g.cols(); ++j) m[j] += r[j];
    }
    for (double& v : m) v /= static_cast<double>(g.rows());
    return m;
}

// Mean of `rows` selected by `idx` (with repeats) written into `out`.
void resampled_mean(const Matrix& g, const IndexList& idx, Vector& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i : idx) {
        auto r = g.row(i);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += r[j];
    }
    for (double& v : out) v /= static_cast<double>(idx.size());
}

IndexList draw_with_replacement(Rng& rng, std::size_t n, std::size_t b) {
    IndexList idx(b);
    for (auto& i : idx) i = rng.index(n);
    return idx;
}

struct RunningMean {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;

    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++count;
    }
    double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
    double std_err() const {
        if (count < 2) return 0.0;
        const double c = static_cast<double>(count);
        const double m = sum / c;
        const double var = std::max(0.0, (sum_sq - c * m * m) / (c - 1.0));
        return std::sqrt(var / c);
    }
};

}  // namespace

PopulationMoments population_moments(const Objective& obj, std::span<const double> x,
                                     const Dataset& data) {
    const Matrix g = all_sample_grads(obj, x, data);
    const std::size_t n = g.rows();
    const std::size_t d = g.cols();
    PopulationMoments m;
    m.full_grad = mean_of_rows(g);
    m.full_grad_sq_norm = sq_norm(m.full_grad);
    m.coord_var.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = g.row(i);
        double dev_sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double e = r[j] - m.full_grad[j];
            dev_sq += e * e;
            m.coord_var[j] += e * e;
        }
        m.norm_var += dev_sq;
        const double ip = dot(r, m.full_grad);
        const double ip_dev = ip - m.full_grad_sq_norm;
        m.ip_var += ip_dev * ip_dev;
        if (m.full_grad_sq_norm > 0.0) {
            const double c = ip / m.full_grad_sq_norm;
            double res = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double e = r[j] - c * m.full_grad[j];
                res += e * e;
            }
            m.ortho_var += res;
        }
    }
    const double nn = static_cast<double>(n);
    m.norm_var /= nn;
    m.ip_var /= nn;
    m.ortho_var /= nn;
    for (double& v : m.coord_var) v /= nn;
    return m;
}

ExactTestResult exact_norm_test(const Objective& obj, std::span<const double> x,
                                const Dataset& data, std::size_t b, double eta,
                                std::size_t n_resamples, Rng& rng) {
    if (b < 1) throw ConfigError("exact norm test needs b >= 1");
    if (n_resamples < 2) throw ConfigError("exact norm test needs at least two resamples");
    const Matrix g = all_sample_grads(obj, x, data);
    const Vector full = mean_of_rows(g);
    const double full_sq = sq_norm(full);
    if (full_sq == 0.0) throw ZeroMeanGradient("full gradient is zero; exact norm test undefined");

    RunningMean err;
    Vector gb(full.size());
    for (std::size_t r = 0; r < n_resamples; ++r) {
        resampled_mean(g, draw_with_replacement(rng, data.size(), b), gb);
        double e = 0.0;
        for (std::size_t j = 0; j < gb.size(); ++j) e += (gb[j] - full[j]) * (gb[j] - full[j]);
        err.add(e);
    }
    ExactTestResult out;
    out.lhs = err.mean();
    out.std_err = err.std_err();
    out.rhs = eta * eta * full_sq;
    out.holds = out.lhs <= out.rhs;
    return out;
}

ExactTestResult exact_norm_test_closed_form(const PopulationMoments& m, std::size_t b, double eta) {
    ExactTestResult out;
    out.lhs = m.norm_var / static_cast<double>(b);
    out.rhs = eta * eta * m.full_grad_sq_norm;
    out.holds = out.lhs <= out.rhs;
    return out;
}

ExactInnerProductResult exact_inner_product_test(const PopulationMoments& m, std::size_t b,
                                                 double theta, double nu) {
    if (m.full_grad_sq_norm == 0.0) throw ZeroMeanGradient("full gradient is zero");
    const double bb = static_cast<double>(b);
    ExactInnerProductResult out;
    out.inner_product.lhs = m.ip_var / bb;
    out.inner_product.rhs = theta * theta * m.full_grad_sq_norm * m.full_grad_sq_norm;
    out.inner_product.holds = out.inner_product.lhs <= out.inner_product.rhs;
    out.orthogonality.lhs = m.ortho_var / bb;
    out.orthogonality.rhs = nu * nu * m.full_grad_sq_norm;
    out.orthogonality.holds = out.orthogonality.lhs <= out.orthogonality.rhs;
    return out;
}

bool exact_coord_norm_test(const PopulationMoments& m, std::size_t b, double eta) {
    const double bb = static_cast<double>(b);
    for (std::size_t j = 0; j < m.coord_var.size(); ++j) {
        const double g = m.full_grad[j];
        if (!(m.coord_var[j] / bb <= eta * eta * g * g)) return false;
    }
    return true;
}

std::size_t min_batch_for_exact_norm_test(const PopulationMoments& m, std::size_t n, double eta) {
    const double rhs = eta * eta * m.full_grad_sq_norm;
    if (m.norm_var == 0.0) return 1;
    if (rhs == 0.0) return 0;
    const double need = std::ceil(m.norm_var / rhs);
    if (need > static_cast<double>(n)) return 0;
    return std::max<std::size_t>(1, static_cast<std::size_t>(need));
}

EsgEstimate esg_check(const Objective& obj, std::span<const double> x, const Dataset& data,
                      std::size_t b, ControllerKind kind, const EsgConstants& constants,
                      std::size_t n_resamples, Rng& rng) {
    if (n_resamples < 2) throw ConfigError("E-SG check needs at least two resamples");
    EsgEstimate est;
    est.n_resamples = n_resamples;

    switch (kind) {
        case ControllerKind::norm: {
            const ExactTestResult pre = exact_norm_test(obj, x, data, b, constants.eta, n_resamples, rng);
            if (!pre.holds)
                throw PreconditionNotMet("exact norm test does not hold (lhs " + std::to_string(pre.lhs) +
                                         " > rhs " + std::to_string(pre.rhs) + ")");
            est.tau_bound = 1.0 + constants.eta * constants.eta;
            break;
        }
        case ControllerKind::norm_coordinatewise: {
            const PopulationMoments m = population_moments(obj, x, data);
            if (m.full_grad_sq_norm == 0.0) throw ZeroMeanGradient("full gradient is zero");
            if (!exact_coord_norm_test(m, b, constants.eta))
                throw PreconditionNotMet("coordinate-wise exact norm test does not hold");
            est.tau_bound = 1.0 + constants.eta * constants.eta;
            break;
        }
        case ControllerKind::inner_product:
        case ControllerKind::augmented_inner_product: {
            const PopulationMoments m = population_moments(obj, x, data);
            if (!exact_inner_product_test(m, b, constants.theta, constants.nu).holds())
                throw PreconditionNotMet("exact inner-product/orthogonality test does not hold");
            est.tau_bound = 1.0 + constants.theta * constants.theta + constants.nu * constants.nu;
            break;
        }
    }

    const Matrix g = all_sample_grads(obj, x, data);
    const Vector full = mean_of_rows(g);
    const double full_sq = sq_norm(full);
    if (full_sq == 0.0) throw ZeroMeanGradient("full gradient is zero");
    const std::size_t d = full.size();
    const bool coordwise = kind == ControllerKind::norm_coordinatewise;

    RunningMean ratio;
    std::vector<RunningMean> coord(coordwise ? d : 0);
    Vector gb(d);
    for (std::size_t r = 0; r < n_resamples; ++r) {
        resampled_mean(g, draw_with_replacement(rng, data.size(), b), gb);
        ratio.add(sq_norm(gb) / full_sq);
        for (std::size_t j = 0; j < coord.size(); ++j)
            if (full[j] != 0.0) coord[j].add(gb[j] * gb[j] / (full[j] * full[j]));
    }
    est.tau_hat = ratio.mean();
    est.std_err = ratio.std_err();
    est.holds = est.tau_hat <= est.tau_bound + 3.0 * est.std_err;
    if (coordwise) {
        est.coord_tau_hat.assign(d, 1.0);
        est.coord_std_err.assign(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            if (coord[j].count == 0) continue;
            est.coord_tau_hat[j] = coord[j].mean();
            est.coord_std_err[j] = coord[j].std_err();
            if (est.coord_tau_hat[j] > est.tau_bound + 3.0 * est.coord_std_err[j]) est.holds = false;
        }
    }
    return est;
}

bool AgreementResult::within(double sigmas) const {
    const double slack = 1e-12 * (std::abs(approx_mean) + std::abs(exact_mean));
    return std::abs(diff_mean) <= sigmas * diff_std_err + slack;
}

AgreementResult approx_exact_agreement(const Objective& obj, std::span<const double> x,
                                       const Dataset& data, std::size_t b,
                                       std::size_t n_resamples, Rng& rng) {
    if (b < 2) throw DegenerateBatch("approximate variance needs b >= 2");
    const Matrix g = all_sample_grads(obj, x, data);
    const Vector full = mean_of_rows(g);
    const std::size_t d = full.size();

    RunningMean approx, exact, diff;
    Vector gb(d);
    for (std::size_t r = 0; r < n_resamples; ++r) {
        const IndexList idx = draw_with_replacement(rng, data.size(), b);
        resampled_mean(g, idx, gb);
        double var = 0.0;
        for (std::size_t i : idx) {
            auto row = g.row(i);
            for (std::size_t j = 0; j < d; ++j) var += (row[j] - gb[j]) * (row[j] - gb[j]);
        }
        const double a = var / static_cast<double>(b - 1) / static_cast<double>(b);
        double e = 0.0;
        for (std::size_t j = 0; j < d; ++j) e += (gb[j] - full[j]) * (gb[j] - full[j]);
        approx.add(a);
        exact.add(e);
        diff.add(a - e);
    }
    AgreementResult out;
    out.approx_mean = approx.mean();
    out.exact_mean = exact.mean();
    out.diff_mean = diff.mean();
    out.diff_std_err = diff.std_err();
    return out;
}

double fd_gradient_check(const Objective& obj, std::span<const double> x, const Dataset& data,
                         std::size_t sample, double h) {
    if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
    if (sample >= data.size()) throw IndexOutOfRange("sample index " + std::to_string(sample));
    const std::size_t d = obj.param_dim();
    Vector analytic(d);
    obj.sample_grad(x, data, sample, analytic);
    ParamVector probe(x.begin(), x.end());
    double worst = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double orig = probe[j];
        // Divide by the step actually representable at this x.
        const double xp = orig + h, xm = orig - h;
        probe[j] = xp;
        const double fp = obj.sample_loss(probe, data, sample);
        probe[j] = xm;
        const double fm = obj.sample_loss(probe, data, sample);
        probe[j] = orig;
        worst = std::max(worst, std::abs((fp - fm) / (xp - xm) - analytic[j]));
    }
    return worst;
}

bool SeqLemmaResult::holds() const {
    auto le = [](double lhs, double bound) {
        return lhs <= bound + 1e-12 * std::max(1.0, std::abs(bound));
    };
    return le(lhs1, bound1) && le(lhs2, bound2);
}

SeqLemmaResult seq_lemma_check(std::span<const double> a, std::size_t K) {
    if (a.empty() || !(a[0] > 0.0)) throw ConfigError("sequence lemma needs a_0 > 0");
    if (K + 1 > a.size()) throw ConfigError("sequence shorter than K + 1 terms");
    for (std::size_t k = 0; k <= K; ++k)
        if (!(a[k] >= 0.0)) throw ConfigError("sequence lemma needs non-negative terms");
    SeqLemmaResult out;
    double partial = a[0];
    for (std::size_t k = 1; k <= K; ++k) {
        partial += a[k];
        out.lhs1 += a[k] / (partial * std::sqrt(partial));
        out.lhs2 += a[k] / partial;
    }
    out.bound1 = 2.0 / std::sqrt(a[0]);
    out.bound2 = std::log(partial) - std::log(a[0]);
    return out;
}

// ------------------------------------------------------------------- audit

bool AuditReport::passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const AuditCheck& c) { return c.passed || c.skipped; });
}

std::string AuditReport::to_json() const {
    nlohmann::ordered_json root;
    root["passed"] = passed();
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const AuditCheck& c : checks) {
        nlohmann::ordered_json j;
        j["name"] = c.name;
        j["passed"] = c.passed;
        j["skipped"] = c.skipped;
        nlohmann::ordered_json vals = nlohmann::ordered_json::object();
        for (const auto& [k, v] : c.values) {
            if (std::isfinite(v))
                vals[k] = v;
            else
                vals[k] = nullptr;
        }
        j["values"] = vals;
        j["std_err"] = c.std_err;
        if (!c.note.empty()) j["note"] = c.note;
        arr.push_back(j);
    }
    root["checks"] = arr;
    return root.dump(2) + "\n";
}

namespace {

AuditCheck audit_fd(const Objective& obj, std::span<const double> x, const Dataset& data,
                    const AuditOptions& opts, Rng& rng) {
    AuditCheck c;
    c.name = "fd_gradient_check";
    double worst = 0.0;
    const std::size_t samples = std::min(opts.fd_samples, data.size());
    for (std::size_t s = 0; s < samples; ++s)
        worst = std::max(worst, fd_gradient_check(obj, x, data, rng.index(data.size()), opts.fd_step));
    c.values["max_abs_err"] = worst;
    c.values["tolerance"] = opts.fd_tolerance;
    c.values["samples"] = static_cast<double>(samples);
    c.passed = worst <= opts.fd_tolerance;
    return c;
}

AuditCheck audit_mc_vs_closed_form(const Objective& obj, std::span<const double> x,
                                   const Dataset& data, const PopulationMoments& m,
                                   std::size_t b, const AuditOptions& opts, Rng& rng) {
    AuditCheck c;
    c.name = "exact_norm_mc_vs_closed_form";
    const ExactTestResult mc = exact_norm_test(obj, x, data, b, opts.eta, opts.resamples, rng);
    const ExactTestResult cf = exact_norm_test_closed_form(m, b, opts.eta);
    c.values["batch_size"] = static_cast<double>(b);
    c.values["mc_lhs"] = mc.lhs;
    c.values["closed_form_lhs"] = cf.lhs;
    c.std_err = mc.std_err;
    c.passed = std::abs(mc.lhs - cf.lhs) <= 3.0 * mc.std_err + 1e-12 * std::abs(cf.lhs);
    return c;
}

AuditCheck audit_agreement(const Objective& obj, std::span<const double> x, const Dataset& data,
                           std::size_t b, const AuditOptions& opts, Rng& rng) {
    AuditCheck c;
    c.name = "approx_exact_agreement";
    const AgreementResult r = approx_exact_agreement(obj, x, data, b, opts.resamples, rng);
    c.values["batch_size"] = static_cast<double>(b);
    c.values["approx_mean"] = r.approx_mean;
    c.values["exact_mean"] = r.exact_mean;
    c.values["diff_mean"] = r.diff_mean;
    c.std_err = r.diff_std_err;
    c.passed = r.within(3.0);
    return c;
}

AuditCheck audit_esg(const std::string& name, const Objective& obj, std::span<const double> x,
                     const Dataset& data, std::size_t b, ControllerKind kind,
                     const AuditOptions& opts, Rng& rng) {
    AuditCheck c;
    c.name = name;
    if (b == 0 || b > data.size()) {
        c.skipped = true;
        c.note = "no batch size up to n satisfies the exact test at this iterate";
        return c;
    }
    c.values["batch_size"] = static_cast<double>(b);
    try {
        const EsgEstimate e =
            esg_check(obj, x, data, b, kind, {opts.eta, opts.theta, opts.nu}, opts.resamples, rng);
        c.values["tau_hat"] = e.tau_hat;
        c.values["tau_bound"] = e.tau_bound;
        c.std_err = e.std_err;
        c.passed = e.holds && e.tau_hat >= 1.0 - 3.0 * e.std_err;
    } catch (const PreconditionNotMet& ex) {
        c.skipped = true;
        c.note = ex.what();
    }
    return c;
}

AuditCheck audit_lemma(const AuditOptions& opts, Rng& rng) {
    AuditCheck c;
    c.name = "seq_lemma_check";
    std::size_t violations = 0;
    for (std::size_t s = 0; s < opts.lemma_sequences; ++s) {
        const std::size_t len = 1 + rng.index(200);
        Vector a(len);
        a[0] = std::exp(rng.uniform(-5.0, 5.0));
        for (std::size_t k = 1; k < len; ++k) a[k] = rng.uniform() < 0.2 ? 0.0 : std::exp(rng.uniform(-5.0, 5.0));
        if (!seq_lemma_check(a, len - 1).holds()) ++violations;
    }
    c.values["sequences"] = static_cast<double>(opts.lemma_sequences);
    c.values["violations"] = static_cast<double>(violations);
    c.passed = violations == 0;
    return c;
}

std::size_t ceil_batch(double need, std::size_t n) {
    if (!std::isfinite(need) || need > static_cast<double>(n)) return 0;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(need)));
}

}  // namespace

AuditReport run_audit(const Objective& obj, const Dataset& data, const AuditOptions& opts) {
    std::unique_ptr<CorruptedObjective> corrupted;
    const Objective* target = &obj;
    if (opts.corrupt_gradient) {
        corrupted = std::make_unique<CorruptedObjective>(obj, 1e-2);
        target = corrupted.get();
    }
    Rng rng(mix_seed(opts.seed, 0xa0d17));
    ParamVector x = target->initial_params(opts.seed);
    for (double& v : x) v += 0.5 * rng.normal();

    AuditReport report;
    report.checks.push_back(audit_fd(*target, x, data, opts, rng));

    const std::size_t n = data.size();
    const PopulationMoments m = population_moments(*target, x, data);
    const std::size_t b_small = std::min<std::size_t>(n, 32);
    report.checks.push_back(audit_mc_vs_closed_form(*target, x, data, m, b_small, opts, rng));
    report.checks.push_back(audit_agreement(*target, x, data, std::max<std::size_t>(2, b_small), opts, rng));

    // Double the minimal batch so Monte-Carlo noise rarely flips the precondition.
    const std::size_t b_norm_min = min_batch_for_exact_norm_test(m, n, opts.eta);
    const std::size_t b_norm = b_norm_min == 0 ? 0 : std::min(n, 2 * b_norm_min);
    report.checks.push_back(audit_esg("esg_norm", *target, x, data, b_norm, ControllerKind::norm, opts, rng));

    const double g2 = m.full_grad_sq_norm;
    const double need_aug = g2 > 0.0 ? std::max(m.ip_var / (opts.theta * opts.theta * g2 * g2),
                                                m.ortho_var / (opts.nu * opts.nu * g2))
                                     : std::numeric_limits<double>::infinity();
    report.checks.push_back(audit_esg("esg_augmented_inner_product", *target, x, data, ceil_batch(need_aug, n),
                                      ControllerKind::augmented_inner_product, opts, rng));

    double need_coord = 0.0;
    for (std::size_t j = 0; j < m.coord_var.size(); ++j) {
        const double gj = m.full_grad[j];
        if (m.coord_var[j] == 0.0) continue;
        need_coord = gj == 0.0 ? std::numeric_limits<double>::infinity()
                               : std::max(need_coord, m.coord_var[j] / (opts.eta * opts.eta * gj * gj));
    }
    report.checks.push_back(audit_esg("esg_coordinatewise", *target, x, data, ceil_batch(need_coord, n),
                                      ControllerKind::norm_coordinatewise, opts, rng));

    report.checks.push_back(audit_lemma(opts, rng));
    return report;
}

}  // namespace adabatch

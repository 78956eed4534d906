#include "adabatch/core.hpp"

#include <cmath>
#include <stdexcept>

#include "adabatch/errors.hpp"

namespace adabatch {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s;
}

double sq_norm(std::span<const double> a) { return dot(a, a); }

bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

StatsAccumulator::StatsAccumulator(std::size_t dim, StatsRequest request)
    : dim_(dim), request_(request), sum_(dim, 0.0) {
    if (request_.coordinate) coord_sum_.assign(dim, 0.0);
    if (request_.orthogonality) residual_.assign(dim, 0.0);
}

void StatsAccumulator::add_mean_rows(const Matrix& rows) {
    if (mean_fixed_) throw std::logic_error("StatsAccumulator: mean pass already finished");
    if (rows.cols() != dim_) throw std::invalid_argument("StatsAccumulator: dimension mismatch");
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto r = rows.row(i);
        for (std::size_t j = 0; j < dim_; ++j) sum_[j] += r[j];
    }
    count_ += rows.rows();
}

void StatsAccumulator::finish_mean_pass() {
    if (count_ == 0) throw EmptyBatch("cannot compute statistics of an empty batch");
    const std::size_t b = count_;
    const bool wants_variance = request_.any();
    if (wants_variance && b < 2)
        throw DegenerateBatch("sample variance needs at least two per-sample gradients");
    mean_.resize(dim_);
    for (std::size_t j = 0; j < dim_; ++j) mean_[j] = sum_[j] / static_cast<double>(b);
    mean_sq_norm_ = sq_norm(mean_);
    if (request_.orthogonality && mean_sq_norm_ == 0.0)
        throw ZeroMeanGradient("orthogonality variance is undefined for a zero mean gradient");
    mean_fixed_ = true;
}

void StatsAccumulator::add_deviation_rows(const Matrix& rows) {
    if (!mean_fixed_) throw std::logic_error("StatsAccumulator: mean pass not finished");
    if (rows.cols() != dim_) throw std::invalid_argument("StatsAccumulator: dimension mismatch");
    if (!request_.any()) {
        deviation_count_ += rows.rows();
        return;
    }
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto r = rows.row(i);
        // Everything is expressed through the deviation d = g_i - mean:
        //   <g_i, m> - |m|^2 = <d, m>, and the orthogonal residual of g_i
        //   equals the residual of d because the m-component cancels.
        double dev_sq = 0.0;
        double dev_dot_mean = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double d = r[j] - mean_[j];
            dev_sq += d * d;
            dev_dot_mean += d * mean_[j];
            if (request_.coordinate) coord_sum_[j] += d * d;
        }
        norm_sum_ += dev_sq;
        ip_sum_ += dev_dot_mean * dev_dot_mean;
        if (request_.orthogonality) {
            const double c = dev_dot_mean / mean_sq_norm_;
            double res_sq = 0.0;
            for (std::size_t j = 0; j < dim_; ++j) {
                const double e = (r[j] - mean_[j]) - c * mean_[j];
                res_sq += e * e;
            }
            ortho_sum_ += res_sq;
        }
    }
    deviation_count_ += rows.rows();
}

BatchGradStats StatsAccumulator::finish() const {
    if (!mean_fixed_) throw std::logic_error("StatsAccumulator: mean pass not finished");
    if (request_.any() && deviation_count_ != count_)
        throw std::logic_error("StatsAccumulator: deviation pass saw a different row count");

    BatchGradStats out;
    out.batch_size = count_;
    out.mean_grad = mean_;
    out.mean_grad_sq_norm = mean_sq_norm_;
    if (!request_.any()) return out;

    const double denom = static_cast<double>(count_ - 1);
    if (request_.norm) out.norm_var = norm_sum_ / denom;
    if (request_.inner_product) out.ip_var = ip_sum_ / denom;
    if (request_.orthogonality) out.ortho_var = ortho_sum_ / denom;
    if (request_.coordinate) {
        Vector cv(dim_);
        for (std::size_t j = 0; j < dim_; ++j) cv[j] = coord_sum_[j] / denom;
        out.coord_var = std::move(cv);
    }
    return out;
}

BatchGradStats compute_batch_stats(const PerSampleGradBatch& g, StatsRequest request) {
    StatsAccumulator acc(g.dim(), request);
    acc.add_mean_rows(g.grads);
    acc.finish_mean_pass();
    acc.add_deviation_rows(g.grads);
    return acc.finish();
}

BatchGradStats compute_batch_stats(const PerSampleGradBatch& g, bool need_ip, bool need_ortho,
                                   bool need_coord) {
    return compute_batch_stats(g, StatsRequest{true, need_ip, need_ortho, need_coord});
}

}  // namespace adabatch

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace adabatch {

using Vector = std::vector<double>;
using ParamVector = std::vector<double>;
using IndexList = std::vector<std::size_t>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double sq_norm(std::span<const double> a);
bool all_finite(std::span<const double> a);

/// Per-sample gradients of one batch: row i is the gradient at sample_ids[i].
struct PerSampleGradBatch {
    Matrix grads;
    IndexList sample_ids;

    std::size_t batch_size() const { return grads.rows(); }
    std::size_t dim() const { return grads.cols(); }
};

/// Which variance fields compute_batch_stats should fill in.
struct StatsRequest {
    bool norm = true;
    bool inner_product = false;
    bool orthogonality = false;
    bool coordinate = false;

    bool any() const { return norm || inner_product || orthogonality || coordinate; }
};

/// Mean gradient plus the sample variances the batch-size tests consume.
///
/// Variances use the unbiased 1/(b-1) divisor. Fields that were not requested
/// are left empty.
struct BatchGradStats {
    std::size_t batch_size = 0;
    Vector mean_grad;
    double mean_grad_sq_norm = 0.0;
    std::optional<double> norm_var;
    std::optional<double> ip_var;
    std::optional<double> ortho_var;
    std::optional<Vector> coord_var;
};

/// Two-pass streaming accumulator for BatchGradStats.
///
/// Rows are fed once to build the mean, then fed again (in any chunking) to
/// accumulate squared deviations. Feeding the rows in the same order on both
/// passes makes the result independent of chunk boundaries.
class StatsAccumulator {
public:
    StatsAccumulator(std::size_t dim, StatsRequest request);

    void add_mean_rows(const Matrix& rows);
    /// Fixes the mean. Must be called between the two passes.
    void finish_mean_pass();
    void add_deviation_rows(const Matrix& rows);
    BatchGradStats finish() const;

    std::size_t dim() const { return dim_; }
    std::size_t count() const { return count_; }
    const Vector& mean() const { return mean_; }

private:
    std::size_t dim_;
    StatsRequest request_;
    std::size_t count_ = 0;
    std::size_t deviation_count_ = 0;
    bool mean_fixed_ = false;
    Vector sum_;
    Vector mean_;
    double mean_sq_norm_ = 0.0;
    double norm_sum_ = 0.0;
    double ip_sum_ = 0.0;
    double ortho_sum_ = 0.0;
    Vector coord_sum_;
    Vector residual_;
};

/// Mean gradient and requested sample variances of a per-sample gradient batch.
///
/// Throws DegenerateBatch when any variance is requested on fewer than two rows
/// and ZeroMeanGradient when the orthogonality variance is requested but the
/// mean gradient is exactly zero.
BatchGradStats compute_batch_stats(const PerSampleGradBatch& g, StatsRequest request);

BatchGradStats compute_batch_stats(const PerSampleGradBatch& g, bool need_ip,
                                   bool need_ortho, bool need_coord);

}  // namespace adabatch

// Test-only generators and brute-force oracles. Nothing here calls into the
// statistics code under test.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "adabatch/core.hpp"
#include "adabatch/objectives.hpp"

namespace testsupport {

using adabatch::Matrix;
using adabatch::PerSampleGradBatch;

/// Small hand-rolled generator so property tests do not depend on the
/// library's Rng.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    std::size_t integer(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_);
    }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

    Matrix matrix(std::size_t rows, std::size_t cols, double scale = 1.0, double offset = 0.0) {
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) m(i, j) = offset + scale * normal();
        return m;
    }

    /// Gradient batch whose rows share a common drift so the mean is nonzero.
    PerSampleGradBatch grad_batch(std::size_t b, std::size_t d) {
        PerSampleGradBatch g;
        g.grads = Matrix(b, d);
        std::vector<double> drift(d);
        for (double& v : drift) v = uniform(-2.0, 2.0);
        const double spread = std::exp(uniform(-3.0, 2.0));
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) g.grads(i, j) = drift[j] + spread * normal();
        for (std::size_t i = 0; i < b; ++i) g.sample_ids.push_back(i);
        return g;
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

inline PerSampleGradBatch batch_of(const std::vector<std::vector<double>>& rows) {
    PerSampleGradBatch g;
    g.grads = Matrix(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) g.grads(i, j) = rows[i][j];
        g.sample_ids.push_back(i);
    }
    return g;
}

/// Direct evaluation of the sample-variance definitions in long double.
struct BruteStats {
    std::vector<long double> mean;
    long double mean_sq = 0;
    long double norm_var = 0;
    long double ip_var = 0;
    long double ortho_var = 0;
    std::vector<long double> coord_var;
};

inline BruteStats brute_stats(const Matrix& g) {
    const std::size_t b = g.rows();
    const std::size_t d = g.cols();
    BruteStats s;
    s.mean.assign(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
        long double acc = 0;
        for (std::size_t i = 0; i < b; ++i) acc += g(i, j);
        s.mean[j] = acc / static_cast<long double>(b);
    }
    for (auto m : s.mean) s.mean_sq += m * m;
    const long double denom = static_cast<long double>(b) - 1;
    s.coord_var.assign(d, 0);
    for (std::size_t i = 0; i < b; ++i) {
        long double dist = 0;
        long double ip = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const long double diff = g(i, j) - s.mean[j];
            dist += diff * diff;
            s.coord_var[j] += diff * diff;
            ip += static_cast<long double>(g(i, j)) * s.mean[j];
        }
        s.norm_var += dist;
        s.ip_var += (ip - s.mean_sq) * (ip - s.mean_sq);
        if (s.mean_sq > 0) {
            long double r2 = 0;
            for (std::size_t j = 0; j < d; ++j) {
                const long double r = g(i, j) - (ip / s.mean_sq) * s.mean[j];
                r2 += r * r;
            }
            s.ortho_var += r2;
        }
    }
    s.norm_var /= denom;
    s.ip_var /= denom;
    s.ortho_var /= denom;
    for (auto& c : s.coord_var) c /= denom;
    return s;
}

inline double rel_err(double got, long double want) {
    const long double scale = std::max<long double>(std::fabs(want), 1e-300L);
    return static_cast<double>(std::fabs(static_cast<long double>(got) - want) / scale);
}

/// Least-squares slope of log(y) on log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

/// Dataset where every sample is identical, so all per-sample gradients agree.
inline adabatch::Dataset constant_dataset(std::size_t n, std::size_t p, int classes) {
    adabatch::Dataset d;
    d.features = Matrix(n, p, 0.5);
    d.labels.assign(n, 0);
    d.num_classes = static_cast<std::size_t>(classes);
    return d;
}

inline adabatch::Dataset anchors(std::vector<std::vector<double>> rows) {
    adabatch::Dataset d;
    d.features = Matrix(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) d.features(i, j) = rows[i][j];
    return d;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("adabatch_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testsupport

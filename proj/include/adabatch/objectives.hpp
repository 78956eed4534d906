#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adabatch/core.hpp"

namespace adabatch {

/// Finite training set. Classification sets carry integer labels,
/// regression sets carry real targets; either may be empty.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<double> targets;
    std::size_t num_classes = 0;

    std::size_t size() const { return features.rows(); }
    std::size_t feature_dim() const { return features.cols(); }
    bool is_classification() const { return !labels.empty(); }

    /// Rows selected by `indices`, in order.
    Dataset subset(std::span<const std::size_t> indices) const;

    /// Throws ConfigError if the dataset violates its invariants.
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

enum class ObjectiveKind { quadratic, logistic_multiclass, mlp };
enum class Activation { tanh, relu };

std::string to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(const std::string& s);
std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

/// Empirical-risk objective F(x) = (1/n) sum_i f(x; xi_i) with closed-form
/// per-sample gradients.
class Objective {
public:
    virtual ~Objective() = default;

    virtual ObjectiveKind kind() const = 0;
    virtual std::size_t param_dim() const = 0;

    /// f(x; xi_i) for a single sample.
    virtual double sample_loss(std::span<const double> x, const Dataset& data,
                               std::size_t i) const = 0;
    /// Writes grad f(x; xi_i) into `out` (size param_dim()).
    virtual void sample_grad(std::span<const double> x, const Dataset& data, std::size_t i,
                             std::span<double> out) const = 0;

    /// Predicted class for classification objectives; nullopt otherwise.
    virtual std::optional<int> predict(std::span<const double> x, const Dataset& data,
                                       std::size_t i) const {
        (void)x;
        (void)data;
        (void)i;
        return std::nullopt;
    }

    /// Starting iterate. Deterministic in `seed`.
    virtual ParamVector initial_params(std::uint64_t seed) const;

    /// Throws ConfigError if `data` has the wrong shape for this objective.
    virtual void check_dataset(const Dataset& data) const = 0;
};

/// f(x; xi) = 0.5 * |x - xi|^2 with xi the feature row.
class QuadraticObjective final : public Objective {
public:
    explicit QuadraticObjective(std::size_t dim) : dim_(dim) {}

    ObjectiveKind kind() const override { return ObjectiveKind::quadratic; }
    std::size_t param_dim() const override { return dim_; }
    double sample_loss(std::span<const double> x, const Dataset& data,
                       std::size_t i) const override;
    void sample_grad(std::span<const double> x, const Dataset& data, std::size_t i,
                     std::span<double> out) const override;
    void check_dataset(const Dataset& data) const override;

private:
    std::size_t dim_;
};

/// Softmax cross-entropy over an affine model. Parameters are laid out as
/// `classes` rows of (features + 1) entries, the last entry of each row being
/// the bias. Optional L2 penalty 0.5 * l2 * |W|^2 on the weights only.
class LogisticObjective final : public Objective {
public:
    LogisticObjective(std::size_t features, std::size_t classes, double l2 = 0.0);

    ObjectiveKind kind() const override { return ObjectiveKind::logistic_multiclass; }
    std::size_t param_dim() const override { return classes_ * (features_ + 1); }
    double sample_loss(std::span<const double> x, const Dataset& data,
                       std::size_t i) const override;
    void sample_grad(std::span<const double> x, const Dataset& data, std::size_t i,
                     std::span<double> out) const override;
    std::optional<int> predict(std::span<const double> x, const Dataset& data,
                               std::size_t i) const override;
    void check_dataset(const Dataset& data) const override;

    std::size_t classes() const { return classes_; }

private:
    void logits(std::span<const double> x, std::span<const double> feat,
                std::span<double> out) const;

    std::size_t features_;
    std::size_t classes_;
    double l2_;
};

/// One-hidden-layer perceptron with softmax cross-entropy output.
///
/// Layout: W1 (hidden x features), b1 (hidden), W2 (classes x hidden), b2 (classes).
class MlpObjective final : public Objective {
public:
    MlpObjective(std::size_t features, std::size_t hidden, std::size_t classes,
                 Activation activation);

    ObjectiveKind kind() const override { return ObjectiveKind::mlp; }
    std::size_t param_dim() const override;
    double sample_loss(std::span<const double> x, const Dataset& data,
                       std::size_t i) const override;
    void sample_grad(std::span<const double> x, const Dataset& data, std::size_t i,
                     std::span<double> out) const override;
    std::optional<int> predict(std::span<const double> x, const Dataset& data,
                               std::size_t i) const override;
    ParamVector initial_params(std::uint64_t seed) const override;
    void check_dataset(const Dataset& data) const override;

private:
    struct Forward {
        std::vector<double> pre;
        std::vector<double> hidden;
        std::vector<double> probs;
    };
    Forward forward(std::span<const double> x, std::span<const double> feat) const;

    std::size_t features_;
    std::size_t hidden_;
    std::size_t classes_;
    Activation activation_;
};

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::logistic_multiclass;
    std::size_t hidden = 32;
    Activation activation = Activation::tanh;
    double l2 = 0.0;
};

/// Builds the objective described by `spec` sized for `data`.
std::unique_ptr<Objective> make_objective(const ObjectiveSpec& spec, const Dataset& data);

PerSampleGradBatch per_sample_grads(const Objective& obj, std::span<const double> x,
                                    const Dataset& data, std::span<const std::size_t> batch);

/// Mean of per-sample losses over `batch`.
double batch_loss(const Objective& obj, std::span<const double> x, const Dataset& data,
                  std::span<const std::size_t> batch);

/// F(x) over the whole dataset.
double full_loss(const Objective& obj, std::span<const double> x, const Dataset& data);

/// grad F(x) = (1/n) sum_i grad f(x; xi_i).
Vector full_gradient(const Objective& obj, std::span<const double> x, const Dataset& data);

/// Fraction of samples whose argmax prediction matches the label.
std::optional<double> accuracy(const Objective& obj, std::span<const double> x,
                               const Dataset& data);

enum class SyntheticKind { gaussian_blobs, linear_regression, quadratic_anchors };

std::string to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(const std::string& s);

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::gaussian_blobs;
    std::size_t n = 1000;
    std::size_t p = 10;
    std::size_t classes = 2;
    std::uint64_t seed = 0;
    double noise = 1.0;
};

/// Deterministic synthetic dataset.
///
/// gaussian_blobs: class centres drawn from N(0, (9/p) I), so every coordinate
/// carries some class signal and |centre| is about 3; samples are
/// centre + noise * N(0, I). With noise = 0 the classes are distinct point
/// masses, which nearest-centre (an affine argmax) separates exactly.
/// linear_regression: y = <a, w*> + noise * eps.
/// quadratic_anchors: N(0, I) points scaled by (1 + noise).
Dataset make_synthetic(const SyntheticSpec& spec);
Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::size_t p, std::uint64_t seed,
                       double noise);

/// Reads an IDX image/label pair (MNIST layout). Pixels are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Reads a CSV file with a header row: feature columns followed by an integer
/// label column.
Dataset load_csv(const std::string& path);

}  // namespace adabatch

#include "adabatch/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "adabatch/errors.hpp"
#include "adabatch/random.hpp"

namespace adabatch {

namespace {

double log_sum_exp(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

// Overwrites z with softmax(z).
void softmax_inplace(std::span<double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        s += v;
    }
    for (double& v : z) v /= s;
}

int argmax(std::span<const double> z) {
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

void check_param_size(std::span<const double> x, std::size_t d) {
    if (x.size() != d)
        throw std::invalid_argument("parameter vector has size " + std::to_string(x.size()) +
                                    ", objective expects " + std::to_string(d));
}

void check_classification(const Dataset& data, std::size_t features, std::size_t classes,
                          const char* what) {
    if (!data.is_classification())
        throw ConfigError(std::string(what) + " objective needs a labelled dataset");
    if (data.feature_dim() != features)
        throw ConfigError(std::string(what) + " objective built for " + std::to_string(features) +
                          " features, dataset has " + std::to_string(data.feature_dim()));
    if (data.num_classes > classes)
        throw ConfigError(std::string(what) + " objective has fewer classes than the dataset");
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.num_classes = num_classes;
    out.features = Matrix(indices.size(), feature_dim());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t i = indices[r];
        if (i >= size()) throw IndexOutOfRange("dataset index " + std::to_string(i));
        auto src = features.row(i);
        std::copy(src.begin(), src.end(), out.features.row(r).begin());
        if (!labels.empty()) out.labels.push_back(labels[i]);
        if (!targets.empty()) out.targets.push_back(targets[i]);
    }
    return out;
}

void Dataset::validate() const {
    if (size() < 2) throw ConfigError("dataset needs at least two samples");
    if (feature_dim() < 1) throw ConfigError("dataset needs at least one feature");
    if (!all_finite(features.data())) throw ConfigError("dataset contains non-finite features");
    if (!labels.empty()) {
        if (labels.size() != size()) throw ConfigError("label count does not match sample count");
        for (int y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
                throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
    if (!targets.empty() && targets.size() != size())
        throw ConfigError("target count does not match sample count");
}

std::string to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::quadratic: return "quadratic";
        case ObjectiveKind::logistic_multiclass: return "logistic";
        case ObjectiveKind::mlp: return "mlp";
    }
    return "?";
}

ObjectiveKind parse_objective_kind(const std::string& s) {
    if (s == "quadratic") return ObjectiveKind::quadratic;
    if (s == "logistic" || s == "logistic_multiclass") return ObjectiveKind::logistic_multiclass;
    if (s == "mlp") return ObjectiveKind::mlp;
    throw ConfigError("unknown objective kind '" + s + "'");
}

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + s + "'");
}

ParamVector Objective::initial_params(std::uint64_t) const {
    return ParamVector(param_dim(), 0.0);
}

// ---------------------------------------------------------------- quadratic

double QuadraticObjective::sample_loss(std::span<const double> x, const Dataset& data,
                                       std::size_t i) const {
    auto xi = data.features.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
        const double d = x[j] - xi[j];
        s += d * d;
    }
    return 0.5 * s;
}

void QuadraticObjective::sample_grad(std::span<const double> x, const Dataset& data,
                                     std::size_t i, std::span<double> out) const {
    auto xi = data.features.row(i);
    for (std::size_t j = 0; j < dim_; ++j) out[j] = x[j] - xi[j];
}

void QuadraticObjective::check_dataset(const Dataset& data) const {
    if (data.feature_dim() != dim_)
        throw ConfigError("quadratic objective dimension does not match dataset features");
}

// ----------------------------------------------------------------- logistic

LogisticObjective::LogisticObjective(std::size_t features, std::size_t classes, double l2)
    : features_(features), classes_(classes), l2_(l2) {
    if (classes < 2) throw ConfigError("logistic objective needs at least two classes");
    if (l2 < 0.0) throw ConfigError("l2 penalty must be non-negative");
}

void LogisticObjective::logits(std::span<const double> x, std::span<const double> feat,
                               std::span<double> out) const {
    const std::size_t stride = features_ + 1;
    for (std::size_t c = 0; c < classes_; ++c) {
        auto w = x.subspan(c * stride, features_);
        out[c] = dot(w, feat) + x[c * stride + features_];
    }
}

double LogisticObjective::sample_loss(std::span<const double> x, const Dataset& data,
                                      std::size_t i) const {
    std::vector<double> z(classes_);
    logits(x, data.features.row(i), z);
    double loss = log_sum_exp(z) - z[static_cast<std::size_t>(data.labels[i])];
    if (l2_ > 0.0) {
        const std::size_t stride = features_ + 1;
        double w2 = 0.0;
        for (std::size_t c = 0; c < classes_; ++c) w2 += sq_norm(x.subspan(c * stride, features_));
        loss += 0.5 * l2_ * w2;
    }
    return loss;
}

void LogisticObjective::sample_grad(std::span<const double> x, const Dataset& data,
                                    std::size_t i, std::span<double> out) const {
    auto feat = data.features.row(i);
    std::vector<double> p(classes_);
    logits(x, feat, p);
    softmax_inplace(p);
    p[static_cast<std::size_t>(data.labels[i])] -= 1.0;
    const std::size_t stride = features_ + 1;
    for (std::size_t c = 0; c < classes_; ++c) {
        double* row = out.data() + c * stride;
        const double* w = x.data() + c * stride;
        for (std::size_t j = 0; j < features_; ++j) row[j] = p[c] * feat[j] + l2_ * w[j];
        row[features_] = p[c];
    }
}

std::optional<int> LogisticObjective::predict(std::span<const double> x, const Dataset& data,
                                              std::size_t i) const {
    std::vector<double> z(classes_);
    logits(x, data.features.row(i), z);
    return argmax(z);
}

void LogisticObjective::check_dataset(const Dataset& data) const {
    check_classification(data, features_, classes_, "logistic");
}

// ---------------------------------------------------------------------- mlp

MlpObjective::MlpObjective(std::size_t features, std::size_t hidden, std::size_t classes,
                           Activation activation)
    : features_(features), hidden_(hidden), classes_(classes), activation_(activation) {
    if (classes < 2) throw ConfigError("mlp objective needs at least two classes");
    if (hidden < 1) throw ConfigError("mlp objective needs at least one hidden unit");
}

std::size_t MlpObjective::param_dim() const {
    return hidden_ * (features_ + 1) + classes_ * (hidden_ + 1);
}

MlpObjective::Forward MlpObjective::forward(std::span<const double> x,
                                            std::span<const double> feat) const {
    Forward f;
    f.pre.resize(hidden_);
    f.hidden.resize(hidden_);
    f.probs.resize(classes_);
    const double* w1 = x.data();
    const double* b1 = w1 + hidden_ * features_;
    const double* w2 = b1 + hidden_;
    const double* b2 = w2 + classes_ * hidden_;
    for (std::size_t h = 0; h < hidden_; ++h) {
        double s = b1[h];
        for (std::size_t j = 0; j < features_; ++j) s += w1[h * features_ + j] * feat[j];
        f.pre[h] = s;
        f.hidden[h] = activation_ == Activation::tanh ? std::tanh(s) : std::max(s, 0.0);
    }
    for (std::size_t c = 0; c < classes_; ++c) {
        double s = b2[c];
        for (std::size_t h = 0; h < hidden_; ++h) s += w2[c * hidden_ + h] * f.hidden[h];
        f.probs[c] = s;
    }
    return f;
}

double MlpObjective::sample_loss(std::span<const double> x, const Dataset& data,
                                 std::size_t i) const {
    Forward f = forward(x, data.features.row(i));
    return log_sum_exp(f.probs) - f.probs[static_cast<std::size_t>(data.labels[i])];
}

void MlpObjective::sample_grad(std::span<const double> x, const Dataset& data, std::size_t i,
                               std::span<double> out) const {
    auto feat = data.features.row(i);
    Forward f = forward(x, feat);
    softmax_inplace(f.probs);
    f.probs[static_cast<std::size_t>(data.labels[i])] -= 1.0;
    const std::vector<double>& dz = f.probs;

    const double* w2 = x.data() + hidden_ * (features_ + 1);
    double* gw1 = out.data();
    double* gb1 = gw1 + hidden_ * features_;
    double* gw2 = gb1 + hidden_;
    double* gb2 = gw2 + classes_ * hidden_;

    for (std::size_t c = 0; c < classes_; ++c) {
        for (std::size_t h = 0; h < hidden_; ++h) gw2[c * hidden_ + h] = dz[c] * f.hidden[h];
        gb2[c] = dz[c];
    }
    for (std::size_t h = 0; h < hidden_; ++h) {
        double dh = 0.0;
        for (std::size_t c = 0; c < classes_; ++c) dh += w2[c * hidden_ + h] * dz[c];
        const double dact = activation_ == Activation::tanh
                                 ? 1.0 - f.hidden[h] * f.hidden[h]
                                 : (f.pre[h] > 0.0 ? 1.0 : 0.0);
        const double dpre = dh * dact;
        for (std::size_t j = 0; j < features_; ++j) gw1[h * features_ + j] = dpre * feat[j];
        gb1[h] = dpre;
    }
}

std::optional<int> MlpObjective::predict(std::span<const double> x, const Dataset& data,
                                         std::size_t i) const {
    return argmax(forward(x, data.features.row(i)).probs);
}

ParamVector MlpObjective::initial_params(std::uint64_t seed) const {
    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    Rng rng(mix_seed(seed, 0x6d6c70));
    ParamVector x(param_dim());
    const double a1 = 1.0 / std::sqrt(static_cast<double>(features_));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
    const std::size_t first = hidden_ * (features_ + 1);
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double a = k < first ? a1 : a2;
        x[k] = rng.uniform(-a, a);
    }
    return x;
}

void MlpObjective::check_dataset(const Dataset& data) const {
    check_classification(data, features_, classes_, "mlp");
}

// ------------------------------------------------------------ free functions

std::unique_ptr<Objective> make_objective(const ObjectiveSpec& spec, const Dataset& data) {
    switch (spec.kind) {
        case ObjectiveKind::quadratic:
            return std::make_unique<QuadraticObjective>(data.feature_dim());
        case ObjectiveKind::logistic_multiclass:
            if (!data.is_classification())
                throw ConfigError("logistic objective needs a labelled dataset");
            return std::make_unique<LogisticObjective>(data.feature_dim(),
                                                       std::max<std::size_t>(data.num_classes, 2),
                                                       spec.l2);
        case ObjectiveKind::mlp:
            if (!data.is_classification())
                throw ConfigError("mlp objective needs a labelled dataset");
            return std::make_unique<MlpObjective>(data.feature_dim(), spec.hidden,
                                                  std::max<std::size_t>(data.num_classes, 2),
                                                  spec.activation);
    }
    throw ConfigError("unknown objective kind");
}

PerSampleGradBatch per_sample_grads(const Objective& obj, std::span<const double> x,
                                    const Dataset& data, std::span<const std::size_t> batch) {
    check_param_size(x, obj.param_dim());
    if (!all_finite(x)) throw Error("iterate contains non-finite values");
    for (std::size_t i : batch)
        if (i >= data.size())
            throw IndexOutOfRange("sample index " + std::to_string(i) + " >= dataset size " +
                                  std::to_string(data.size()));
    PerSampleGradBatch out;
    out.grads = Matrix(batch.size(), obj.param_dim());
    out.sample_ids.assign(batch.begin(), batch.end());
    for (std::size_t r = 0; r < batch.size(); ++r) obj.sample_grad(x, data, batch[r], out.grads.row(r));
    return out;
}

double batch_loss(const Objective& obj, std::span<const double> x, const Dataset& data,
                  std::span<const std::size_t> batch) {
    if (batch.empty()) throw EmptyBatch("batch loss of an empty batch");
    check_param_size(x, obj.param_dim());
    double s = 0.0;
    for (std::size_t i : batch) {
        if (i >= data.size()) throw IndexOutOfRange("sample index " + std::to_string(i));
        s += obj.sample_loss(x, data, i);
    }
    return s / static_cast<double>(batch.size());
}

double full_loss(const Objective& obj, std::span<const double> x, const Dataset& data) {
    check_param_size(x, obj.param_dim());
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) s += obj.sample_loss(x, data, i);
    return s / static_cast<double>(data.size());
}

Vector full_gradient(const Objective& obj, std::span<const double> x, const Dataset& data) {
    check_param_size(x, obj.param_dim());
    const std::size_t d = obj.param_dim();
    Vector sum(d, 0.0);
    Vector g(d);
    for (std::size_t i = 0; i < data.size(); ++i) {
        obj.sample_grad(x, data, i, g);
        for (std::size_t j = 0; j < d; ++j) sum[j] += g[j];
    }
    for (double& v : sum) v /= static_cast<double>(data.size());
    return sum;
}

std::optional<double> accuracy(const Objective& obj, std::span<const double> x,
                               const Dataset& data) {
    if (!data.is_classification() || data.size() == 0) return std::nullopt;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto pred = obj.predict(x, data, i);
        if (!pred) return std::nullopt;
        if (*pred == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace adabatch

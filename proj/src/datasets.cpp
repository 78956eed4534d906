#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "adabatch/errors.hpp"
#include "adabatch/objectives.hpp"
#include "adabatch/random.hpp"

namespace adabatch {

std::string to_string(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::gaussian_blobs: return "gaussian-blobs";
        case SyntheticKind::linear_regression: return "linear-regression";
        case SyntheticKind::quadratic_anchors: return "quadratic-anchors";
    }
    return "?";
}

SyntheticKind parse_synthetic_kind(const std::string& s) {
    if (s == "gaussian-blobs" || s == "gaussian_blobs" || s == "blobs")
        return SyntheticKind::gaussian_blobs;
    if (s == "linear-regression" || s == "linear_regression")
        return SyntheticKind::linear_regression;
    if (s == "quadratic-anchors" || s == "quadratic_anchors")
        return SyntheticKind::quadratic_anchors;
    throw ConfigError("unknown synthetic dataset kind '" + s + "'");
}

namespace {

constexpr double kBlobSeparation = 3.0;

Dataset make_blobs(const SyntheticSpec& spec, Rng& rng) {
    if (spec.classes < 2) throw ConfigError("gaussian-blobs needs at least two classes");
    const std::size_t p = spec.p;
    const double spread = kBlobSeparation / std::sqrt(static_cast<double>(p));
    Matrix centres(spec.classes, p);
    for (double& v : centres.data()) v = spread * rng.normal();
    Dataset out;
    out.num_classes = spec.classes;
    out.features = Matrix(spec.n, p);
    out.labels.resize(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        // Round-robin first pass guarantees every class is present.
        const std::size_t c = i < spec.classes ? i : rng.index(spec.classes);
        out.labels[i] = static_cast<int>(c);
        for (std::size_t j = 0; j < p; ++j)
            out.features(i, j) = centres(c, j) + spec.noise * rng.normal();
    }
    return out;
}

Dataset make_linear_regression(const SyntheticSpec& spec, Rng& rng) {
    Vector w(spec.p);
    for (double& v : w) v = rng.normal();
    Dataset out;
    out.features = Matrix(spec.n, spec.p);
    out.targets.resize(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto row = out.features.row(i);
        for (double& v : row) v = rng.normal();
        out.targets[i] = dot(row, w) + spec.noise * rng.normal();
    }
    return out;
}

Dataset make_anchors(const SyntheticSpec& spec, Rng& rng) {
    Dataset out;
    out.features = Matrix(spec.n, spec.p);
    for (double& v : out.features.data()) v = (1.0 + spec.noise) * rng.normal();
    return out;
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::string& path) {
    if (offset + 4 > buf.size()) throw FormatError(path + ": truncated IDX header");
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

Dataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.n < 2) throw ConfigError("synthetic dataset needs n >= 2");
    if (spec.p < 1) throw ConfigError("synthetic dataset needs p >= 1");
    if (spec.noise < 0.0) throw ConfigError("synthetic noise must be non-negative");
    Rng rng(mix_seed(spec.seed, 0xda7a));
    switch (spec.kind) {
        case SyntheticKind::gaussian_blobs: return make_blobs(spec, rng);
        case SyntheticKind::linear_regression: return make_linear_regression(spec, rng);
        case SyntheticKind::quadratic_anchors: return make_anchors(spec, rng);
    }
    throw ConfigError("unknown synthetic dataset kind");
}

Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::size_t p, std::uint64_t seed,
                       double noise) {
    SyntheticSpec spec;
    spec.kind = kind;
    spec.n = n;
    spec.p = p;
    spec.seed = seed;
    spec.noise = noise;
    return make_synthetic(spec);
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto images = read_file(images_path);
    const auto labels = read_file(labels_path);

    if (read_be32(images, 0, images_path) != kIdxImagesMagic)
        throw FormatError(images_path + ": bad IDX image magic");
    if (read_be32(labels, 0, labels_path) != kIdxLabelsMagic)
        throw FormatError(labels_path + ": bad IDX label magic");

    const std::size_t count = read_be32(images, 4, images_path);
    const std::size_t rows = read_be32(images, 8, images_path);
    const std::size_t cols = read_be32(images, 12, images_path);
    const std::size_t label_count = read_be32(labels, 4, labels_path);
    if (count != label_count)
        throw FormatError("IDX image count " + std::to_string(count) +
                          " does not match label count " + std::to_string(label_count));

    const std::size_t pixels = rows * cols;
    if (pixels == 0) throw FormatError(images_path + ": empty image dimensions");
    if (images.size() != 16 + count * pixels)
        throw FormatError(images_path + ": payload size does not match header");
    if (labels.size() != 8 + count) throw FormatError(labels_path + ": payload size does not match header");

    Dataset out;
    out.num_classes = 10;
    out.features = Matrix(count, pixels);
    out.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned char* src = images.data() + 16 + i * pixels;
        auto row = out.features.row(i);
        for (std::size_t j = 0; j < pixels; ++j) row[j] = static_cast<double>(src[j]) / 255.0;
        const unsigned char y = labels[8 + i];
        if (y > 9) throw FormatError(labels_path + ": label " + std::to_string(y) + " outside 0-9");
        out.labels[i] = y;
    }
    return out;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": missing header row");
    const std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (columns < 2) throw FormatError(path + ": need at least one feature and a label column");

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                if (col + 1 < columns) {
                    values.push_back(std::stod(cell, &used));
                } else {
                    labels.push_back(std::stoi(cell, &used));
                }
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw FormatError(path + ":" + std::to_string(line_no) + ": bad value '" + cell + "'");
            }
            ++col;
        }
        if (col != columns)
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(columns) + " columns, got " + std::to_string(col));
    }
    Dataset out;
    out.features = Matrix(labels.size(), columns - 1);
    std::copy(values.begin(), values.end(), out.features.data().begin());
    out.labels = std::move(labels);
    int max_label = -1;
    for (int y : out.labels) {
        if (y < 0) throw FormatError(path + ": negative label");
        max_label = std::max(max_label, y);
    }
    out.num_classes = static_cast<std::size_t>(max_label + 1);
    return out;
}

}  // namespace adabatch

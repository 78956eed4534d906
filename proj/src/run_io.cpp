#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "adabatch/errors.hpp"
#include "adabatch/trainer.hpp"

namespace adabatch {

namespace {

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

nlohmann::json json_num(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

nlohmann::json json_opt(const std::optional<double>& v) { return v ? json_num(*v) : nullptr; }

}  // namespace

std::string metrics_csv(std::span<const RunRecord> records) {
    std::ostringstream os;
    os << kMetricsCsvHeader << '\n';
    for (const RunRecord& r : records) {
        os << r.step << ',' << r.samples << ',' << r.batch_size << ',' << fmt_double(r.loss) << ','
           << fmt_double(r.grad_norm) << ',' << fmt_double(r.statistic) << ','
           << (r.passed ? (*r.passed ? "1" : "0") : "") << ',' << fmt_double(r.lr) << ','
           << fmt_opt(r.val_loss) << ',' << fmt_opt(r.val_acc) << ',' << fmt_double(r.wall_ms)
           << '\n';
    }
    return os.str();
}

std::string metrics_jsonl(std::span<const RunRecord> records) {
    std::string out;
    for (const RunRecord& r : records) {
        nlohmann::ordered_json j;
        j["step"] = r.step;
        j["samples"] = r.samples;
        j["batch_size"] = r.batch_size;
        j["loss"] = json_num(r.loss);
        j["grad_norm"] = json_num(r.grad_norm);
        j["statistic"] = json_num(r.statistic);
        j["passed"] = r.passed ? nlohmann::ordered_json(*r.passed) : nlohmann::ordered_json(nullptr);
        j["lr"] = json_num(r.lr);
        j["val_loss"] = json_opt(r.val_loss);
        j["val_acc"] = json_opt(r.val_acc);
        j["wall_ms"] = json_num(r.wall_ms);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string encode_params(std::span<const double> x) {
    static_assert(sizeof(double) == 8);
    std::string out;
    out.reserve(8 + 8 * x.size());
    auto put_u64 = [&out](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    put_u64(x.size());
    for (double v : x) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(bits);
    }
    return out;
}

ParamVector decode_params(std::string_view bytes) {
    auto get_u64 = [&bytes](std::size_t offset) {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= std::uint64_t{static_cast<unsigned char>(bytes[offset + i])} << (8 * i);
        return v;
    };
    if (bytes.size() < 8) throw FormatError("parameter file shorter than its length prefix");
    const std::uint64_t n = get_u64(0);
    if (bytes.size() != 8 + 8 * n) throw FormatError("parameter file length does not match prefix");
    ParamVector x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t bits = get_u64(8 + 8 * i);
        std::memcpy(&x[i], &bits, 8);
    }
    return x;
}

void write_file_atomic(const std::string& path, std::string_view contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw Error("failed writing " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw Error("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
}

}  // namespace adabatch

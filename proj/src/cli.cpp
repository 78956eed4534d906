#include "adabatch/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "adabatch/config.hpp"
#include "adabatch/diagnostics.hpp"
#include "adabatch/errors.hpp"
#include "adabatch/trainer.hpp"

namespace adabatch::cli {

namespace fs = std::filesystem;

namespace {

std::string shortest(double v) {
    if (!std::isfinite(v)) return "";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

struct CellOutcome {
    bool ok = false;
    std::string error;
    RunSummary summary;
};

std::string summary_json(const RunSummary& s) {
    auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
        if (v && std::isfinite(*v)) return *v;
        return nullptr;
    };
    nlohmann::ordered_json j;
    j["steps"] = s.steps;
    j["samples"] = s.samples;
    j["avg_batch_size"] = s.avg_batch_size;
    j["final_batch_size"] = s.final_batch_size;
    j["final_train_loss"] = s.final_train_loss;
    j["final_train_acc"] = opt(s.final_train_acc);
    j["final_val_loss"] = opt(s.final_val_loss);
    j["final_val_acc"] = opt(s.final_val_acc);
    j["indeterminate_tests"] = s.indeterminate_tests;
    return j.dump(2) + "\n";
}

// Runs one configuration and writes its artefacts. Throws on failure.
RunSummary run_and_write(const KeyValueConfig& kv, const std::string& out_dir) {
    const RunConfig cfg = run_config_from(kv);
    const RunResult result = run(cfg);

    KeyValueConfig resolved = to_key_values(cfg);
    for (const auto& [key, entry] : kv.entries())
        if (key.rfind("audit.", 0) == 0) resolved.set(key, entry.value);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    write_file_atomic((dir / "metrics.csv").string(), metrics_csv(result.records));
    write_file_atomic((dir / "metrics.jsonl").string(), metrics_jsonl(result.records));
    write_file_atomic((dir / "params.bin").string(), encode_params(result.final_params));
    write_file_atomic((dir / "config.resolved").string(), resolved.serialize());
    write_file_atomic((dir / "summary.json").string(), summary_json(result.summary));
    return result.summary;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::pair<std::string, std::vector<std::string>> parse_grid_axis(const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("grid axis '" + spec + "' is not key=v1,v2,...");
    std::pair<std::string, std::vector<std::string>> axis;
    axis.first = spec.substr(0, eq);
    std::stringstream ss(spec.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ',')) axis.second.push_back(v);
    if (axis.second.empty()) throw ConfigError("grid axis '" + axis.first + "' has no values");
    return axis;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_dir, std::ostream& log) {
    KeyValueConfig kv;
    try {
        kv = resolve_config(config_path, overrides);
        (void)run_config_from(kv);
    } catch (const Error& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        const RunSummary s = run_and_write(kv, out_dir);
        log << "run complete: " << s.steps << " steps, avg batch " << shortest(s.avg_batch_size)
            << ", final train loss " << shortest(s.final_train_loss) << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        log << "run failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              const Grid& grid, const std::string& out_dir, int parallel, std::ostream& log) {
    KeyValueConfig base;
    try {
        base = resolve_config(config_path, overrides);
        (void)run_config_from(base);
        const auto& known = known_config_keys();
        for (const auto& [key, values] : grid) {
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw ConfigError("grid key '" + key + "' is not a configuration key");
            if (values.empty()) throw ConfigError("grid key '" + key + "' has no values");
        }
    } catch (const Error& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    // Cartesian product, last axis varying fastest.
    std::vector<std::vector<std::string>> cells(1);
    for (const auto& [key, values] : grid) {
        std::vector<std::vector<std::string>> next;
        for (const auto& prefix : cells)
            for (const auto& v : values) {
                auto c = prefix;
                c.push_back(v);
                next.push_back(std::move(c));
            }
        cells = std::move(next);
    }

    std::vector<CellOutcome> outcomes(cells.size());
    std::atomic<std::size_t> next_cell{0};
    std::mutex log_mutex;
    auto cell_dir = [&](std::size_t i) {
        char name[32];
        std::snprintf(name, sizeof name, "cell_%03zu", i);
        return (fs::path(out_dir) / name).string();
    };
    auto worker = [&] {
        for (std::size_t i = next_cell++; i < cells.size(); i = next_cell++) {
            KeyValueConfig kv = base;
            for (std::size_t a = 0; a < grid.size(); ++a) kv.set(grid[a].first, cells[i][a]);
            CellOutcome& out = outcomes[i];
            try {
                out.summary = run_and_write(kv, cell_dir(i));
                out.ok = true;
            } catch (const std::exception& e) {
                out.error = e.what();
            }
            std::lock_guard lock(log_mutex);
            log << "cell " << i << (out.ok ? " ok" : " FAILED: " + out.error) << "\n";
        }
    };
    const int workers = std::max(1, std::min<int>(parallel, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::ostringstream csv;
    csv << "cell,dir";
    for (const auto& [key, values] : grid) csv << ',' << csv_escape(key);
    csv << ",status,steps,avg_batch_size,final_loss,final_acc,error\n";
    std::size_t failed = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const CellOutcome& o = outcomes[i];
        csv << i << ',' << csv_escape(fs::path(cell_dir(i)).filename().string());
        for (const auto& v : cells[i]) csv << ',' << csv_escape(v);
        if (o.ok) {
            const RunSummary& s = o.summary;
            const std::optional<double> acc = s.final_val_acc ? s.final_val_acc : s.final_train_acc;
            csv << ",ok," << s.steps << ',' << shortest(s.avg_batch_size) << ','
                << shortest(s.final_train_loss) << ',' << (acc ? shortest(*acc) : "") << ",\n";
        } else {
            ++failed;
            csv << ",failed,,,,," << csv_escape(o.error) << "\n";
        }
    }
    try {
        write_file_atomic((fs::path(out_dir) / "summary.csv").string(), csv.str());
    } catch (const std::exception& e) {
        log << "cannot write summary: " << e.what() << "\n";
        return kExitRuntime;
    }
    if (failed > 0) {
        log << failed << " of " << cells.size() << " cells failed\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_audit(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir, std::ostream& log) {
    KeyValueConfig kv;
    RunConfig cfg;
    AuditOptions opts;
    try {
        kv = resolve_config(config_path, overrides);
        cfg = run_config_from(kv);
        opts = audit_options_from(kv);
    } catch (const Error& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        const TrainData data = prepare_data(cfg.data, cfg.seed);
        const auto obj = make_objective(cfg.objective, data.train);
        const AuditReport report = run_audit(*obj, data.train, opts);
        fs::create_directories(out_dir);
        write_file_atomic((fs::path(out_dir) / "audit.json").string(), report.to_json());
        for (const AuditCheck& c : report.checks) {
            const char* status = c.skipped ? "SKIP" : (c.passed ? "PASS" : "FAIL");
            log << status << "  " << c.name << (c.note.empty() ? "" : "  (" + c.note + ")") << "\n";
        }
        if (!report.passed()) {
            for (const AuditCheck& c : report.checks)
                if (!c.passed && !c.skipped) log << "audit check failed: " << c.name << "\n";
            return kExitAuditFailed;
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        log << "audit failed to run: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& out_dir, std::ostream& log) {
    RunConfig cfg;
    try {
        cfg = run_config_from(resolve_config(config_path, overrides));
    } catch (const Error& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        const Dataset data = make_synthetic(cfg.data.synthetic);
        std::ostringstream os;
        for (std::size_t j = 0; j < data.feature_dim(); ++j) os << (j ? "," : "") << 'x' << j;
        if (data.is_classification())
            os << ",label";
        else if (!data.targets.empty())
            os << ",target";
        os << '\n';
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto row = data.features.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << shortest(row[j]);
            if (data.is_classification())
                os << ',' << data.labels[i];
            else if (!data.targets.empty())
                os << ',' << shortest(data.targets[i]);
            os << '\n';
        }
        fs::create_directories(out_dir);
        write_file_atomic((fs::path(out_dir) / "data.csv").string(), os.str());
        log << "wrote " << data.size() << " samples to " << (fs::path(out_dir) / "data.csv").string() << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        log << "gen-data failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace adabatch::cli

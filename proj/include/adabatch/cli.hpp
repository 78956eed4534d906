#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace adabatch::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAuditFailed = 3;

using Grid = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// Parses `key=v1,v2,...` into a grid axis.
std::pair<std::string, std::vector<std::string>> parse_grid_axis(const std::string& spec);

/// Trains once and writes metrics.csv, metrics.jsonl, params.bin,
/// config.resolved and summary.json into out_dir.
int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_dir, std::ostream& log);

/// Cartesian product of grid axes, one sub-directory per cell plus summary.csv.
int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              const Grid& grid, const std::string& out_dir, int parallel, std::ostream& log);

/// Runs the diagnostics suite and writes audit.json.
int cmd_audit(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir, std::ostream& log);

/// Writes the configured synthetic dataset as data.csv.
int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& out_dir, std::ostream& log);

}  // namespace adabatch::cli

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adabatch/diagnostics.hpp"
#include "adabatch/trainer.hpp"

namespace adabatch {

/// Flat `dotted.key = value` configuration.
///
/// Lines starting with `#` are comments; blank lines are ignored. Keys are
/// unique. Serialisation emits keys in sorted order, so
/// parse(serialize(c)) == c.
class KeyValueConfig {
public:
    struct Entry {
        std::string value;
        int line = 0;  // 0 when set programmatically
        int column = 0;

        bool operator==(const Entry& o) const { return value == o.value; }
    };

    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::string& path);

    std::string serialize() const;

    void set(const std::string& key, const std::string& value);
    /// Applies a `key=value` override.
    void apply_override(const std::string& assignment);
    bool contains(const std::string& key) const { return entries_.count(key) > 0; }
    std::optional<std::string> get(const std::string& key) const;
    const std::map<std::string, Entry>& entries() const { return entries_; }

    bool operator==(const KeyValueConfig& o) const { return entries_ == o.entries_; }

private:
    std::map<std::string, Entry> entries_;
};

/// Every key the run/audit config understands.
const std::vector<std::string>& known_config_keys();

/// Builds a RunConfig. Missing keys take defaults; unknown keys and badly
/// typed values throw ConfigError naming the key (and line, if known).
RunConfig run_config_from(const KeyValueConfig& kv);

/// Inverse of run_config_from: every key, fully resolved.
KeyValueConfig to_key_values(const RunConfig& cfg);

AuditOptions audit_options_from(const KeyValueConfig& kv);

/// Defaults < file < ADABATCH_SEED < --set overrides.
KeyValueConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace adabatch

#include "adabatch/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "adabatch/errors.hpp"

namespace adabatch {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool valid_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

std::string shortest(double v) {
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

class Reader {
public:
    explicit Reader(const KeyValueConfig& kv) : kv_(kv) {
        for (const auto& [key, entry] : kv.entries()) {
            const auto& known = known_config_keys();
            if (std::find(known.begin(), known.end(), key) == known.end())
                fail(key, "unknown configuration key");
        }
    }

    std::string str(const std::string& key, const std::string& def) const {
        return kv_.get(key).value_or(def);
    }

    double real(const std::string& key, double def) const {
        auto v = kv_.get(key);
        if (!v) return def;
        const std::string s = trim(*v);
        char* end = nullptr;
        errno = 0;
        const double d = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) fail(key, "expected a number, got '" + s + "'");
        return d;
    }

    std::uint64_t uint(const std::string& key, std::uint64_t def) const {
        auto v = kv_.get(key);
        if (!v) return def;
        std::string s = trim(*v);
        // Allow 6e6-style literals for sample budgets when they are integral.
        if (s.empty() || s[0] == '-') fail(key, "expected a non-negative integer, got '" + s + "'");
        char* end = nullptr;
        errno = 0;
        const unsigned long long u = std::strtoull(s.c_str(), &end, 10);
        if (end == s.c_str() + s.size() && errno == 0) return u;
        const double d = std::strtod(s.c_str(), &end);
        if (end == s.c_str() + s.size() && d >= 0.0 && d == static_cast<double>(static_cast<std::uint64_t>(d)))
            return static_cast<std::uint64_t>(d);
        fail(key, "expected a non-negative integer, got '" + s + "'");
    }

    bool boolean(const std::string& key, bool def) const {
        auto v = kv_.get(key);
        if (!v) return def;
        std::string s = trim(*v);
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        fail(key, "expected true/false, got '" + s + "'");
    }

    template <typename Parse>
    auto choice(const std::string& key, const std::string& def, Parse parse) const {
        const std::string s = trim(str(key, def));
        try {
            return parse(s);
        } catch (const ConfigError& e) {
            fail(key, e.what());
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const auto& entries = kv_.entries();
        auto it = entries.find(key);
        if (it != entries.end() && it->second.line > 0)
            throw ParseError("'" + key + "': " + msg, it->second.line, it->second.column);
        throw ConfigError("'" + key + "': " + msg);
    }

private:
    const KeyValueConfig& kv_;
};

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig out;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        std::size_t first = 0;
        while (first < raw.size() && std::isspace(static_cast<unsigned char>(raw[first]))) ++first;
        if (first == raw.size() || raw[first] == '#') continue;

        const std::size_t eq = raw.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected 'key = value'", line_no, static_cast<int>(first) + 1);
        std::size_t key_end = eq;
        while (key_end > first && std::isspace(static_cast<unsigned char>(raw[key_end - 1]))) --key_end;
        if (key_end == first) throw ParseError("empty key", line_no, static_cast<int>(first) + 1);
        for (std::size_t c = first; c < key_end; ++c)
            if (!valid_key_char(raw[c]))
                throw ParseError(std::string("invalid character '") + raw[c] + "' in key", line_no,
                                 static_cast<int>(c) + 1);
        const std::string key = raw.substr(first, key_end - first);

        std::size_t vstart = eq + 1;
        while (vstart < raw.size() && std::isspace(static_cast<unsigned char>(raw[vstart]))) ++vstart;
        std::string value = raw.substr(vstart);
        // Inline comment: whitespace followed by '#'.
        for (std::size_t c = 1; c < value.size(); ++c) {
            if (value[c] == '#' && std::isspace(static_cast<unsigned char>(value[c - 1]))) {
                value.resize(c);
                break;
            }
        }
        value = trim(value);
        if (out.entries_.count(key))
            throw ParseError("duplicate key '" + key + "'", line_no, static_cast<int>(first) + 1);
        out.entries_[key] = Entry{value, line_no, static_cast<int>(vstart) + 1};
    }
    return out;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KeyValueConfig::serialize() const {
    std::string out;
    for (const auto& [key, entry] : entries_) {
        out += key;
        out += " = ";
        out += entry.value;
        out += '\n';
    }
    return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    if (key.empty() || !std::all_of(key.begin(), key.end(), valid_key_char))
        throw ConfigError("invalid key '" + key + "'");
    entries_[key] = Entry{trim(value), 0, 0};
}

void KeyValueConfig::apply_override(const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
}

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        "seed",
        "objective.kind", "objective.hidden", "objective.activation", "objective.l2",
        "data.source", "data.kind", "data.n", "data.p", "data.classes", "data.noise", "data.seed",
        "data.images", "data.labels", "data.val_images", "data.val_labels", "data.csv",
        "data.val_csv", "data.val_fraction",
        "controller.kind", "controller.eta", "controller.theta", "controller.nu",
        "controller.b_max", "controller.test_every", "controller.use_fpc", "controller.eps_guard",
        "optimizer.kind", "optimizer.v0", "optimizer.beta1", "optimizer.beta2", "optimizer.eps",
        "lr.schedule", "lr.peak", "lr.min", "lr.warmup_samples", "lr.total_samples",
        "train.b_init", "train.total_samples", "train.sampling", "train.eval_every",
        "train.chunk_budget", "train.max_steps",
        "output.timing",
        "audit.resamples", "audit.fd_samples", "audit.fd_step", "audit.fd_tolerance", "audit.eta",
        "audit.theta", "audit.nu", "audit.lemma_sequences", "audit.corrupt_gradient",
    };
    return keys;
}

RunConfig run_config_from(const KeyValueConfig& kv) {
    const Reader r(kv);
    RunConfig c;
    c.seed = r.uint("seed", 0);

    c.objective.kind = r.choice("objective.kind", "logistic", parse_objective_kind);
    c.objective.hidden = r.uint("objective.hidden", 32);
    c.objective.activation = r.choice("objective.activation", "tanh", parse_activation);
    c.objective.l2 = r.real("objective.l2", 0.0);

    c.data.source = r.choice("data.source", "synthetic", parse_data_source);
    c.data.synthetic.kind = r.choice("data.kind", "gaussian-blobs", parse_synthetic_kind);
    c.data.synthetic.n = r.uint("data.n", 1000);
    c.data.synthetic.p = r.uint("data.p", 10);
    c.data.synthetic.classes = r.uint("data.classes", 2);
    c.data.synthetic.noise = r.real("data.noise", 1.0);
    c.data.synthetic.seed = r.uint("data.seed", 0);
    c.data.images = r.str("data.images", "");
    c.data.labels = r.str("data.labels", "");
    c.data.val_images = r.str("data.val_images", "");
    c.data.val_labels = r.str("data.val_labels", "");
    c.data.csv = r.str("data.csv", "");
    c.data.val_csv = r.str("data.val_csv", "");
    c.data.val_fraction = r.real("data.val_fraction", 0.1);

    const std::string ck = trim(r.str("controller.kind", "norm"));
    if (ck != "none") {
        ControllerConfig cc;
        cc.kind = r.choice("controller.kind", "norm", parse_controller_kind);
        cc.eta = r.real("controller.eta", cc.eta);
        cc.theta = r.real("controller.theta", cc.theta);
        cc.nu = r.real("controller.nu", cc.nu);
        cc.b_max = r.uint("controller.b_max", 0);
        cc.test_every = r.uint("controller.test_every", 1);
        cc.use_fpc = r.boolean("controller.use_fpc", false);
        cc.eps_guard = r.real("controller.eps_guard", kDefaultEpsGuard);
        c.controller = cc;
    }

    c.optimizer.kind = r.choice("optimizer.kind", "adagrad", parse_optimizer_kind);
    c.optimizer.v0 = r.real("optimizer.v0", kDefaultV0);
    c.optimizer.beta1 = r.real("optimizer.beta1", 0.9);
    c.optimizer.beta2 = r.real("optimizer.beta2", 0.95);
    c.optimizer.eps = r.real("optimizer.eps", 1e-8);

    c.lr.kind = r.choice("lr.schedule", "constant", parse_schedule_kind);
    c.lr.peak = r.real("lr.peak", 0.008);
    c.lr.min_lr = r.real("lr.min", 0.0);
    c.lr.warmup_samples = r.uint("lr.warmup_samples", 0);

    c.b_init = r.uint("train.b_init", 2);
    c.total_samples = r.uint("train.total_samples", 100000);
    c.lr.total_samples = r.uint("lr.total_samples", c.total_samples);
    c.sampling = r.choice("train.sampling", "without_replacement", parse_sampling);
    c.eval_every = r.uint("train.eval_every", 0);
    c.chunk_budget = r.uint("train.chunk_budget", std::size_t{1} << 24);
    c.max_steps = r.uint("train.max_steps", 0);
    c.record_timing = r.boolean("output.timing", false);

    // Audit keys are read separately; touching them here validates their types.
    (void)audit_options_from(kv);
    return c;
}

KeyValueConfig to_key_values(const RunConfig& c) {
    KeyValueConfig kv;
    auto u = [](std::uint64_t v) { return std::to_string(v); };
    kv.set("seed", u(c.seed));
    kv.set("objective.kind", to_string(c.objective.kind));
    kv.set("objective.hidden", u(c.objective.hidden));
    kv.set("objective.activation", to_string(c.objective.activation));
    kv.set("objective.l2", shortest(c.objective.l2));
    kv.set("data.source", to_string(c.data.source));
    kv.set("data.kind", to_string(c.data.synthetic.kind));
    kv.set("data.n", u(c.data.synthetic.n));
    kv.set("data.p", u(c.data.synthetic.p));
    kv.set("data.classes", u(c.data.synthetic.classes));
    kv.set("data.noise", shortest(c.data.synthetic.noise));
    kv.set("data.seed", u(c.data.synthetic.seed));
    kv.set("data.images", c.data.images);
    kv.set("data.labels", c.data.labels);
    kv.set("data.val_images", c.data.val_images);
    kv.set("data.val_labels", c.data.val_labels);
    kv.set("data.csv", c.data.csv);
    kv.set("data.val_csv", c.data.val_csv);
    kv.set("data.val_fraction", shortest(c.data.val_fraction));
    if (c.controller) {
        const ControllerConfig& cc = *c.controller;
        kv.set("controller.kind", to_string(cc.kind));
        kv.set("controller.eta", shortest(cc.eta));
        kv.set("controller.theta", shortest(cc.theta));
        kv.set("controller.nu", shortest(cc.nu));
        kv.set("controller.b_max", u(cc.b_max));
        kv.set("controller.test_every", u(cc.test_every));
        kv.set("controller.use_fpc", cc.use_fpc ? "true" : "false");
        kv.set("controller.eps_guard", shortest(cc.eps_guard));
    } else {
        kv.set("controller.kind", "none");
    }
    kv.set("optimizer.kind", to_string(c.optimizer.kind));
    kv.set("optimizer.v0", shortest(c.optimizer.v0));
    kv.set("optimizer.beta1", shortest(c.optimizer.beta1));
    kv.set("optimizer.beta2", shortest(c.optimizer.beta2));
    kv.set("optimizer.eps", shortest(c.optimizer.eps));
    kv.set("lr.schedule", to_string(c.lr.kind));
    kv.set("lr.peak", shortest(c.lr.peak));
    kv.set("lr.min", shortest(c.lr.min_lr));
    kv.set("lr.warmup_samples", u(c.lr.warmup_samples));
    kv.set("lr.total_samples", u(c.lr.total_samples));
    kv.set("train.b_init", u(c.b_init));
    kv.set("train.total_samples", u(c.total_samples));
    kv.set("train.sampling", to_string(c.sampling));
    kv.set("train.eval_every", u(c.eval_every));
    kv.set("train.chunk_budget", u(c.chunk_budget));
    kv.set("train.max_steps", u(c.max_steps));
    kv.set("output.timing", c.record_timing ? "true" : "false");
    return kv;
}

AuditOptions audit_options_from(const KeyValueConfig& kv) {
    const Reader r(kv);
    AuditOptions o;
    o.resamples = r.uint("audit.resamples", o.resamples);
    o.fd_samples = r.uint("audit.fd_samples", o.fd_samples);
    o.fd_step = r.real("audit.fd_step", o.fd_step);
    o.fd_tolerance = r.real("audit.fd_tolerance", o.fd_tolerance);
    o.eta = r.real("audit.eta", o.eta);
    o.theta = r.real("audit.theta", o.theta);
    o.nu = r.real("audit.nu", o.nu);
    o.lemma_sequences = r.uint("audit.lemma_sequences", o.lemma_sequences);
    o.corrupt_gradient = r.boolean("audit.corrupt_gradient", false);
    o.seed = r.uint("seed", 0);
    return o;
}

KeyValueConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
    KeyValueConfig kv = path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
    if (const char* env = std::getenv("ADABATCH_SEED"); env && *env) kv.set("seed", env);
    for (const std::string& o : overrides) kv.apply_override(o);
    return kv;
}

}  // namespace adabatch

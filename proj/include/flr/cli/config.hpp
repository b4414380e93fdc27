#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flr/dataset_csv.hpp"
#include "flr/error.hpp"

namespace flr::cli {

/// Configuration problem attributable to one key.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& message)
        : Error(ErrorCode::ConfigError, "key '" + key + "': " + message), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

enum class KeyType { Int, UInt64, Real, Bool, String, Choice, InputPath, OutputPath, Lambda, RealList, IntList };

struct KeySpec {
    std::string name;
    KeyType type;
    std::string help;
    std::optional<std::string> default_value;
    double min = -std::numeric_limits<double>::infinity();
    double max = std::numeric_limits<double>::infinity();
    std::vector<std::string> choices;
    bool min_exclusive = false;

    bool required() const { return !default_value.has_value(); }
};

struct CommandSchema {
    std::string name;
    std::string help;
    std::vector<KeySpec> keys;

    const KeySpec* find(std::string_view key) const {
        for (const auto& k : keys) {
            if (k.name == key) return &k;
        }
        return nullptr;
    }
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline KeySpec int_key(std::string name, std::string help, std::optional<std::string> def, double lo,
                       double hi = kInf) {
    return {std::move(name), KeyType::Int, std::move(help), std::move(def), lo, hi, {}, false};
}

inline KeySpec real_key(std::string name, std::string help, std::optional<std::string> def,
                        double lo = -kInf, double hi = kInf, bool lo_exclusive = false) {
    return {std::move(name), KeyType::Real, std::move(help), std::move(def), lo, hi, {}, lo_exclusive};
}

inline KeySpec typed_key(std::string name, KeyType type, std::string help,
                         std::optional<std::string> def = std::nullopt) {
    return {std::move(name), type, std::move(help), std::move(def), -kInf, kInf, {}, false};
}

inline KeySpec choice_key(std::string name, std::string help, std::string def,
                          std::vector<std::string> choices) {
    return {std::move(name), KeyType::Choice, std::move(help), std::move(def), -kInf, kInf,
            std::move(choices), false};
}

inline std::vector<KeySpec> lambda_search_keys(bool refine_default) {
    return {real_key("lambda_min", "log10 of the smallest lambda on the search grid", "-12", -300, 300),
            real_key("lambda_max", "log10 of the largest lambda on the search grid", "2", -300, 300),
            int_key("lambda_points", "number of log-spaced lambda grid points", "60", 2, 100000),
            typed_key("refine", KeyType::Bool, "golden-section refinement around the grid minimum",
                      refine_default ? "true" : "false")};
}

inline std::vector<KeySpec> simulation_keys() {
    return {int_key("series_terms", "number of cosine terms in X and beta0", "50", 1, 10000),
            int_key("grid_points", "number of grid points for simulated curves", "201", 2, 100000),
            real_key("truth_decay", "beta0 coefficients decay as k^-truth_decay", "2", 0.0, kInf, true),
            int_key("order", "Sobolev penalty order m", "2", 1, 4),
            int_key("threads", "worker threads (0 = all cores)", "0", 0, 1024)};
}

inline void append(std::vector<KeySpec>& to, std::vector<KeySpec> from) {
    for (auto& k : from) to.push_back(std::move(k));
}

inline std::vector<CommandSchema> build_schemas() {
    std::vector<CommandSchema> out;

    CommandSchema fit{"fit", "Fit the regularized estimator to a dataset CSV", {}};
    fit.keys = {typed_key("input", KeyType::InputPath, "training dataset CSV"),
                int_key("order", "Sobolev penalty order m", "2", 1, 4),
                typed_key("lambda", KeyType::Lambda, "'auto' (GCV) or a positive value", "auto"),
                typed_key("model", KeyType::OutputPath, "output model JSON")};
    append(fit.keys, lambda_search_keys(true));
    out.push_back(std::move(fit));

    CommandSchema predict{"predict", "Predict responses for new curves with a fitted model", {}};
    predict.keys = {typed_key("model", KeyType::InputPath, "model JSON written by fit"),
                    typed_key("input", KeyType::InputPath, "curves CSV in dataset layout"),
                    typed_key("output", KeyType::OutputPath, "predictions CSV")};
    out.push_back(std::move(predict));

    CommandSchema simulate{"simulate", "Monte Carlo replicates of one simulation scenario", {}};
    simulate.keys = {choice_key("spacing", "eigenvalue spacing of X", "well", {"well", "close"}),
                     real_key("nu", "covariance decay exponent", "2", 1.0, kInf, true),
                     real_key("sigma", "noise standard deviation", "0.5", 0.0, kInf, true),
                     int_key("n", "sample size", "100", 2, 1000000),
                     int_key("reps", "number of replicates", "200", 1, 10000000),
                     typed_key("seed", KeyType::UInt64, "master RNG seed", "42"),
                     typed_key("out", KeyType::OutputPath, "results CSV")};
    append(simulate.keys, simulation_keys());
    append(simulate.keys, lambda_search_keys(false));
    out.push_back(std::move(simulate));

    CommandSchema rates{"rates", "Log-log convergence slopes from simulate outputs", {}};
    rates.keys = {typed_key("in", KeyType::String, "glob matching simulate results CSVs"),
                  typed_key("out", KeyType::OutputPath, "rates CSV"),
                  int_key("min_replicates", "minimum replicates per sample size", "30", 1)};
    out.push_back(std::move(rates));

    CommandSchema figures{"figures", "Plot-data CSVs for the four simulation figures", {}};
    figures.keys = {typed_key("out", KeyType::OutputPath, "output directory"),
                    int_key("reps", "replicates per cell", "200", 1, 10000000),
                    typed_key("seed", KeyType::UInt64, "master RNG seed", "42"),
                    typed_key("sizes", KeyType::IntList, "sample sizes", "50,100,200,500"),
                    typed_key("nus", KeyType::RealList, "covariance decay exponents", "1.1,1.5,2,4")};
    append(figures.keys, simulation_keys());
    append(figures.keys, lambda_search_keys(false));
    out.push_back(std::move(figures));

    CommandSchema eigen{"eigen", "Mercer eigenvalues of a kernel on a uniform grid", {}};
    eigen.keys = {typed_key("kernel", KeyType::String, "sobolev:<1-4>, brownian or ou"),
                  int_key("grid", "number of grid points", "401", 2, 20000),
                  int_key("terms", "number of eigenvalues", "50", 1, 20000),
                  typed_key("output", KeyType::OutputPath, "eigenvalue CSV")};
    out.push_back(std::move(eigen));

    CommandSchema diag{"diag", "Simultaneous diagonalization of a kernel and a covariance", {}};
    diag.keys = {typed_key("k", KeyType::String, "reproducing kernel: sobolev:<1-4>, brownian or ou"),
                 typed_key("c", KeyType::String, "covariance kernel: sobolev:<1-4>, brownian or ou"),
                 int_key("grid", "number of grid points", "401", 2, 20000),
                 int_key("terms", "truncation M", "50", 1, 20000),
                 typed_key("output", KeyType::OutputPath, "gamma CSV")};
    out.push_back(std::move(diag));

    for (auto& schema : out) {
        schema.keys.push_back(typed_key("manifest", KeyType::String,
                                        "manifest JSON path (default: derived from the output)", ""));
    }
    return out;
}

inline std::string describe_range(const KeySpec& spec) {
    std::string lo = spec.min == -kInf ? "-inf" : format_double(spec.min);
    std::string hi = spec.max == kInf ? "inf" : format_double(spec.max);
    return std::string(spec.min_exclusive ? "(" : "[") + lo + ", " + hi + "]";
}

inline std::optional<double> to_real(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

template <typename Int>
std::optional<Int> to_integer(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline void check_range(const KeySpec& spec, double v, const std::string& text) {
    const bool low_ok = spec.min_exclusive ? v > spec.min : v >= spec.min;
    if (!low_ok || v > spec.max) {
        throw ConfigError(spec.name, "value " + text + " outside " + describe_range(spec));
    }
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto part : csv_detail::split(s, ',')) out.emplace_back(csv_detail::trim(part));
    return out;
}

/// Validates one raw value against its spec; returns the normalized text.
inline std::string validate_value(const KeySpec& spec, const std::string& raw) {
    switch (spec.type) {
    case KeyType::Int: {
        const auto v = to_integer<long long>(raw);
        if (!v) throw ConfigError(spec.name, "expected an integer, got '" + raw + "'");
        check_range(spec, static_cast<double>(*v), raw);
        return std::to_string(*v);
    }
    case KeyType::UInt64: {
        const auto v = to_integer<unsigned long long>(raw);
        if (!v) throw ConfigError(spec.name, "expected a non-negative 64-bit integer, got '" + raw + "'");
        return std::to_string(*v);
    }
    case KeyType::Real: {
        const auto v = to_real(raw);
        if (!v) throw ConfigError(spec.name, "expected a finite number, got '" + raw + "'");
        check_range(spec, *v, raw);
        return raw;
    }
    case KeyType::Bool:
        if (raw == "true" || raw == "1" || raw == "yes") return "true";
        if (raw == "false" || raw == "0" || raw == "no") return "false";
        throw ConfigError(spec.name, "expected true or false, got '" + raw + "'");
    case KeyType::Choice:
        for (const auto& c : spec.choices) {
            if (raw == c) return raw;
        }
        throw ConfigError(spec.name, "unsupported value '" + raw + "'");
    case KeyType::Lambda: {
        if (raw == "auto") return raw;
        const auto v = to_real(raw);
        if (!v || !(*v > 0.0)) throw ConfigError(spec.name, "expected 'auto' or a positive number, got '" + raw + "'");
        return raw;
    }
    case KeyType::InputPath:
        if (raw.empty()) throw ConfigError(spec.name, "path is empty");
        if (!std::filesystem::is_regular_file(raw)) {
            throw ConfigError(spec.name, "input file '" + raw + "' does not exist");
        }
        return raw;
    case KeyType::OutputPath:
        if (raw.empty()) throw ConfigError(spec.name, "path is empty");
        return raw;
    case KeyType::RealList:
        for (const auto& item : split_list(raw)) {
            if (!to_real(item)) throw ConfigError(spec.name, "expected a comma-separated list of numbers");
        }
        return raw;
    case KeyType::IntList:
        for (const auto& item : split_list(raw)) {
            const auto v = to_integer<long long>(item);
            if (!v || *v < 1) throw ConfigError(spec.name, "expected a comma-separated list of positive integers");
        }
        return raw;
    case KeyType::String:
        return raw;
    }
    return raw;
}

} // namespace detail

inline const std::vector<CommandSchema>& command_schemas() {
    static const std::vector<CommandSchema> schemas = detail::build_schemas();
    return schemas;
}

inline const CommandSchema& schema_for(std::string_view command) {
    for (const auto& s : command_schemas()) {
        if (s.name == command) return s;
    }
    fail(ErrorCode::ConfigError, "unknown command '" + std::string(command) + "'");
}

/// One effective setting and where it came from.
struct Setting {
    std::string value;
    std::string source; // "default", "file" or "flag"
    std::optional<std::string> file_value; // set when a flag overrode the file
};

struct FileEntry {
    std::string key;
    std::string value;
    int line;
};

/// `key = value` lines; blank lines and lines starting with '#' are skipped.
inline std::vector<FileEntry> parse_config_text(std::string_view text) {
    std::vector<FileEntry> out;
    int line_no = 0;
    for (auto line : csv_detail::split(text, '\n')) {
        ++line_no;
        line = csv_detail::trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key(csv_detail::trim(line.substr(0, eq)));
        const std::string value(csv_detail::trim(line.substr(eq + 1)));
        if (key.empty()) {
            fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": empty key");
        }
        out.push_back({key, value, line_no});
    }
    return out;
}

class RunConfig {
public:
    RunConfig(std::string command, std::optional<std::string> config_path,
              std::map<std::string, Setting> settings)
        : command_(std::move(command)), config_path_(std::move(config_path)),
          settings_(std::move(settings)) {}

    const std::string& command() const noexcept { return command_; }
    const std::optional<std::string>& config_path() const noexcept { return config_path_; }
    const std::map<std::string, Setting>& settings() const noexcept { return settings_; }

    const Setting& setting(const std::string& key) const {
        const auto it = settings_.find(key);
        if (it == settings_.end()) fail(ErrorCode::ConfigError, "key '" + key + "' is not defined");
        return it->second;
    }
    const std::string& str(const std::string& key) const { return setting(key).value; }
    long long integer(const std::string& key) const { return std::stoll(str(key)); }
    std::uint64_t u64(const std::string& key) const { return std::stoull(str(key)); }
    double real(const std::string& key) const { return *detail::to_real(str(key)); }
    bool flag(const std::string& key) const { return str(key) == "true"; }

    std::vector<double> real_list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : detail::split_list(str(key))) out.push_back(*detail::to_real(item));
        return out;
    }
    std::vector<int> int_list(const std::string& key) const {
        std::vector<int> out;
        for (const auto& item : detail::split_list(str(key))) {
            out.push_back(static_cast<int>(*detail::to_integer<long long>(item)));
        }
        return out;
    }

private:
    std::string command_;
    std::optional<std::string> config_path_;
    std::map<std::string, Setting> settings_;
};

namespace detail {

inline void check_cross_key_rules(const RunConfig& cfg) {
    const auto& s = cfg.settings();
    if (s.count("lambda_min") && cfg.real("lambda_min") >= cfg.real("lambda_max")) {
        throw ConfigError("lambda_max", "must exceed lambda_min");
    }
    if (s.count("terms") && cfg.integer("terms") > cfg.integer("grid")) {
        throw ConfigError("terms", "cannot exceed grid (" + cfg.str("grid") + ")");
    }
    if (cfg.command() == "simulate" && cfg.integer("n") < cfg.integer("order") + 1) {
        throw ConfigError("n", "must be at least order + 1");
    }
    if (cfg.command() == "figures") {
        for (int n : cfg.int_list("sizes")) {
            if (n < cfg.integer("order") + 1) throw ConfigError("sizes", "every size must be at least order + 1");
        }
        for (double nu : cfg.real_list("nus")) {
            if (!(nu > 1.0)) throw ConfigError("nus", "every nu must exceed 1");
        }
    }
}

} // namespace detail

/**
 * Merges config-file entries and command-line flags for one command. Flags
 * win over the file; a key given twice in one source with different values is
 * a conflict.
 */
inline RunConfig resolve_config(const std::string& command, const std::optional<std::string>& config_path,
                                const std::vector<FileEntry>& file_entries,
                                const std::map<std::string, std::vector<std::string>>& flags) {
    const auto& schema = schema_for(command);
    std::map<std::string, std::string> from_file;
    for (const auto& e : file_entries) {
        if (!schema.find(e.key)) {
            throw ConfigError(e.key, "unknown key for '" + command + "' (line " + std::to_string(e.line) + ")");
        }
        const auto [it, inserted] = from_file.emplace(e.key, e.value);
        if (!inserted && it->second != e.value) {
            throw ConfigError(e.key, "conflicting values '" + it->second + "' and '" + e.value +
                                         "' in the config file");
        }
    }
    std::map<std::string, std::string> from_flags;
    for (const auto& [key, values] : flags) {
        if (!schema.find(key)) throw ConfigError(key, "unknown key for '" + command + "'");
        if (values.empty()) continue;
        for (const auto& v : values) {
            if (v != values.front()) {
                throw ConfigError(key, "conflicting flag values '" + values.front() + "' and '" + v + "'");
            }
        }
        from_flags[key] = values.front();
    }

    std::map<std::string, Setting> settings;
    for (const auto& spec : schema.keys) {
        Setting s;
        const auto f = from_flags.find(spec.name);
        const auto c = from_file.find(spec.name);
        if (f != from_flags.end()) {
            s.value = f->second;
            s.source = "flag";
            if (c != from_file.end()) s.file_value = c->second;
        } else if (c != from_file.end()) {
            s.value = c->second;
            s.source = "file";
        } else if (spec.default_value) {
            s.value = *spec.default_value;
            s.source = "default";
        } else {
            throw ConfigError(spec.name, "required but not given");
        }
        if (!(spec.name == "manifest" && s.value.empty())) {
            s.value = detail::validate_value(spec, s.value);
        }
        if (s.file_value && spec.type != KeyType::InputPath) {
            detail::validate_value(spec, *s.file_value);
        }
        settings.emplace(spec.name, std::move(s));
    }
    RunConfig cfg(command, config_path, std::move(settings));
    detail::check_cross_key_rules(cfg);
    return cfg;
}

/// Reads the optional config file then resolves against the flags.
inline RunConfig load_config(const std::string& command, const std::optional<std::string>& config_path,
                             const std::map<std::string, std::vector<std::string>>& flags) {
    std::vector<FileEntry> entries;
    if (config_path) {
        if (!std::filesystem::is_regular_file(*config_path)) {
            throw ConfigError("config", "config file '" + *config_path + "' does not exist");
        }
        entries = parse_config_text(read_text_file(*config_path));
    }
    return resolve_config(command, config_path, entries, flags);
}

} // namespace flr::cli

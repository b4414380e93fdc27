#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "flr/cli/config.hpp"
#include "flr/error.hpp"

namespace flr::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "1.0.0";

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::IoError, "SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

/// Writes to a temporary sibling and renames it over the target.
inline void write_atomic(const std::string& path, std::string_view contents) {
    const std::filesystem::path target(path);
    if (target.has_parent_path() && !std::filesystem::is_directory(target.parent_path())) {
        fail(ErrorCode::IoError, "output directory '" + target.parent_path().string() + "' does not exist");
    }
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::IoError, "cannot write '" + tmp + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp);
            fail(ErrorCode::IoError, "short write to '" + tmp + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        fail(ErrorCode::IoError, "cannot move output into '" + path + "': " + ec.message());
    }
}

/// Records what a run read, how it was configured, and what it wrote.
class Manifest {
public:
    explicit Manifest(const RunConfig& cfg) : cfg_(cfg) {}

    void add_input(const std::string& role, const std::string& path, std::string_view bytes) {
        inputs_.push_back({{"role", role}, {"path", path}, {"sha256", sha256_hex(bytes)}});
    }

    void add_seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }

    /// Writes an artifact atomically and records its hash.
    void write_output(const std::string& role, const std::string& path, std::string_view bytes) {
        write_atomic(path, bytes);
        outputs_.push_back({{"role", role}, {"path", path}, {"sha256", sha256_hex(bytes)}});
    }

    json to_json() const {
        json config = json::object();
        for (const auto& [key, s] : cfg_.settings()) {
            json entry = {{"value", s.value}, {"source", s.source}};
            if (s.file_value) entry["file_value"] = *s.file_value;
            config[key] = std::move(entry);
        }
        return {{"tool", "flr"},
                {"version", kToolVersion},
                {"command", cfg_.command()},
                {"config_file", cfg_.config_path() ? json(*cfg_.config_path()) : json(nullptr)},
                {"config", std::move(config)},
                {"seeds", seeds_.empty() ? json::object() : seeds_},
                {"inputs", inputs_.empty() ? json::array() : inputs_},
                {"outputs", outputs_.empty() ? json::array() : outputs_}};
    }

    void write(const std::string& path) const { write_atomic(path, to_json().dump(2) + "\n"); }

private:
    const RunConfig& cfg_;
    json inputs_ = json::array();
    json outputs_ = json::array();
    json seeds_ = json::object();
};

/// Explicit `manifest` key, else `<primary output>.manifest.json`.
inline std::string manifest_path(const RunConfig& cfg, const std::string& primary_output) {
    const auto& explicit_path = cfg.str("manifest");
    return explicit_path.empty() ? primary_output + ".manifest.json" : explicit_path;
}

} // namespace flr::cli

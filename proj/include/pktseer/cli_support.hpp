#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pktseer/common.hpp"

namespace pktseer {

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

// key=value configuration with optional [section] headers; '#' starts a
// comment. Keys inside a section are addressed as "section.key".
class ConfigFile {
public:
    ConfigFile() = default;
    static ConfigFile parse(const std::string& text);
    static ConfigFile load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_number(const std::string& key, double fallback) const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// One manifest is written per CLI run, also on failure. Counters and artifact
// digests make re-runs auditable.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    std::map<std::string, std::string> config;     // resolved settings snapshot
    std::map<std::string, std::string> inputs;     // path -> content digest
    std::map<std::string, std::string> artifacts;  // path -> content digest
    std::map<std::string, int64_t> counters;
    uint64_t seed = 0;
    std::string started_at;   // ISO-8601 UTC
    std::string finished_at;
    std::string status = "ok";  // or "error"
    std::string error;

    void add_input(const std::string& path);
    void add_artifact(const std::string& path);
    std::string to_json() const;
    void write(const std::string& path) const;
};

std::string iso8601_utc_now();

// global seed resolution: explicit flag, else PKTSEER_SEED, else 0
uint64_t resolve_seed(bool flag_given, uint64_t flag_value);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace pktseer

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "gplab/trainer.hpp"

namespace gplab {

// Flat `key = value` configuration with dotted section prefixes
// (`train.lr = 0.05`). `#` starts a comment; blank lines are ignored.
// Unknown keys are hard errors, surfaced by require_all_consumed().
class KeyValues {
public:
    static KeyValues parse_file(const std::filesystem::path& path);
    static KeyValues parse_string(const std::string& text, const std::string& origin = "<string>");
    static KeyValues from_map(const std::map<std::string, std::string>& entries);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Throws ConfigError naming every key that was never read.
    void require_all_consumed() const;

private:
    std::map<std::string, std::string> entries_;
    mutable std::map<std::string, bool> consumed_;
    std::string origin_;
};

// A full training run specification: the trainer config plus dataset paths
// and the output directory.
struct TrainSpec {
    std::string data_path;
    std::string test_path;
    std::string out_dir = "run";
    TrainConfig train;
};

// Parse and validate a spec, materializing every default. Unknown keys are
// rejected.
TrainSpec parse_train_spec(const KeyValues& kv);

// Every key of the spec in canonical text form; parsing this map back yields
// a byte-equivalent run.
std::map<std::string, std::string> resolved_config(const TrainSpec& spec);

struct RunManifest {
    std::string tool_version;
    std::string command;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config;     // resolved flat keys
    std::map<std::string, std::string> artifacts;  // artifact name -> path
    std::map<std::string, std::string> extra;      // e.g. dataset summary
};

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

}  // namespace gplab

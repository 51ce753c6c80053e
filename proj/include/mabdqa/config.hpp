#pragma once

#include <map>
#include <optional>
#include <string>

#include "mabdqa/bandit.hpp"
#include "mabdqa/gateway.hpp"
#include "mabdqa/reasoner.hpp"
#include "mabdqa/synth.hpp"

namespace mabdqa {

// Minimal TOML subset: [tables], key = value with quoted strings, integers,
// floats, booleans, and full-line or trailing comments. Enough for the
// documented config schema; no system TOML library is available.
class TomlTable {
public:
    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    long get_int(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& raw) { values_[key] = raw; }
    const std::map<std::string, std::string>& raw() const { return values_; }

private:
    std::map<std::string, std::string> values_;  // "section.key" -> raw literal
};

TomlTable parse_toml(const std::string& text);
TomlTable load_toml(const std::string& path);

struct AppConfig {
    GatewayConfig gateway;
    RetrievalParams params;
    HypergraphParams graph;
    ReasonerParams reasoner;
    bool mock = false;
    std::string index_path;
    std::string graph_cache_path;
    std::string dataset_path;
    std::string manifest_path;
    std::string report_dir = ".";

    // Effective-config echo for report provenance.
    std::string to_json() const;
};

AppConfig default_app_config();
// Defaults overlaid with a TOML file, then MABDQA_* env vars for the gateway.
AppConfig load_app_config(const std::string& toml_path);
void apply_toml(AppConfig& config, const TomlTable& toml);

SyntheticCorpusSpec corpus_spec_from_toml(const TomlTable& toml);

}  // namespace mabdqa

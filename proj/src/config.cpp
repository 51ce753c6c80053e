#include "mabdqa/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mabdqa/prompts.hpp"

namespace mabdqa {

std::string TomlTable::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& raw = it->second;
    if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') {
        throw ConfigError("config key " + key + " must be a quoted string");
    }
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
        if (raw[i] == '\\' && i + 2 < raw.size()) {
            ++i;
            switch (raw[i]) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                default: throw ConfigError("unsupported escape in config key " + key);
            }
        } else {
            out.push_back(raw[i]);
        }
    }
    return out;
}

long TomlTable::get_int(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const long value = std::stol(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing characters");
        return value;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " must be an integer, got: " + it->second);
    }
}

double TomlTable::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const double value = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing characters");
        return value;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " must be a number, got: " + it->second);
    }
}

bool TomlTable::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ConfigError("config key " + key + " must be true or false, got: " + it->second);
}

TomlTable parse_toml(const std::string& text) {
    TomlTable table;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // Strip comments outside quotes.
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line = line.substr(0, i);
                break;
            }
        }
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        if (stripped.front() == '[') {
            if (stripped.back() != ']') {
                throw ConfigError("line " + std::to_string(line_no) + ": unterminated table header");
            }
            section = trim(stripped.substr(1, stripped.size() - 2));
            if (section.empty()) {
                throw ConfigError("line " + std::to_string(line_no) + ": empty table name");
            }
            continue;
        }
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
        }
        table.set(section.empty() ? key : section + "." + key, value);
    }
    return table;
}

TomlTable load_toml(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_toml(buffer.str());
}

AppConfig default_app_config() {
    return AppConfig{};
}

void apply_toml(AppConfig& config, const TomlTable& toml) {
    config.gateway.api_base = toml.get_string("gateway.api_base", config.gateway.api_base);
    config.gateway.chat_model = toml.get_string("gateway.chat_model", config.gateway.chat_model);
    config.gateway.embed_model =
        toml.get_string("gateway.embed_model", config.gateway.embed_model);
    config.gateway.temperature = toml.get_double("gateway.temperature", config.gateway.temperature);
    config.gateway.request_timeout_s = static_cast<int>(
        toml.get_int("gateway.request_timeout_s", config.gateway.request_timeout_s));
    config.gateway.max_retries =
        static_cast<int>(toml.get_int("gateway.max_retries", config.gateway.max_retries));
    config.gateway.retry_backoff_ms = static_cast<int>(
        toml.get_int("gateway.retry_backoff_ms", config.gateway.retry_backoff_ms));
    config.gateway.parallelism_limit = static_cast<int>(
        toml.get_int("gateway.parallelism_limit", config.gateway.parallelism_limit));
    config.gateway.mock_dim = static_cast<std::uint32_t>(
        toml.get_int("gateway.mock_dim", static_cast<long>(config.gateway.mock_dim)));
    config.gateway.mock_seed = static_cast<std::uint64_t>(
        toml.get_int("gateway.mock_seed", static_cast<long>(config.gateway.mock_seed)));
    config.gateway.mock_script_path =
        toml.get_string("gateway.mock_script", config.gateway.mock_script_path);

    config.params.alpha_mix = toml.get_double("retrieval.alpha", config.params.alpha_mix);
    config.params.beta_mix = toml.get_double("retrieval.beta", config.params.beta_mix);
    config.params.lambda_mix = toml.get_double("retrieval.lambda", config.params.lambda_mix);
    config.params.budget_m =
        static_cast<int>(toml.get_int("retrieval.m", config.params.budget_m));
    config.params.output_k =
        static_cast<int>(toml.get_int("retrieval.output_k", config.params.output_k));
    config.params.seed = static_cast<std::uint64_t>(
        toml.get_int("retrieval.seed", static_cast<long>(config.params.seed)));
    config.graph.theta_g = toml.get_double("retrieval.theta_g", config.graph.theta_g);
    config.graph.theta_h =
        static_cast<int>(toml.get_int("retrieval.theta_h", config.graph.theta_h));
    config.reasoner.max_rounds =
        static_cast<int>(toml.get_int("retrieval.max_rounds", config.reasoner.max_rounds));
    config.reasoner.subgraph_cap =
        static_cast<int>(toml.get_int("retrieval.subgraph_cap", config.reasoner.subgraph_cap));
    config.reasoner.answer_top_k =
        static_cast<int>(toml.get_int("retrieval.answer_top_k", config.reasoner.answer_top_k));

    config.mock = toml.get_bool("gateway.mock", config.mock);
    config.index_path = toml.get_string("paths.index", config.index_path);
    config.graph_cache_path = toml.get_string("paths.graph_cache", config.graph_cache_path);
    config.dataset_path = toml.get_string("paths.dataset", config.dataset_path);
    config.manifest_path = toml.get_string("paths.manifest", config.manifest_path);
    config.report_dir = toml.get_string("paths.report_dir", config.report_dir);
}

AppConfig load_app_config(const std::string& toml_path) {
    AppConfig config = default_app_config();
    if (!toml_path.empty()) apply_toml(config, load_toml(toml_path));
    config.gateway = apply_env(config.gateway);
    return config;
}

std::string AppConfig::to_json() const {
    nlohmann::ordered_json out;
    out["gateway"] = {
        {"api_base", gateway.api_base},
        {"chat_model", gateway.chat_model},
        {"embed_model", gateway.embed_model},
        {"temperature", gateway.temperature},
        {"request_timeout_s", gateway.request_timeout_s},
        {"max_retries", gateway.max_retries},
        {"parallelism_limit", gateway.parallelism_limit},
        {"mock", mock},
        {"mock_dim", gateway.mock_dim},
        {"mock_seed", gateway.mock_seed},
    };
    out["retrieval"] = {
        {"alpha", params.alpha_mix},
        {"beta", params.beta_mix},
        {"lambda", params.lambda_mix},
        {"m", params.budget_m},
        {"output_k", params.output_k},
        {"seed", params.seed},
        {"theta_g", graph.theta_g},
        {"theta_h", graph.theta_h},
        {"max_rounds", reasoner.max_rounds},
        {"subgraph_cap", reasoner.subgraph_cap},
        {"answer_top_k", reasoner.answer_top_k},
    };
    out["paths"] = {
        {"index", index_path},
        {"graph_cache", graph_cache_path},
        {"dataset", dataset_path},
        {"manifest", manifest_path},
        {"report_dir", report_dir},
    };
    return out.dump();
}

SyntheticCorpusSpec corpus_spec_from_toml(const TomlTable& toml) {
    SyntheticCorpusSpec spec;
    spec.num_pages = static_cast<int>(toml.get_int("num_pages", spec.num_pages));
    spec.dim = static_cast<int>(toml.get_int("dim", spec.dim));
    spec.num_aspects = static_cast<int>(toml.get_int("num_aspects", spec.num_aspects));
    spec.distractor_aspects =
        static_cast<int>(toml.get_int("distractor_aspects", spec.distractor_aspects));
    spec.vectors_per_page =
        static_cast<int>(toml.get_int("vectors_per_page", spec.vectors_per_page));
    spec.noise_sigma = toml.get_double("noise_sigma", spec.noise_sigma);
    spec.judge_flip_prob = toml.get_double("judge_flip_prob", spec.judge_flip_prob);
    spec.seed = static_cast<std::uint64_t>(toml.get_int("seed", static_cast<long>(spec.seed)));
    spec.num_queries = static_cast<int>(toml.get_int("num_queries", spec.num_queries));
    spec.validate();
    return spec;
}

}  // namespace mabdqa

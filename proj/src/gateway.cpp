#include "mabdqa/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mabdqa/rng.hpp"

#ifndef MABDQA_NO_HTTPLIB
#include "httplib.h"
#endif

namespace mabdqa {

using nlohmann::json;

GatewayConfig apply_env(GatewayConfig config) {
    if (const char* v = std::getenv("MABDQA_API_BASE")) config.api_base = v;
    if (const char* v = std::getenv("MABDQA_API_KEY")) config.api_key = v;
    if (const char* v = std::getenv("MABDQA_CHAT_MODEL")) config.chat_model = v;
    if (const char* v = std::getenv("MABDQA_EMBED_MODEL")) config.embed_model = v;
    return config;
}

int judge_page(ChatClient& chat, const std::string& question, const PageRef& page,
               const std::string& priori) {
    const std::map<std::string, std::string> fields = {
        {"priori", priori},
        {"query", question},
        {"page_id", page.page_id},
    };
    const std::string reply = chat.chat(TemplateId::kJudgeEvidence, fields, {page});
    return parse_last_rating(reply);
}

int grade_answer(ChatClient& chat, const std::string& question, const std::string& predicted,
                 const std::string& ground_truth) {
    const std::map<std::string, std::string> fields = {
        {"question", question},
        {"answer", predicted},
        {"gt", ground_truth},
    };
    const std::string reply = chat.chat(TemplateId::kGradeAnswer, fields, {});
    return parse_binary_grade(reply);
}

// ---------------------------------------------------------------------------
// Mock oracle.

MockScript parse_mock_script(const std::string& json_text) {
    json parsed;
    try {
        parsed = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("mock script is not valid JSON: ") + e.what());
    }
    if (!parsed.is_array()) throw ConfigError("mock script must be a JSON array of rules");
    MockScript script;
    for (const auto& entry : parsed) {
        MockRule rule;
        rule.template_name = entry.at("template").get<std::string>();
        template_from_name(rule.template_name);  // validate
        if (entry.contains("equals")) {
            for (auto it = entry["equals"].begin(); it != entry["equals"].end(); ++it) {
                rule.equals[it.key()] = it.value().get<std::string>();
            }
        }
        if (entry.contains("contains")) {
            for (auto it = entry["contains"].begin(); it != entry["contains"].end(); ++it) {
                rule.contains[it.key()] = it.value().get<std::string>();
            }
        }
        rule.fail = entry.value("fail", false);
        if (!rule.fail) rule.reply = entry.at("reply").get<std::string>();
        script.rules.push_back(std::move(rule));
    }
    return script;
}

MockScript load_mock_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mock script: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_mock_script(buffer.str());
}

namespace {

bool rule_matches(const MockRule& rule, TemplateId id,
                  const std::map<std::string, std::string>& fields) {
    if (rule.template_name != template_name(id)) return false;
    for (const auto& [key, value] : rule.equals) {
        auto it = fields.find(key);
        if (it == fields.end() || it->second != value) return false;
    }
    for (const auto& [key, value] : rule.contains) {
        auto it = fields.find(key);
        if (it == fields.end() || it->second.find(value) == std::string::npos) return false;
    }
    return true;
}

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

std::string MockGateway::chat(TemplateId id, const std::map<std::string, std::string>& fields,
                              const std::vector<PageRef>& pages) {
    // Rendering first keeps the mock as strict about template fields as the
    // live gateway.
    const std::string rendered = render_template(id, fields);
    std::map<std::string, std::string> match_fields = fields;
    if (!pages.empty() && !match_fields.count("page_id")) {
        match_fields["page_id"] = pages.front().page_id;
    }
    for (const MockRule& rule : script_.rules) {
        if (rule_matches(rule, id, match_fields)) {
            if (rule.fail) throw GatewayError("scripted failure", true);
            emit_exchange(id, rendered, pages, rule.reply);
            return rule.reply;
        }
    }

    auto field = [&](const char* key) -> std::string {
        auto it = fields.find(key);
        return it == fields.end() ? std::string() : it->second;
    };

    std::string reply;
    switch (id) {
        case TemplateId::kDecompose:
            // Comma-free on purpose: callers take the whole-question fallback.
            reply = field("question");
            break;
        case TemplateId::kJudgeEvidence: {
            const std::string key = field("query") + "|" + field("page_id");
            reply = std::to_string(1 + static_cast<int>((fnv1a(key) ^ seed_) % 5));
            break;
        }
        case TemplateId::kGradeAnswer: {
            const bool match = to_lower(trim(field("answer"))) == to_lower(trim(field("gt")));
            reply = std::string("{\"binary_correctness\": ") + (match ? "1" : "0") + "}";
            break;
        }
        case TemplateId::kAnswerQuestion:
            reply = pages.empty() ? "Not answerable"
                                  : "Based on " + std::to_string(pages.size()) + " pages: see " +
                                        pages.front().page_id;
            break;
        case TemplateId::kRewriteQuestion:
            reply = field("question");
            break;
        case TemplateId::kReflectAnswer:
            reply = "yes";
            break;
        case TemplateId::kSummarizeHypergraph:
            reply = "The question hinges on the listed aspects and their relationships.";
            break;
        case TemplateId::kRefineAnswer:
            reply = field("initial_answer");
            break;
    }
    emit_exchange(id, rendered, pages, reply);
    return reply;
}

MultiVectorEmbedding MockGateway::embed_one(const std::string& key) const {
    Rng rng(seed_ ^ fnv1a(key));
    std::size_t words = 1;
    bool in_word = false;
    std::size_t seen = 0;
    for (char c : key) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++seen;
        }
    }
    words = std::clamp<std::size_t>(seen, 1, 8);
    MultiVectorEmbedding e(words, dim_);
    for (std::size_t i = 0; i < words; ++i) {
        double norm_sq = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double v = rng.normal();
            e.at(i, j) = static_cast<float>(v);
            norm_sq += v * v;
        }
        if (norm_sq > 0.0) {
            const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
            for (std::size_t j = 0; j < dim_; ++j) e.at(i, j) *= inv;
        }
    }
    return e;
}

std::vector<MultiVectorEmbedding> MockGateway::embed(const std::vector<EmbedInput>& batch) {
    if (batch.empty()) throw ContractError("embed: empty batch");
    std::vector<MultiVectorEmbedding> out;
    out.reserve(batch.size());
    for (const EmbedInput& input : batch) {
        out.push_back(embed_one(input.text.empty() ? input.image_path : input.text));
    }
    return out;
}

// ---------------------------------------------------------------------------
// HTTP gateway.

namespace {

std::string base64_encode(const std::string& bytes) {
    static const char alphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                                static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(alphabet[(n >> 18) & 63]);
        out.push_back(alphabet[(n >> 12) & 63]);
        out.push_back(alphabet[(n >> 6) & 63]);
        out.push_back(alphabet[n & 63]);
        i += 3;
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(alphabet[(n >> 18) & 63]);
        out.push_back(alphabet[(n >> 12) & 63]);
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(alphabet[(n >> 18) & 63]);
        out.push_back(alphabet[(n >> 12) & 63]);
        out.push_back(alphabet[(n >> 6) & 63]);
        out += "=";
    }
    return out;
}

json page_content_part(const PageRef& page) {
    if (!page.image_path.empty()) {
        std::ifstream in(page.image_path, std::ios::binary);
        if (!in) throw IoError("cannot read page image: " + page.image_path);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return json{{"type", "image_url"},
                    {"image_url", {{"url", "data:image/png;base64," + base64_encode(bytes)}}}};
    }
    return json{{"type", "text"},
                {"text", "[Page " + page.page_id + "]\n" + page.text}};
}

bool status_retriable(int status) {
    return status == 408 || status == 429 || status >= 500;
}

}  // namespace

#ifndef MABDQA_NO_HTTPLIB

namespace {

class HttplibTransport : public ChatTransport {
public:
    explicit HttplibTransport(const GatewayConfig& config) : config_(config) {}

    HttpResult post_json(const std::string& path, const std::string& body) override {
        httplib::Client client(config_.api_base);
        client.set_connection_timeout(config_.request_timeout_s);
        client.set_read_timeout(config_.request_timeout_s);
        client.set_default_headers({{"Authorization", "Bearer " + config_.api_key}});
        auto res = client.Post(path, body, "application/json");
        HttpResult out;
        if (!res) {
            out.error = httplib::to_string(res.error());
            return out;
        }
        out.status = res->status;
        out.body = res->body;
        return out;
    }

private:
    GatewayConfig config_;
};

}  // namespace

std::unique_ptr<ChatTransport> make_httplib_transport(const GatewayConfig& config) {
    return std::make_unique<HttplibTransport>(config);
}

#endif  // MABDQA_NO_HTTPLIB

HttpGateway::HttpGateway(GatewayConfig config)
    : HttpGateway(std::move(config), nullptr, nullptr) {}

HttpGateway::HttpGateway(GatewayConfig config, std::unique_ptr<ChatTransport> transport,
                         std::function<void(int)> sleep_ms)
    : config_(std::move(config)), transport_(std::move(transport)), sleep_ms_(std::move(sleep_ms)) {
    if (config_.api_key.empty()) {
        throw ConfigError("MABDQA_API_KEY is not set; refusing to construct a live gateway");
    }
#ifndef MABDQA_NO_HTTPLIB
    if (!transport_) transport_ = make_httplib_transport(config_);
#endif
    if (!transport_) throw ConfigError("no transport available for live gateway");
    if (!sleep_ms_) {
        sleep_ms_ = [](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
    }
}

HttpResult HttpGateway::post_with_retry(const std::string& path, const std::string& body) {
    // Bound concurrent in-flight requests to parallelism_limit.
    {
        std::unique_lock<std::mutex> lock(mutex_);
        slots_cv_.wait(lock, [&] { return in_flight_ < std::max(1, config_.parallelism_limit); });
        ++in_flight_;
    }
    struct SlotRelease {
        HttpGateway* self;
        ~SlotRelease() {
            std::lock_guard<std::mutex> lock(self->mutex_);
            --self->in_flight_;
            self->slots_cv_.notify_one();
        }
    } release{this};

    const int attempts = std::max(1, config_.max_retries);
    int backoff = config_.retry_backoff_ms;
    HttpResult last;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            ++telemetry_.requests;
            if (attempt > 1) ++telemetry_.retries;
        }
        last = transport_->post_json(path, body);
        if (last.error.empty() && last.status >= 200 && last.status < 300) return last;
        const bool retriable = !last.error.empty() || status_retriable(last.status);
        if (!retriable || attempt == attempts) break;
        sleep_ms_(backoff);
        backoff *= 2;
    }
    {
        std::lock_guard<std::mutex> lock(mutex_);
        ++telemetry_.failures;
    }
    if (!last.error.empty()) {
        throw GatewayError("transport failure after retries: " + last.error, true);
    }
    throw GatewayError("gateway returned HTTP " + std::to_string(last.status) + ": " + last.body,
                       status_retriable(last.status));
}

std::string HttpGateway::chat(TemplateId id, const std::map<std::string, std::string>& fields,
                              const std::vector<PageRef>& pages) {
    const std::string rendered = render_template(id, fields);
    json messages = json::array();
    if (id == TemplateId::kDecompose) {
        // B.1 carries no placeholder; the query travels as the user message.
        messages.push_back({{"role", "system"}, {"content", rendered}});
        auto it = fields.find("question");
        messages.push_back({{"role", "user"}, {"content", it == fields.end() ? "" : it->second}});
    } else if (pages.empty()) {
        messages.push_back({{"role", "user"}, {"content", rendered}});
    } else {
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", rendered}});
        for (const PageRef& page : pages) parts.push_back(page_content_part(page));
        messages.push_back({{"role", "user"}, {"content", parts}});
    }
    const json payload = {
        {"model", config_.chat_model},
        {"temperature", config_.temperature},
        {"messages", messages},
    };
    const HttpResult res = post_with_retry("/chat/completions", payload.dump());
    try {
        const json reply = json::parse(res.body);
        const std::string content =
            reply.at("choices").at(0).at("message").at("content").get<std::string>();
        emit_exchange(id, rendered, pages, content);
        return content;
    } catch (const json::exception& e) {
        throw GatewayError(std::string("malformed chat completion response: ") + e.what(), false);
    }
}

std::vector<MultiVectorEmbedding> HttpGateway::embed(const std::vector<EmbedInput>& batch) {
    if (batch.empty()) throw ContractError("embed: empty batch");
    json input = json::array();
    for (const EmbedInput& item : batch) {
        input.push_back(item.text.empty() ? item.image_path : item.text);
    }
    const json payload = {{"model", config_.embed_model}, {"input", input}};
    const HttpResult res = post_with_retry("/embeddings", payload.dump());
    std::vector<MultiVectorEmbedding> out;
    try {
        const json reply = json::parse(res.body);
        for (const auto& item : reply.at("data")) {
            const auto& values = item.at("embedding");
            // Single vectors arrive as one row; multi-vector models may nest.
            std::vector<std::vector<double>> rows;
            if (!values.empty() && values.at(0).is_array()) {
                rows = values.get<std::vector<std::vector<double>>>();
            } else {
                rows.push_back(values.get<std::vector<double>>());
            }
            const std::size_t dim = rows.empty() ? 0 : rows.front().size();
            MultiVectorEmbedding e(rows.size(), dim);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != dim) {
                    throw GatewayError("embedding dimension drift within one response", false);
                }
                for (std::size_t j = 0; j < dim; ++j) e.at(i, j) = static_cast<float>(rows[i][j]);
            }
            out.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw GatewayError(std::string("malformed embeddings response: ") + e.what(), false);
    }
    if (out.size() != batch.size()) {
        throw GatewayError("embeddings response cardinality mismatch", false);
    }
    for (const auto& e : out) {
        if (e.dim() != out.front().dim()) {
            throw GatewayError("embedding dimension drift across the batch", false);
        }
    }
    return out;
}

GatewayTelemetry HttpGateway::telemetry() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return telemetry_;
}

}  // namespace mabdqa

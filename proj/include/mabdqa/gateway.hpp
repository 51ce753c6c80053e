#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mabdqa/embedding.hpp"
#include "mabdqa/errors.hpp"
#include "mabdqa/prompts.hpp"

namespace mabdqa {

struct GatewayConfig {
    std::string api_base = "https://api.openai.com/v1";
    std::string api_key;  // from MABDQA_API_KEY only, never from config files
    std::string chat_model = "qwen2.5-vl-7b-instruct";
    std::string embed_model = "colpali";
    double temperature = 0.0;  // determinism regime
    int request_timeout_s = 60;
    int max_retries = 3;  // total attempts
    int retry_backoff_ms = 1000;
    int parallelism_limit = 4;
    std::uint32_t mock_dim = 16;
    std::uint64_t mock_seed = 42;
    std::string mock_script_path;
};

// Fills api_base/api_key/chat_model/embed_model from MABDQA_* env vars on
// top of the given defaults.
GatewayConfig apply_env(GatewayConfig config);

// A page as the gateway ships it: image attachment when image_path is set,
// text block otherwise (synthetic corpora).
struct PageRef {
    std::string page_id;
    std::string image_path;
    std::string text;
};

struct EmbedInput {
    std::string text;
    std::string image_path;
};

// One completed prompt round trip, for audit sinks.
struct ChatExchange {
    TemplateId template_id;
    std::string rendered_prompt;
    std::vector<std::string> page_ids;
    std::string raw_reply;
};

using ExchangeSink = std::function<void(const ChatExchange&)>;

class ChatClient {
public:
    virtual ~ChatClient() = default;
    // Renders the template, sends it, returns the raw reply text.
    virtual std::string chat(TemplateId id, const std::map<std::string, std::string>& fields,
                             const std::vector<PageRef>& pages) = 0;
    virtual void set_exchange_sink(ExchangeSink sink) { sink_ = std::move(sink); }

protected:
    void emit_exchange(TemplateId id, const std::string& rendered,
                       const std::vector<PageRef>& pages, const std::string& reply) const {
        if (!sink_) return;
        ChatExchange exchange{id, rendered, {}, reply};
        for (const PageRef& page : pages) exchange.page_ids.push_back(page.page_id);
        sink_(exchange);
    }

private:
    ExchangeSink sink_;
};

class EmbedClient {
public:
    virtual ~EmbedClient() = default;
    virtual std::vector<MultiVectorEmbedding> embed(const std::vector<EmbedInput>& batch) = 0;
};

// Renders the judge template with the priori bucket and parses the 1-5 rating.
int judge_page(ChatClient& chat, const std::string& question, const PageRef& page,
               const std::string& priori);

// Renders the evaluation template and parses binary_correctness from the reply.
int grade_answer(ChatClient& chat, const std::string& question, const std::string& predicted,
                 const std::string& ground_truth);

// ---------------------------------------------------------------------------
// Deterministic mock oracle.

struct MockRule {
    std::string template_name;                        // required
    std::map<std::string, std::string> equals;        // field -> exact value
    std::map<std::string, std::string> contains;      // field -> substring
    std::string reply;
    bool fail = false;  // matched rule throws a GatewayError (fault injection)
};

struct MockScript {
    std::vector<MockRule> rules;
};

MockScript load_mock_script(const std::string& path);
MockScript parse_mock_script(const std::string& json_text);

// Pure: replies depend only on (template id, substituted fields, seed).
// Embeddings are derived from a seeded hash of the input, so repeated calls
// with the same input are bit-identical.
class MockGateway : public ChatClient, public EmbedClient {
public:
    explicit MockGateway(std::uint64_t seed = 42, std::uint32_t dim = 16)
        : seed_(seed), dim_(dim) {}
    MockGateway(MockScript script, std::uint64_t seed, std::uint32_t dim)
        : script_(std::move(script)), seed_(seed), dim_(dim) {}

    std::string chat(TemplateId id, const std::map<std::string, std::string>& fields,
                     const std::vector<PageRef>& pages) override;
    std::vector<MultiVectorEmbedding> embed(const std::vector<EmbedInput>& batch) override;

    MultiVectorEmbedding embed_one(const std::string& key) const;

private:
    MockScript script_;
    std::uint64_t seed_;
    std::uint32_t dim_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP gateway.

struct HttpResult {
    int status = 0;
    std::string body;
    std::string error;  // transport-level failure; empty on HTTP completion
};

class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual HttpResult post_json(const std::string& path, const std::string& body) = 0;
};

// Real transport over cpp-httplib; the only network code in the project.
std::unique_ptr<ChatTransport> make_httplib_transport(const GatewayConfig& config);

struct GatewayTelemetry {
    int requests = 0;
    int retries = 0;
    int failures = 0;
};

class HttpGateway : public ChatClient, public EmbedClient {
public:
    // Throws ConfigError when api_key is empty, before any network activity.
    explicit HttpGateway(GatewayConfig config);
    HttpGateway(GatewayConfig config, std::unique_ptr<ChatTransport> transport,
                std::function<void(int)> sleep_ms);

    std::string chat(TemplateId id, const std::map<std::string, std::string>& fields,
                     const std::vector<PageRef>& pages) override;
    std::vector<MultiVectorEmbedding> embed(const std::vector<EmbedInput>& batch) override;

    GatewayTelemetry telemetry() const;

private:
    HttpResult post_with_retry(const std::string& path, const std::string& body);

    GatewayConfig config_;
    std::unique_ptr<ChatTransport> transport_;
    std::function<void(int)> sleep_ms_;
    mutable std::mutex mutex_;
    std::condition_variable slots_cv_;
    int in_flight_ = 0;
    GatewayTelemetry telemetry_;
};

}  // namespace mabdqa

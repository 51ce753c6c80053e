#include "mabdqa/gateway.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

using namespace mabdqa;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "cannot open " << path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

struct ScriptedTransport : ChatTransport {
    std::vector<HttpResult> results;
    std::vector<std::pair<std::string, std::string>> calls;

    HttpResult post_json(const std::string& path, const std::string& body) override {
        calls.emplace_back(path, body);
        if (results.empty()) return {500, "exhausted", ""};
        HttpResult next = results.front();
        results.erase(results.begin());
        return next;
    }
};

std::string chat_body(const std::string& content) {
    return std::string(R"({"choices":[{"message":{"content":")") + content + R"("}}]})";
}

GatewayConfig test_config() {
    GatewayConfig config;
    config.api_key = "test-key";
    config.retry_backoff_ms = 1;
    return config;
}

}  // namespace

TEST_CASE("rendered prompts byte-match the golden files") {
    const std::string dir = MABDQA_GOLDEN_DIR;
    const std::map<std::string, std::string> q = {{"question", "What was the total revenue?"}};

    CHECK(render_template(TemplateId::kDecompose, {}) == read_file(dir + "/decompose.txt"));
    CHECK(render_template(TemplateId::kJudgeEvidence,
                          {{"priori", "moderately"},
                           {"query", "What was the online revenue growth in fiscal 2015?"}}) ==
          read_file(dir + "/judge_evidence.txt"));
    CHECK(render_template(TemplateId::kGradeAnswer,
                          {{"question", "What is the capital of France?"},
                           {"answer", "Paris"},
                           {"gt", "Paris"}}) == read_file(dir + "/grade_answer.txt"));
    CHECK(render_template(TemplateId::kAnswerQuestion,
                          {{"num_images", "4"}, {"question", "What was the total revenue?"}}) ==
          read_file(dir + "/answer_question.txt"));
    CHECK(render_template(TemplateId::kRewriteQuestion,
                          {{"num_images", "4"}, {"question", "What was the total revenue?"}}) ==
          read_file(dir + "/rewrite_question.txt"));
    CHECK(render_template(TemplateId::kReflectAnswer,
                          {{"question", "What was the total revenue?"},
                           {"answer", "The total revenue was $40.3 billion."}}) ==
          read_file(dir + "/reflect_answer.txt"));
    CHECK(render_template(
              TemplateId::kSummarizeHypergraph,
              {{"question", "What was the total revenue?"},
               {"aspects_line",
                "Key aspects to focus on: pages: page_1 page_2; aspects: [total revenue]"}}) ==
          read_file(dir + "/summarize_hypergraph.txt"));
    CHECK(render_template(TemplateId::kRefineAnswer,
                          {{"question", "What was the total revenue?"},
                           {"initial_answer", "Unknown"},
                           {"summary", "Revenue figures appear on page 4."}}) ==
          read_file(dir + "/refine_answer.txt"));
}

TEST_CASE("render rejects missing fields and unknown names resolve") {
    CHECK_THROWS_AS(render_template(TemplateId::kAnswerQuestion, {}), ContractError);
    CHECK(template_from_name("judge_evidence") == TemplateId::kJudgeEvidence);
    CHECK_THROWS_AS(template_from_name("nope"), ContractError);
}

TEST_CASE("reply parsers") {
    SUBCASE("last standalone rating wins") {
        CHECK(parse_last_rating("Thinking... 4") == 4);
        CHECK(parse_last_rating("Rate 1 to 5 -> I pick 3") == 3);
        CHECK(parse_last_rating("score 45 then 2") == 2);
        CHECK_THROWS_AS(parse_last_rating("no digits here"), ParseError);
        CHECK_THROWS_AS(parse_last_rating("only 45 and 7"), ParseError);
    }
    SUBCASE("binary grade comes from the first JSON object") {
        CHECK(parse_binary_grade(R"({"binary_correctness": 0})") == 0);
        CHECK(parse_binary_grade(R"(reasoning first {"binary_correctness": 1} done)") == 1);
        CHECK_THROWS_AS(parse_binary_grade("no json"), ParseError);
        CHECK_THROWS_AS(parse_binary_grade(R"({"other": 1})"), ParseError);
    }
    SUBCASE("yes/no reads the first token") {
        CHECK(parse_yes_no("yes"));
        CHECK(parse_yes_no("Yes, it does."));
        CHECK_FALSE(parse_yes_no("no"));
        CHECK_FALSE(parse_yes_no("maybe yes"));
        CHECK_FALSE(parse_yes_no(""));
    }
    SUBCASE("priori buckets split by thirds") {
        CHECK(priori_bucket(0.1) == "slightly");
        CHECK(priori_bucket(0.5) == "moderately");
        CHECK(priori_bucket(0.9) == "very");
    }
}

TEST_CASE("mock gateway is pure and scriptable") {
    SUBCASE("same inputs, same reply") {
        MockGateway mock(42, 8);
        const auto fields = std::map<std::string, std::string>{{"query", "q"}, {"page_id", "p1"},
                                                               {"priori", "slightly"}};
        CHECK(mock.chat(TemplateId::kJudgeEvidence, fields, {}) ==
              mock.chat(TemplateId::kJudgeEvidence, fields, {}));
    }
    SUBCASE("scripted judge rule wins over the default") {
        MockScript script;
        script.rules.push_back({"judge_evidence", {}, {{"page_id", "gold"}}, "5", false});
        MockGateway mock(script, 42, 8);
        const PageRef page{"gold", "", "page text"};
        CHECK(judge_page(mock, "q", page, "slightly") == 5);
    }
    SUBCASE("grade defaults to normalized exact match") {
        MockGateway mock(42, 8);
        CHECK(grade_answer(mock, "q", "Paris", "Paris") == 1);
        CHECK(grade_answer(mock, "q", " paris ", "Paris") == 1);
        CHECK(grade_answer(mock, "q", "London", "Paris") == 0);
        CHECK(grade_answer(mock, "q", "Not answerable", "Not answerable") == 1);
    }
    SUBCASE("mock embeddings are deterministic with uniform dimension") {
        MockGateway mock(42, 16);
        const auto a = mock.embed({{"x', y", ""}});
        const auto b = mock.embed({{"x', y", ""}});
        CHECK(a.front() == b.front());
        const auto batch = mock.embed({{"one", ""}, {"two words", ""}, {"three words here", ""}});
        CHECK(batch.size() == 3);
        for (const auto& e : batch) CHECK(e.dim() == 16);
        CHECK_THROWS_AS(mock.embed({}), ContractError);
    }
    SUBCASE("script files parse and validate") {
        const auto path =
            (std::filesystem::temp_directory_path() / "mabdqa_script.json").string();
        std::ofstream(path) << R"([{"template":"answer_question","reply":"Not answerable"},
                                   {"template":"reflect_answer","fail":true}])";
        const MockScript script = load_mock_script(path);
        REQUIRE(script.rules.size() == 2);
        CHECK(script.rules[0].reply == "Not answerable");
        CHECK(script.rules[1].fail);
        MockGateway mock(script, 42, 8);
        CHECK(mock.chat(TemplateId::kAnswerQuestion,
                        {{"num_images", "1"}, {"question", "q"}}, {}) == "Not answerable");
        CHECK_THROWS_AS(mock.chat(TemplateId::kReflectAnswer, {{"question", "q"},
                                                               {"answer", "a"}}, {}),
                        GatewayError);
        std::ofstream(path) << R"([{"template":"bogus","reply":"x"}])";
        CHECK_THROWS_AS(load_mock_script(path), ContractError);
    }
}

TEST_CASE("exchange sinks observe rendered prompts and replies") {
    MockScript script;
    script.rules.push_back({"judge_evidence", {}, {}, "4", false});
    MockGateway mock(script, 42, 8);
    std::vector<ChatExchange> seen;
    mock.set_exchange_sink([&](const ChatExchange& e) { seen.push_back(e); });
    const PageRef page{"p7", "", "content"};
    CHECK(judge_page(mock, "the query", page, "slightly") == 4);
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].template_id == TemplateId::kJudgeEvidence);
    CHECK(seen[0].raw_reply == "4");
    CHECK(seen[0].page_ids == std::vector<std::string>{"p7"});
    CHECK(seen[0].rendered_prompt ==
          render_template(TemplateId::kJudgeEvidence,
                          {{"priori", "slightly"}, {"query", "the query"}, {"page_id", "p7"}}));
}

TEST_CASE("the mock is as strict about template fields as the live gateway") {
    MockGateway mock(42, 8);
    CHECK_THROWS_AS(mock.chat(TemplateId::kAnswerQuestion, {{"question", "q"}}, {}),
                    ContractError);  // num_images missing
}

TEST_CASE("live gateway construction requires an api key before any network use") {
    GatewayConfig config;
    config.api_key = "";
    CHECK_THROWS_AS(HttpGateway{config}, ConfigError);
}

TEST_CASE("gateway env vars override the defaults") {
    setenv("MABDQA_API_BASE", "http://example.test/v1", 1);
    setenv("MABDQA_CHAT_MODEL", "model-x", 1);
    const GatewayConfig config = apply_env(GatewayConfig{});
    CHECK(config.api_base == "http://example.test/v1");
    CHECK(config.chat_model == "model-x");
    unsetenv("MABDQA_API_BASE");
    unsetenv("MABDQA_CHAT_MODEL");
}

TEST_CASE("retry policy: scripted first failure then success") {
    auto transport = std::make_unique<ScriptedTransport>();
    auto* raw = transport.get();
    raw->results.push_back({0, "", "connection reset"});
    raw->results.push_back({200, chat_body("All good"), ""});
    int slept = 0;
    HttpGateway gateway(test_config(), std::move(transport), [&](int ms) { slept += ms; });
    const std::string reply =
        gateway.chat(TemplateId::kReflectAnswer, {{"question", "q"}, {"answer", "a"}}, {});
    CHECK(reply == "All good");
    CHECK(gateway.telemetry().requests == 2);
    CHECK(gateway.telemetry().retries == 1);
    CHECK(gateway.telemetry().failures == 0);
    CHECK(slept == 1);
}

TEST_CASE("retry policy: non-retriable status fails immediately") {
    auto transport = std::make_unique<ScriptedTransport>();
    transport->results.push_back({401, "unauthorized", ""});
    HttpGateway gateway(test_config(), std::move(transport), [](int) {});
    CHECK_THROWS_AS(
        gateway.chat(TemplateId::kReflectAnswer, {{"question", "q"}, {"answer", "a"}}, {}),
        GatewayError);
    CHECK(gateway.telemetry().requests == 1);
    CHECK(gateway.telemetry().failures == 1);
}

TEST_CASE("retry policy: retriable failures exhaust all attempts") {
    auto transport = std::make_unique<ScriptedTransport>();
    auto* raw = transport.get();
    for (int i = 0; i < 3; ++i) raw->results.push_back({503, "busy", ""});
    HttpGateway gateway(test_config(), std::move(transport), [](int) {});
    CHECK_THROWS_AS(gateway.embed({{"text", ""}}), GatewayError);
    CHECK(gateway.telemetry().requests == 3);
    CHECK(gateway.telemetry().retries == 2);
}

TEST_CASE("embeddings responses map onto multi-vector matrices") {
    auto transport = std::make_unique<ScriptedTransport>();
    transport->results.push_back(
        {200, R"({"data":[{"embedding":[1.0,2.0]},{"embedding":[[1.0,0.0],[0.0,1.0]]}]})", ""});
    HttpGateway gateway(test_config(), std::move(transport), [](int) {});
    const auto out = gateway.embed({{"a", ""}, {"b", ""}});
    REQUIRE(out.size() == 2);
    CHECK(out[0].count() == 1);
    CHECK(out[0].dim() == 2);
    CHECK(out[1].count() == 2);
    CHECK(out[1].at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("dimension drift across a batch is a gateway error") {
    auto transport = std::make_unique<ScriptedTransport>();
    transport->results.push_back(
        {200, R"({"data":[{"embedding":[1.0,2.0]},{"embedding":[1.0,2.0,3.0]}]})", ""});
    HttpGateway gateway(test_config(), std::move(transport), [](int) {});
    CHECK_THROWS_AS(gateway.embed({{"a", ""}, {"b", ""}}), GatewayError);
}

TEST_CASE("only the gateway implementation touches the network library") {
    namespace fs = std::filesystem;
    const fs::path root = MABDQA_SOURCE_DIR;
    std::vector<std::string> offenders;
    for (const char* subdir : {"src", "include", "tools", "bindings", "tests"}) {
        const fs::path dir = root / subdir;
        if (!fs::exists(dir)) continue;
        for (const auto& entry : fs::recursive_directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            const auto ext = entry.path().extension().string();
            if (ext != ".cpp" && ext != ".hpp" && ext != ".h") continue;
            const std::string content = read_file(entry.path().string());
            // Needles assembled at runtime so this scanner never matches itself.
            const std::string quoted = std::string("#include \"") + "httplib.h\"";
            const std::string angled = std::string("#include <") + "httplib.h>";
            if (content.find(quoted) != std::string::npos ||
                content.find(angled) != std::string::npos) {
                if (entry.path().filename() != "gateway.cpp") {
                    offenders.push_back(entry.path().string());
                }
            }
        }
    }
    CHECK_MESSAGE(offenders.empty(), "network includes outside the gateway");
}

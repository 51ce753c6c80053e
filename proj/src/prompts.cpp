#include "mabdqa/prompts.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"

namespace mabdqa {

namespace {

const std::string kDecomposeText =
    R"(As an AI agent specialized in document retrieval query processing, your primary task is to handle each query by first ignoring any irrelevant information (such as output format requests or non-retrieval instructions).

Then, extract meaningful entities and key phrases that capture the core intent of the query.

Finally, output the result as a comma-separated list of key phrases, for example: "key_phrase1, key_phrase2, ...". Ensure clarity and conciseness throughout.)";

const std::string kJudgeEvidenceText =
    R"(# GOAL # You are a Retrieval Expert, and your task is to evaluate how relevant the input document page is to the given query.

Rate the relevance on a scale of 1 to 5, where:

- 5: Highly relevant - contains COMPLETE information to fully answer the query (be cautious with this rating)

- 4: Very relevant - contains most information needed but may lack some details (be cautious with this rating)

- 3: Moderately relevant - contains some useful information but significant gaps remain

- 2: Slightly relevant - has minor connection to the query

- 1: Irrelevant - contains no information related to the query

# INSTRUCTION # Based on previous retrieval system judgment, we believe that this document snapshot is at least {priori} relevant. Please first read the given query, think about what specific information is required to answer that query comprehensively, and then carefully examine the document snapshot.

# IMPORTANT # Before giving a score of 4 or 5, verify that the page actually contains the specific facts needed to answer the query, not just related information.

# QUERY# {query} Think step by step about the relevance, then provide just a single number (1-5) representing your judgment.)";

const std::string kGradeAnswerText =
    R"(Question: {question}

Predicted Answer: {answer}

Ground Truth Answer: {gt}

Please evaluate if the predicted answer is correct compared to the ground truth, considering the following criteria:

- If the Ground Truth Answer is "Not answerable":

- And the Predicted Answer indicates that the model cannot answer, then it is considered CORRECT (score 1).

- Otherwise:

- Score based on whether the Predicted Answer is factually and logically consistent with the Ground Truth Answer.

Score the answer on Binary correctness (0-1): 1 if the answer is correct, 0 if it is incorrect
Return only a JSON-parsable string in the format:
{{"binary_correctness": <score>}}

Output:)";

const std::string kAnswerQuestionText =
    R"(Using the provided {num_images} document screenshots, answer this question: "{question}"

Requirements:

- Reply must be extremely concise (as short as possible)

- Use only information visible in the screenshots

- If the answer cannot be clearly found, respond exactly: "Not answerable"

Answer:)";

const std::string kRewriteQuestionText =
    R"(Based on the provided {num_images} document screenshots, rephrase the following question to make it clearer and more specific.

Original question: "{question}"

Requirements for rewriting:

1. If the question is clear and can be answered using ONLY information in the screenshots, keep it essentially the same

2. If the question is ambiguous or vague, clarify it based on what information appears to be available in the screenshots

3. If the question cannot be answered with the screenshots, note this, but still try to rephrase for clarity

4. The rewritten question should be specific, direct, and answerable using visible document content

5. Keep the core intent of the original question

6. If screenshots show specific entities (names, dates, numbers, terms), use them in the rewritten question

7. Output only the rewritten question, nothing else

Rewritten question:)";

const std::string kReflectAnswerText =
    R"(You will be given a question and a corresponding answer. Your task is to determine whether the answer addresses the question, regardless of whether the answer is correct or not.

Focus only on whether the answer responds to the question and covers the necessary points (i.e., no essential content is missing).

If no answer is provided, consider it as not answering.

Question: {question}

Answer: {answer}

Did the answer address the question? (yes/no))";

const std::string kSummarizeHypergraphText =
    R"(Analyze the following question and identify the core concepts and relationships that need to be understood to answer it properly.

Question: "{question}"
{aspects_line}

Requirements:

- Break down the question into fundamental components

- Identify what specific information is needed to answer each component

- Note any implicit relationships or assumptions in the question

- Be concise but thorough in your analysis

Analysis:)";

const std::string kRefineAnswerText =
    R"(Based on the following context, provide a better answer to the question through careful reasoning.

Question: {question}

Initial incomplete answer: {initial_answer}

Relevant information summary: {summary}

CRITICAL THINKING REQUIREMENTS:

1. First, analyze what the question is REALLY asking for

2. Compare the initial answer with the available information

3. Identify gaps or inaccuracies in the initial answer

4. Synthesize information from the summary to fill these gaps

5. Formulate a coherent response that directly addresses the question

DO NOT simply copy phrases from the summary. Instead, use the information to construct a thoughtful answer.

If the summary indicates no relevant information, respond: "Not answerable"

Reasoning process:

- [Analyze the question requirements]

- [Compare initial answer with evidence]

- [Identify what needs to be improved]

- [Synthesize the improved answer]

Improved answer:)";

}  // namespace

const char* template_name(TemplateId id) {
    switch (id) {
        case TemplateId::kDecompose: return "decompose";
        case TemplateId::kJudgeEvidence: return "judge_evidence";
        case TemplateId::kGradeAnswer: return "grade_answer";
        case TemplateId::kAnswerQuestion: return "answer_question";
        case TemplateId::kRewriteQuestion: return "rewrite_question";
        case TemplateId::kReflectAnswer: return "reflect_answer";
        case TemplateId::kSummarizeHypergraph: return "summarize_hypergraph";
        case TemplateId::kRefineAnswer: return "refine_answer";
    }
    return "unknown";
}

TemplateId template_from_name(const std::string& name) {
    for (int i = 0; i < kTemplateCount; ++i) {
        const auto id = static_cast<TemplateId>(i);
        if (name == template_name(id)) return id;
    }
    throw ContractError("unknown template name: " + name);
}

const std::string& template_text(TemplateId id) {
    switch (id) {
        case TemplateId::kDecompose: return kDecomposeText;
        case TemplateId::kJudgeEvidence: return kJudgeEvidenceText;
        case TemplateId::kGradeAnswer: return kGradeAnswerText;
        case TemplateId::kAnswerQuestion: return kAnswerQuestionText;
        case TemplateId::kRewriteQuestion: return kRewriteQuestionText;
        case TemplateId::kReflectAnswer: return kReflectAnswerText;
        case TemplateId::kSummarizeHypergraph: return kSummarizeHypergraphText;
        case TemplateId::kRefineAnswer: return kRefineAnswerText;
    }
    throw ContractError("unknown template id");
}

std::string render_template(TemplateId id, const std::map<std::string, std::string>& fields) {
    const std::string& text = template_text(id);
    std::string out;
    out.reserve(text.size() + 64);
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
            out.push_back('{');
            ++i;
        } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
            out.push_back('}');
            ++i;
        } else if (c == '{') {
            const auto close = text.find('}', i + 1);
            if (close == std::string::npos) {
                throw ContractError("unterminated placeholder in template");
            }
            const std::string key = text.substr(i + 1, close - i - 1);
            auto it = fields.find(key);
            if (it == fields.end()) {
                throw ContractError(std::string("missing template field: ") + key);
            }
            out += it->second;
            i = close;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string priori_bucket(double li_norm) {
    if (li_norm < 1.0 / 3.0) return "slightly";
    if (li_norm < 2.0 / 3.0) return "moderately";
    return "very";
}

std::string trim(const std::string& s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

std::vector<std::string> parse_comma_list(const std::string& reply, std::size_t max_items) {
    std::vector<std::string> items;
    std::vector<std::string> seen_lower;
    std::size_t start = 0;
    while (start <= reply.size()) {
        std::size_t comma = reply.find(',', start);
        if (comma == std::string::npos) comma = reply.size();
        std::string item = trim(reply.substr(start, comma - start));
        start = comma + 1;
        if (item.empty()) continue;
        std::string lower = item;
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (std::find(seen_lower.begin(), seen_lower.end(), lower) != seen_lower.end()) continue;
        seen_lower.push_back(lower);
        items.push_back(std::move(item));
        if (items.size() == max_items) break;
    }
    return items;
}

int parse_last_rating(const std::string& reply) {
    int last = 0;
    bool found = false;
    std::size_t i = 0;
    while (i < reply.size()) {
        if (std::isdigit(static_cast<unsigned char>(reply[i]))) {
            std::size_t j = i;
            while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
            if (j - i == 1) {
                const int value = reply[i] - '0';
                if (value >= 1 && value <= 5) {
                    last = value;
                    found = true;
                }
            }
            i = j;
        } else {
            ++i;
        }
    }
    if (!found) throw ParseError("no rating 1-5 found in judge reply");
    return last;
}

int parse_binary_grade(const std::string& reply) {
    const std::size_t open = reply.find('{');
    if (open == std::string::npos) throw ParseError("no JSON object in grade reply");
    int depth = 0;
    std::size_t close = std::string::npos;
    for (std::size_t i = open; i < reply.size(); ++i) {
        if (reply[i] == '{') ++depth;
        if (reply[i] == '}') {
            --depth;
            if (depth == 0) {
                close = i;
                break;
            }
        }
    }
    if (close == std::string::npos) throw ParseError("unterminated JSON object in grade reply");
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(reply.substr(open, close - open + 1));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed grade JSON: ") + e.what());
    }
    if (!parsed.contains("binary_correctness")) {
        throw ParseError("grade JSON lacks binary_correctness");
    }
    const auto& field = parsed["binary_correctness"];
    int score;
    if (field.is_number()) {
        score = field.get<double>() >= 0.5 ? 1 : 0;
    } else if (field.is_string()) {
        score = field.get<std::string>() == "1" ? 1 : 0;
    } else {
        throw ParseError("binary_correctness has unsupported type");
    }
    return score;
}

bool parse_yes_no(const std::string& reply) {
    const std::string t = trim(reply);
    std::string token;
    for (char c : t) {
        if (std::isspace(static_cast<unsigned char>(c))) break;
        token.push_back(c);
    }
    while (!token.empty() && std::ispunct(static_cast<unsigned char>(token.back()))) {
        token.pop_back();
    }
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return token == "yes";
}

}  // namespace mabdqa

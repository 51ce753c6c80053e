#include "mabdqa/reasoner.hpp"

#include <algorithm>
#include <unordered_set>

#include "json.hpp"
#include "mabdqa/log.hpp"

namespace mabdqa {

QueryFocusedSubgraph build_query_focused_subgraph(
    const QueryAwareHypergraph& hypergraph, const std::vector<std::string>& top_pages,
    const std::unordered_map<std::string, double>& composite_scores, int cap) {
    if (top_pages.empty()) throw ContractError("subgraph needs at least one seed page");
    QueryFocusedSubgraph out;
    std::unordered_set<std::string> in_members;

    for (const std::string& seed : top_pages) {
        if (static_cast<int>(out.members.size()) >= cap) break;
        if (in_members.insert(seed).second) out.members.push_back(seed);
    }

    std::vector<std::string> expansion;
    std::unordered_set<std::string> seen = in_members;
    for (const std::string& seed : top_pages) {
        for (const std::string& neighbor : hypergraph.neighbors(seed)) {
            if (seen.insert(neighbor).second) expansion.push_back(neighbor);
        }
    }
    auto score = [&](const std::string& id) {
        auto it = composite_scores.find(id);
        return it == composite_scores.end() ? 0.0 : it->second;
    };
    std::stable_sort(expansion.begin(), expansion.end(),
                     [&](const std::string& a, const std::string& b) {
                         if (score(a) != score(b)) return score(a) > score(b);
                         return hypergraph.node_position(a) < hypergraph.node_position(b);
                     });
    for (const std::string& id : expansion) {
        if (static_cast<int>(out.members.size()) >= cap) break;
        in_members.insert(id);
        out.members.push_back(id);
    }

    for (std::size_t i = 0; i < out.members.size(); ++i) {
        for (std::size_t j = i + 1; j < out.members.size(); ++j) {
            const auto& a = out.members[i];
            const auto& b = out.members[j];
            if (hypergraph.graph().has_edge(a, b)) {
                out.induced_edges.emplace_back(std::min(a, b), std::max(a, b),
                                               hypergraph.graph().edge_similarity(a, b));
            }
        }
    }

    for (std::size_t e = 0; e < hypergraph.hyperedges().size(); ++e) {
        const Hyperedge& edge = hypergraph.hyperedges()[e];
        if (std::any_of(out.members.begin(), out.members.end(),
                        [&](const std::string& id) { return edge.contains(id); })) {
            out.hyperedge_indices.push_back(static_cast<int>(e));
        }
    }
    return out;
}

std::string subgraph_digest(const QueryFocusedSubgraph& subgraph,
                            const std::vector<Subquery>& subqueries) {
    std::string out = "pages:";
    for (const std::string& id : subgraph.members) out += " " + id;
    out += "; aspects:";
    for (int e : subgraph.hyperedge_indices) {
        if (e >= 0 && e < static_cast<int>(subqueries.size())) {
            out += " [" + subqueries[e].text + "]";
        }
    }
    if (!subgraph.induced_edges.empty()) {
        out += "; related:";
        for (const auto& [a, b, sim] : subgraph.induced_edges) {
            out += " " + a + "~" + b;
        }
    }
    return out;
}

namespace {

std::string digest_of(const std::string& input) {
    return input.size() <= 96 ? input : input.substr(0, 93) + "...";
}

}  // namespace

AnswerResult answer_question(const std::string& question,
                             const std::vector<std::string>& ranked_pages,
                             const std::vector<PageRef>& page_refs,
                             const QueryAwareHypergraph& hypergraph,
                             const std::vector<Subquery>& subqueries,
                             const std::unordered_map<std::string, double>& composite_scores,
                             const ReasonerParams& params, ChatClient& gateway) {
    if (ranked_pages.empty()) throw ContractError("answer_question: empty ranking");

    std::vector<std::string> top_pages(
        ranked_pages.begin(),
        ranked_pages.begin() + std::min<std::size_t>(ranked_pages.size(),
                                                     static_cast<std::size_t>(params.answer_top_k)));
    std::vector<PageRef> top_refs;
    for (const std::string& id : top_pages) {
        auto it = std::find_if(page_refs.begin(), page_refs.end(),
                               [&](const PageRef& ref) { return ref.page_id == id; });
        top_refs.push_back(it != page_refs.end() ? *it : PageRef{id, "", id});
    }

    AnswerResult result;
    auto record = [&](const char* stage, TemplateId id, const std::string& input,
                      const std::string& output) {
        result.trace.stages.push_back({stage, template_name(id), digest_of(input), output});
    };

    std::string current_question = question;
    std::string answer;
    try {
        const std::string reply = gateway.chat(
            TemplateId::kAnswerQuestion,
            {{"num_images", std::to_string(top_refs.size())}, {"question", current_question}},
            top_refs);
        answer = trim(reply);
        record("initial_answer", TemplateId::kAnswerQuestion, current_question, answer);
    } catch (const GatewayError& e) {
        log_warn(std::string("initial answer failed: ") + e.what());
        result.trace.degraded = true;
        result.trace.final_answer = "";
        result.answer = "";
        return result;
    }

    for (;;) {
        if (answer == kNotAnswerable) break;  // abstentions pass through verbatim
        bool addressed;
        try {
            const std::string reply = gateway.chat(
                TemplateId::kReflectAnswer,
                {{"question", current_question}, {"answer", answer}}, {});
            addressed = parse_yes_no(reply);
            record("answer_reflection", TemplateId::kReflectAnswer, answer, reply);
        } catch (const GatewayError& e) {
            log_warn(std::string("answer reflection failed: ") + e.what());
            result.trace.degraded = true;
            break;
        }
        if (addressed || result.trace.rounds_used >= params.max_rounds) break;

        try {
            const QueryFocusedSubgraph subgraph = build_query_focused_subgraph(
                hypergraph, top_pages, composite_scores, params.subgraph_cap);
            const std::string digest = subgraph_digest(subgraph, subqueries);

            const std::string aspects_line =
                digest.empty() ? "Identify the key concepts and relationships in this question."
                               : "Key aspects to focus on: " + digest;
            const std::string summary = trim(gateway.chat(
                TemplateId::kSummarizeHypergraph,
                {{"question", current_question}, {"aspects_line", aspects_line}}, {}));
            record("hypergraph_summary", TemplateId::kSummarizeHypergraph, digest, summary);

            const std::string rewritten = trim(gateway.chat(
                TemplateId::kRewriteQuestion,
                {{"num_images", std::to_string(top_refs.size())}, {"question", current_question}},
                top_refs));
            record("question_reflection", TemplateId::kRewriteQuestion, current_question,
                   rewritten);
            if (!rewritten.empty()) current_question = rewritten;

            const std::string refined = trim(gateway.chat(
                TemplateId::kRefineAnswer,
                {{"question", current_question},
                 {"initial_answer", answer},
                 {"summary", summary}},
                {}));
            record("refined_answer", TemplateId::kRefineAnswer, answer, refined);
            if (!refined.empty()) answer = refined;
            ++result.trace.rounds_used;
        } catch (const GatewayError& e) {
            log_warn(std::string("refinement round failed: ") + e.what());
            result.trace.degraded = true;
            break;
        }
    }

    result.answer = answer;
    result.trace.final_answer = answer;
    return result;
}

std::string answer_record_json(const std::string& qid, const AnswerResult& result,
                               const std::string& trace_path) {
    nlohmann::ordered_json record;
    record["qid"] = qid;
    record["answer"] = result.answer;
    record["rounds"] = result.trace.rounds_used;
    record["trace_path"] = trace_path;
    return record.dump();
}

}  // namespace mabdqa

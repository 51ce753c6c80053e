#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mabdqa/bandit.hpp"
#include "mabdqa/gateway.hpp"
#include "mabdqa/hypergraph.hpp"

namespace mabdqa {

inline const std::string kNotAnswerable = "Not answerable";

struct ReasoningStage {
    std::string name;
    std::string prompt_id;
    std::string input_digest;
    std::string output;
};

struct ReasoningTrace {
    std::vector<ReasoningStage> stages;
    std::string final_answer;
    int rounds_used = 0;
    bool degraded = false;  // gateway failed mid-pipeline; best answer so far
};

struct QueryFocusedSubgraph {
    std::vector<std::string> members;  // seeds first, then ranked expansion
    std::vector<std::tuple<std::string, std::string, double>> induced_edges;
    std::vector<int> hyperedge_indices;  // 0-based, intersecting the members
};

struct ReasonerParams {
    int max_rounds = 2;
    int subgraph_cap = 12;
    int answer_top_k = 4;
};

// Seeds (the top answer pages) plus their 1-hop pairwise neighbors and
// hyperedge co-members, expansion ranked by composite score, truncated to
// cap with seeds kept first.
QueryFocusedSubgraph build_query_focused_subgraph(
    const QueryAwareHypergraph& hypergraph, const std::vector<std::string>& top_pages,
    const std::unordered_map<std::string, double>& composite_scores, int cap);

// Text digest fed to the summary prompt: members, per-hyperedge subquery
// texts, and the induced edge list.
std::string subgraph_digest(const QueryFocusedSubgraph& subgraph,
                            const std::vector<Subquery>& subqueries);

struct AnswerResult {
    std::string answer;
    ReasoningTrace trace;
};

// Initial answer over the top pages, addressed-check reflection, and on
// failure: subgraph summary, question rewrite, refined answer, repeat.
// An exact "Not answerable" from any answer stage returns immediately.
AnswerResult answer_question(const std::string& question,
                             const std::vector<std::string>& ranked_pages,
                             const std::vector<PageRef>& page_refs,
                             const QueryAwareHypergraph& hypergraph,
                             const std::vector<Subquery>& subqueries,
                             const std::unordered_map<std::string, double>& composite_scores,
                             const ReasonerParams& params, ChatClient& gateway);

// Answer record appended to the results JSONL file.
std::string answer_record_json(const std::string& qid, const AnswerResult& result,
                               const std::string& trace_path);

}  // namespace mabdqa

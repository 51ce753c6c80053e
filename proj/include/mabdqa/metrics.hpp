#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mabdqa/errors.hpp"

namespace mabdqa {

struct EvalRecord {
    std::string qid;
    std::string doc_id;
    std::string question;
    std::string gt_answer;  // may be "Not answerable"
    std::vector<std::string> evidence_pages;
    bool answerable = true;
};

// JSONL, one record per line:
// {"qid":..,"doc_id":..,"question":..,"answer":..,"evidence_pages":[..],"answerable":..}
std::vector<EvalRecord> load_dataset_jsonl(const std::string& path);

inline const std::vector<int> kMetricCutoffs = {1, 3, 5};

double recall_at_k(const std::vector<std::string>& pred, const std::set<std::string>& gt, int k);
double precision_at_k(const std::vector<std::string>& pred, const std::set<std::string>& gt,
                      int k);
// Binary relevance NDCG: gain 2^rel - 1, log2(i+1) discount, ideal over
// min(|gt|, k) relevant items.
double ndcg_at_k(const std::vector<std::string>& pred, const std::set<std::string>& gt, int k);
// Graded variant: relevance read from rel_scores, ideal ranking taken over
// all provided scores sorted descending.
double ndcg_at_k_graded(const std::vector<std::string>& pred,
                        const std::unordered_map<std::string, double>& rel_scores, int k);
// 1-based rank of the first relevant page, 0 when none retrieved.
int first_relevant_rank(const std::vector<std::string>& pred, const std::set<std::string>& gt);
// Mean of 1/rank over queries; rank 0 (miss) contributes 0.
double mrr(const std::vector<int>& first_relevant_ranks);

// True iff some atomic subquery's ranking beats the full question's ranking
// strictly on Recall@5 over the record's evidence pages.
bool detect_issue(const EvalRecord& record, const std::vector<std::string>& atomic_subqueries,
                  const std::function<std::vector<std::string>(const std::string&)>& retriever);

struct QueryResult {
    std::string qid;
    bool failed = false;
    std::string error;
    bool retrieval_scored = false;  // false when evidence is empty (skipped)
    std::map<int, double> recall;
    std::map<int, double> precision;
    std::map<int, double> ndcg;
    int first_relevant = 0;
    bool graded = false;
    int grade = 0;
    bool issue_checked = false;
    bool issue = false;
    std::string answer;
    int rounds = 0;
};

struct MetricsReport {
    int total_queries = 0;
    int evaluated = 0;        // not failed
    int failed = 0;
    int retrieval_scored = 0; // contributed to retrieval aggregates
    int graded = 0;
    int issue_checked = 0;
    std::map<int, double> recall;     // aggregates at K in {1,3,5}
    std::map<int, double> precision;
    std::map<int, double> ndcg;
    double mrr_value = 0.0;
    double accuracy = 0.0;
    double issue_rate = 0.0;
    std::vector<QueryResult> per_query;  // sorted by qid
};

// One benchmarked system behind three closures; keeps this module free of
// pipeline wiring.
struct BenchmarkEngine {
    // question -> (ranked page ids, atomic subquery texts used)
    std::function<std::pair<std::vector<std::string>, std::vector<std::string>>(
        const std::string&)> retrieve;
    // (question, ranking) -> (final answer, reflective rounds used)
    std::function<std::pair<std::string, int>(const std::string&,
                                              const std::vector<std::string>&)> answer;
    // arbitrary query text -> pure-LI ranking (Issue detector)
    std::function<std::vector<std::string>(const std::string&)> rank_by_li;
};

using Grader = std::function<int(const std::string& question, const std::string& predicted,
                                 const std::string& ground_truth)>;

// Per query: retrieve, score at K in {1,3,5}, answer, grade, Issue-check.
// Failures are recorded and excluded from aggregates.
MetricsReport run_benchmark(const std::vector<EvalRecord>& dataset, const BenchmarkEngine& engine,
                            const Grader& grader);

std::string report_to_json(const MetricsReport& report, const std::string& config_echo_json);
std::string report_rows_jsonl(const MetricsReport& report);
std::string report_to_csv(const MetricsReport& report);

}  // namespace mabdqa

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mabdqa/hypergraph.hpp"
#include "mabdqa/rng.hpp"

namespace mabdqa {

// Beta(alpha, beta) posterior of one subquery arm. Starts uniform.
struct ArmState {
    double alpha = 1.0;
    double beta = 1.0;
};

// Posterior mean alpha / (alpha + beta).
double arm_mean(const ArmState& arm);

// Arms aligned with subquery order plus the seeded sampling stream.
struct BanditState {
    std::vector<ArmState> arms;
    Rng rng;

    BanditState(std::size_t arm_count, std::uint64_t seed)
        : arms(arm_count), rng(seed) {}
};

struct JudgeResult {
    int rating = 1;     // 1..5
    double reward = 0;  // (rating - 1) / 4
};

// Linear 1..5 -> [0,1]; out-of-range ratings clamp with a warning.
double map_rating_to_reward(int rating);

struct ArmSample {
    int winner = 0;  // position in the arm vector (subquery index - 1)
    std::vector<double> draws;
};

// One Beta draw per arm in arm order; argmax wins, ties to the lowest index.
ArmSample sample_arms(BanditState& bandit);

// Mean arm_mean over hyperedges containing the page; 0.5 when none does.
double confidence_score(const std::string& page_id, const QueryAwareHypergraph& hypergraph,
                        const BanditState& bandit);

struct RetrievalParams {
    double alpha_mix = 0.8;    // weight of the VLM reward term
    double beta_mix = 0.1;     // weight of the structural term
    double lambda_mix = 0.75;  // degree vs arm-confidence balance
    int budget_m = 20;         // judge evaluations per query
    int output_k = 10;
    std::uint64_t seed = 42;
};

// (1-a)*li_norm + a*s_eff + b*((1-l)*degree_norm + l*s_cb), where s_eff is
// the judge reward when present and the neutral prior 0.5 otherwise.
double composite_score(double li_norm, std::optional<double> vlm_reward, double degree_norm,
                       double s_cb, const RetrievalParams& params);

// Every arm whose hyperedge contains the page moves by
// (alpha, beta) += (reward, 1 - reward).
void update_arms(const std::string& page_id, double reward,
                 const QueryAwareHypergraph& hypergraph, BanditState& bandit);

struct TraceEntry {
    int iter = 0;
    std::vector<double> draws;
    int winner = 0;  // 1-based subquery index
    std::string page;
    int rating = 0;
    std::vector<ArmState> arms;  // snapshot after the update
};

struct RetrievalState {
    std::unordered_set<std::string> visited;
    std::unordered_map<std::string, double> vlm_reward;
    std::unordered_map<std::string, double> composite;
    std::optional<std::string> current_page;
    int evals_used = 0;
    std::vector<TraceEntry> trace;
};

// Rates one page; li_norm feeds the judge prompt's priori bucket.
// A throwing judge degrades to rating 1 with a logged warning.
using JudgeFn = std::function<int(const std::string& page_id, double li_norm)>;

struct RetrievalOutcome {
    std::vector<std::pair<std::string, double>> ranking;  // top output_k
    RetrievalState state;
    std::vector<ArmState> arms;                       // final posteriors
    std::unordered_map<std::string, double> li_norm;  // per-page normalized LI
};

// Thompson-sampling search over the hypergraph under a budget of
// params.budget_m judge evaluations; one evaluation per iteration.
RetrievalOutcome run_retrieval(const QueryAwareHypergraph& hypergraph,
                               const EmbeddingIndex& index,
                               const std::vector<Subquery>& subqueries,
                               const RetrievalParams& params, const JudgeFn& judge);

// The comparison baseline: pages sorted by normalized LI against the whole
// question, ties by insertion order.
std::vector<std::pair<std::string, double>> pure_li_ranking(
    const MultiVectorEmbedding& question_embedding, const EmbeddingIndex& index, int output_k);

std::string trace_to_jsonl(const std::vector<TraceEntry>& trace);
void write_trace_jsonl(const std::vector<TraceEntry>& trace, const std::string& path);

}  // namespace mabdqa

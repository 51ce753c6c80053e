#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mabdqa/bandit.hpp"
#include "mabdqa/gateway.hpp"

namespace mabdqa {

struct SyntheticCorpusSpec {
    int num_pages = 100;
    int dim = 32;
    int num_aspects = 3;
    int distractor_aspects = 1;  // aspects whose matching pages are never evidence
    int vectors_per_page = 12;
    double noise_sigma = 0.08;
    double judge_flip_prob = 0.05;
    std::uint64_t seed = 42;
    int num_queries = 10;

    void validate() const;
};

struct AspectInfo {
    std::string name;
    bool is_distractor = false;
    std::vector<float> concept_vec;  // unit, length dim
};

struct SyntheticQuery {
    std::string qid;
    std::string question;
    std::vector<std::string> atoms;  // informative aspects, the topic, distractors
    std::vector<std::string> evidence_pages;
    int topic_index = 0;
};

struct SyntheticTruth {
    std::vector<AspectInfo> aspects;
    std::vector<std::vector<float>> topic_vecs;  // unit, one per query
    std::vector<SyntheticQuery> queries;
    std::unordered_map<std::string, std::vector<int>> page_aspects;  // labels
    std::unordered_set<std::string> all_pages;
    std::unordered_set<std::string> distractor_atoms;  // atom texts that are distractors
};

struct GeneratedCorpus {
    EmbeddingIndex index;
    SyntheticTruth truth;
};

// Plants per-query evidence pages (attenuated aspect + topic concepts plus
// noise) and distractor pages flooded with near-identical copies of one
// distractor concept, so raw LI inflates on them. Deterministic per seed.
GeneratedCorpus generate_corpus(const SyntheticCorpusSpec& spec);

// Keyed lookup embedder over the generated concept space: aspect names map
// to their concept vectors, question texts to the full query embedding
// (distractor atoms repeated). Unknown inputs fall back to a seeded hash.
class SyntheticEmbedder : public EmbedClient {
public:
    explicit SyntheticEmbedder(const SyntheticTruth& truth, std::uint32_t dim,
                               std::uint64_t seed);
    std::vector<MultiVectorEmbedding> embed(const std::vector<EmbedInput>& batch) override;

private:
    std::unordered_map<std::string, MultiVectorEmbedding> table_;
    std::uint32_t dim_;
    std::uint64_t seed_;
};

// Single rating draw: evidence pages pull from {4,5}, others from {1,2};
// with probability flip_prob the bucket is swapped.
int oracle_rating(bool is_evidence, double flip_prob, Rng& rng);

// JudgeFn-compatible oracle bound to one query's evidence set.
class OracleJudge {
public:
    OracleJudge(const SyntheticTruth& truth, int query_index, double flip_prob,
                std::uint64_t seed);
    int operator()(const std::string& page_id, double li_norm);

private:
    const SyntheticTruth* truth_;
    std::unordered_set<std::string> evidence_;
    double flip_prob_;
    Rng rng_;
};

struct HypergraphParams {
    double theta_g = 0.8;
    int theta_h = 10;
};

struct MethodMetrics {
    std::map<int, double> recall;     // K in {1,3,5}
    std::map<int, double> precision;
    std::map<int, double> ndcg;
    double mrr = 0.0;
};

struct SignTest {
    int wins = 0;    // trials where mab > pure_li
    int losses = 0;  // trials where mab < pure_li
    int ties = 0;
    double p_one_sided = 1.0;  // P(X >= wins | Bin(wins+losses, 1/2))
    double p_two_sided = 1.0;
};

struct ComparisonReport {
    SyntheticCorpusSpec spec;
    RetrievalParams params;
    HypergraphParams graph_params;
    int trials = 0;
    MethodMetrics mab;
    MethodMetrics pure_li;
    std::map<std::string, double> mean_diff;      // metric key -> mab - pure_li
    std::map<std::string, SignTest> sign_tests;   // metric key -> paired test
    double evidence_arm_posterior_mean = 0.0;
    double distractor_arm_posterior_mean = 0.0;
    // Per-trial per-method means, metric key -> values by trial; feeds the
    // sign tests and keeps the report re-checkable.
    std::map<std::string, std::vector<double>> trial_values_mab;
    std::map<std::string, std::vector<double>> trial_values_li;
};

struct CompareOptions {
    RetrievalParams params;
    HypergraphParams graph_params;
    // When false, the MAB method runs with the fallback subquery set
    // (single atom = the whole question); used by the reduction checks.
    bool use_decomposition = true;
};

// Trial t regenerates the corpus with seed spec.seed + t, runs both methods
// on every query with identical budgets, and aggregates paired differences.
ComparisonReport compare_methods(const SyntheticCorpusSpec& spec, int trials,
                                 const CompareOptions& options);

std::string comparison_to_json(const ComparisonReport& report);
std::string comparison_to_csv(const ComparisonReport& report);

// One-sided and two-sided binomial sign-test tails for n fair coin flips.
double binomial_tail_geq(int n, int k);

// TOML spec file mirroring SyntheticCorpusSpec fields.
SyntheticCorpusSpec load_corpus_spec(const std::string& path);

}  // namespace mabdqa

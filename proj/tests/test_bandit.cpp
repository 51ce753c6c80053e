#include "mabdqa/bandit.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"

using namespace mabdqa;

namespace {

MultiVectorEmbedding make(std::initializer_list<std::initializer_list<float>> rows) {
    const std::size_t count = rows.size();
    const std::size_t dim = rows.begin()->size();
    MultiVectorEmbedding e(count, dim);
    std::size_t i = 0;
    for (const auto& row : rows) {
        std::size_t j = 0;
        for (float v : row) e.at(i, j++) = v;
        ++i;
    }
    return e;
}

Hyperedge edge_of(int index, std::vector<std::string> members) {
    Hyperedge e;
    e.subquery_index = index;
    e.members = members;
    e.member_set.insert(members.begin(), members.end());
    return e;
}

// Axis-aligned toy corpus: page i points along axis i.
EmbeddingIndex axis_index(int pages, int dim) {
    EmbeddingIndex index;
    for (int i = 0; i < pages; ++i) {
        MultiVectorEmbedding e(1, dim);
        e.at(0, i % dim) = 1.0f;
        index.add_page({"doc", "p" + std::to_string(i), static_cast<std::uint32_t>(i + 1), "",
                        std::move(e)});
    }
    return index;
}

}  // namespace

TEST_CASE("rating maps linearly onto rewards, clamping out-of-range values") {
    CHECK(map_rating_to_reward(5) == doctest::Approx(1.0));
    CHECK(map_rating_to_reward(1) == doctest::Approx(0.0));
    CHECK(map_rating_to_reward(3) == doctest::Approx(0.5));
    CHECK(map_rating_to_reward(9) == doctest::Approx(1.0));
    CHECK(map_rating_to_reward(-2) == doctest::Approx(0.0));
}

TEST_CASE("arm mean is the Beta posterior mean") {
    CHECK(arm_mean({1, 1}) == doctest::Approx(0.5));
    CHECK(arm_mean({3, 1}) == doctest::Approx(0.75));
    CHECK(arm_mean({1.75, 1.25}) == doctest::Approx(0.5833333333));
}

TEST_CASE("thompson draws pick the dominant arm almost always") {
    BanditState bandit(2, 42);
    bandit.arms[0] = {1000, 1};
    bandit.arms[1] = {1, 1000};
    int wins = 0;
    for (int t = 0; t < 1000; ++t) {
        if (sample_arms(bandit).winner == 0) ++wins;
    }
    CHECK(wins >= 990);
}

TEST_CASE("single arm always wins") {
    BanditState bandit(1, 42);
    for (int t = 0; t < 10; ++t) CHECK(sample_arms(bandit).winner == 0);
    BanditState empty(0, 42);
    CHECK_THROWS_AS(sample_arms(empty), ContractError);
}

TEST_CASE("identical arms sample approximately uniformly") {
    const int arms = 4;
    const int trials = 10000;
    BanditState bandit(arms, 42);
    std::vector<int> counts(arms, 0);
    for (int t = 0; t < trials; ++t) ++counts[sample_arms(bandit).winner];
    const double expected = trials / static_cast<double>(arms);
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 16.27);  // chi-square(3) upper 0.001 quantile
}

TEST_CASE("confidence score averages the containing arms") {
    QueryAwareHypergraph h({"a", "b"},
                           {edge_of(1, {"a"}), edge_of(2, {"a"}), edge_of(3, {"b"})},
                           PageGraph(0.8, {"a", "b"}));
    BanditState bandit(3, 42);
    bandit.arms[0] = {1, 1};    // mean 0.5
    bandit.arms[1] = {9, 1};    // mean 0.9
    bandit.arms[2] = {1, 1};
    CHECK(confidence_score("a", h, bandit) == doctest::Approx(0.7));
    CHECK(confidence_score("b", h, bandit) == doctest::Approx(0.5));
    CHECK(confidence_score("unknown", h, bandit) == doctest::Approx(0.5));
}

TEST_CASE("composite score evaluates the mixture") {
    RetrievalParams params;  // alpha 0.8, beta 0.1, lambda 0.75
    SUBCASE("worked example") {
        CHECK(composite_score(0.6, 1.0, 0.5, 0.7, params) == doctest::Approx(0.985));
    }
    SUBCASE("zero mixing weights reduce to li_norm") {
        RetrievalParams pure = params;
        pure.alpha_mix = 0.0;
        pure.beta_mix = 0.0;
        CHECK(composite_score(0.37, 0.9, 1.0, 1.0, pure) == doctest::Approx(0.37));
    }
    SUBCASE("score can exceed one") {
        CHECK(composite_score(1.0, 1.0, 1.0, 1.0, params) == doctest::Approx(1.1));
    }
    SUBCASE("monotone in every input") {
        const double base = composite_score(0.5, 0.5, 0.5, 0.5, params);
        CHECK(composite_score(0.6, 0.5, 0.5, 0.5, params) >= base);
        CHECK(composite_score(0.5, 0.6, 0.5, 0.5, params) >= base);
        CHECK(composite_score(0.5, 0.5, 0.6, 0.5, params) >= base);
        CHECK(composite_score(0.5, 0.5, 0.5, 0.6, params) >= base);
    }
    SUBCASE("missing reward uses the neutral prior") {
        CHECK(composite_score(0.0, std::nullopt, 0.0, 0.0, params) == doctest::Approx(0.4));
    }
}

TEST_CASE("arm updates move only the containing arms") {
    QueryAwareHypergraph h({"a", "b"}, {edge_of(1, {"a"}), edge_of(2, {"b"})},
                           PageGraph(0.8, {"a", "b"}));
    BanditState bandit(2, 42);
    update_arms("a", 0.75, h, bandit);
    CHECK(bandit.arms[0].alpha == doctest::Approx(1.75));
    CHECK(bandit.arms[0].beta == doctest::Approx(1.25));
    CHECK(bandit.arms[1].alpha == doctest::Approx(1.0));

    update_arms("a", 0.0, h, bandit);
    CHECK(bandit.arms[0].alpha == doctest::Approx(1.75));
    CHECK(bandit.arms[0].beta == doctest::Approx(2.25));

    CHECK_THROWS_AS(update_arms("a", 1.5, h, bandit), ContractError);
}

TEST_CASE("arm parameters satisfy the closed form after any reward sequence") {
    QueryAwareHypergraph h({"a"}, {edge_of(1, {"a"})}, PageGraph(0.8, {"a"}));
    Rng rng(59);
    for (int trial = 0; trial < 50; ++trial) {
        BanditState bandit(1, 42);
        const int n = static_cast<int>(rng.next_u64() % 100);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double reward = (static_cast<int>(rng.next_u64() % 5)) / 4.0;
            update_arms("a", reward, h, bandit);
            sum += reward;
        }
        CHECK(bandit.arms[0].alpha == 1.0 + sum);
        CHECK(bandit.arms[0].beta == 1.0 + n - sum);
    }
    // The spec's fold example: rewards 1, 1, 0.
    BanditState bandit(1, 42);
    for (double r : {1.0, 1.0, 0.0}) update_arms("a", r, h, bandit);
    CHECK(bandit.arms[0].alpha == doctest::Approx(3.0));
    CHECK(bandit.arms[0].beta == doctest::Approx(2.0));
    CHECK(arm_mean(bandit.arms[0]) == doctest::Approx(0.6));
}

TEST_CASE("zero budget skips the judge and ranks by the prior mixture") {
    const EmbeddingIndex index = axis_index(4, 4);
    std::vector<Subquery> subqueries = {
        Subquery{1, "q", make({{1, 0, 0, 0}}), true},
    };
    const QueryAwareHypergraph h = assemble_hypergraph(index, 0.99, subqueries, 2);
    RetrievalParams params;
    params.budget_m = 0;
    int judge_calls = 0;
    const auto outcome = run_retrieval(h, index, subqueries, params,
                                       [&](const std::string&, double) {
                                           ++judge_calls;
                                           return 5;
                                       });
    CHECK(judge_calls == 0);
    CHECK(outcome.state.evals_used == 0);
    CHECK(outcome.state.trace.empty());
    REQUIRE(outcome.ranking.size() == 4);
    CHECK(outcome.ranking.front().first == "p0");  // the only positive-LI page
}

TEST_CASE("the judged relevant page rises to rank one") {
    // One aligned page among nine orthogonal distractors.
    EmbeddingIndex index;
    {
        MultiVectorEmbedding e(1, 12);
        e.at(0, 0) = 1.0f;
        index.add_page({"doc", "relevant", 1, "", std::move(e)});
    }
    for (int i = 1; i < 10; ++i) {
        MultiVectorEmbedding e(1, 12);
        e.at(0, i % 11 + 1) = 0.9f;
        index.add_page({"doc", "noise" + std::to_string(i), static_cast<std::uint32_t>(i + 1),
                        "", std::move(e)});
    }
    std::vector<Subquery> subqueries = {Subquery{1, "q", make({{1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}}), true}};
    const QueryAwareHypergraph h = assemble_hypergraph(index, 0.99, subqueries, 10);
    RetrievalParams params;
    params.budget_m = 5;
    params.seed = 42;
    const auto outcome = run_retrieval(h, index, subqueries, params,
                                       [](const std::string& id, double) {
                                           return id == "relevant" ? 5 : 1;
                                       });
    CHECK(outcome.state.visited.count("relevant") == 1);
    CHECK(outcome.ranking.front().first == "relevant");
    CHECK(outcome.state.evals_used <= 5);
}

TEST_CASE("retrieval never exceeds the evaluation budget") {
    const EmbeddingIndex index = axis_index(6, 6);
    std::vector<Subquery> subqueries = {
        Subquery{1, "a", make({{1, 0, 0, 0, 0, 0}}), false},
        Subquery{2, "q", make({{0, 1, 0, 0, 0, 0}}), true},
    };
    const QueryAwareHypergraph h = assemble_hypergraph(index, 0.5, subqueries, 3);
    for (int m : {0, 1, 3, 17}) {
        RetrievalParams params;
        params.budget_m = m;
        int judge_calls = 0;
        const auto outcome = run_retrieval(h, index, subqueries, params,
                                           [&](const std::string&, double) {
                                               ++judge_calls;
                                               return 3;
                                           });
        CHECK(judge_calls <= m);
        CHECK(outcome.state.evals_used == judge_calls);
        CHECK(static_cast<int>(outcome.state.trace.size()) == judge_calls);
    }
}

TEST_CASE("with zero weights and zero budget the ranking is the pure-LI baseline") {
    Rng rng(61);
    for (int trial = 0; trial < 30; ++trial) {
        EmbeddingIndex index;
        const int pages = 5 + static_cast<int>(rng.next_u64() % 10);
        for (int i = 0; i < pages; ++i) {
            MultiVectorEmbedding e(1 + rng.next_u64() % 4, 6);
            for (std::size_t v = 0; v < e.count(); ++v) {
                for (int j = 0; j < 6; ++j) e.at(v, j) = static_cast<float>(rng.normal());
            }
            index.add_page({"doc", "p" + std::to_string(i), static_cast<std::uint32_t>(i + 1),
                            "", std::move(e)});
        }
        MultiVectorEmbedding question(2, 6);
        for (int v = 0; v < 2; ++v) {
            for (int j = 0; j < 6; ++j) question.at(v, j) = static_cast<float>(rng.normal());
        }
        // The decomposition fallback: the sole atom is the question itself.
        std::vector<Subquery> subqueries = {Subquery{1, "q", question, false},
                                            Subquery{2, "q", question, true}};
        const QueryAwareHypergraph h = assemble_hypergraph(index, 0.8, subqueries, 10);
        RetrievalParams params;
        params.alpha_mix = 0.0;
        params.beta_mix = 0.0;
        params.budget_m = 0;
        params.output_k = pages;
        const auto outcome = run_retrieval(h, index, subqueries, params,
                                           [](const std::string&, double) { return 1; });
        const auto baseline = pure_li_ranking(question, index, pages);
        REQUIRE(outcome.ranking.size() == baseline.size());
        for (std::size_t i = 0; i < baseline.size(); ++i) {
            CHECK(outcome.ranking[i].first == baseline[i].first);
        }
    }
}

TEST_CASE("identical runs produce identical traces and rankings") {
    const EmbeddingIndex index = axis_index(8, 8);
    std::vector<Subquery> subqueries = {
        Subquery{1, "a", make({{1, 0, 0, 0, 0, 0, 0, 0}}), false},
        Subquery{2, "b", make({{0, 1, 0, 0, 0, 0, 0, 0}}), false},
        Subquery{3, "q", make({{1, 1, 0, 0, 0, 0, 0, 0}}), true},
    };
    const QueryAwareHypergraph h = assemble_hypergraph(index, 0.5, subqueries, 4);
    RetrievalParams params;
    params.budget_m = 6;
    const JudgeFn judge = [](const std::string& id, double) {
        return 1 + static_cast<int>(fnv1a(id) % 5);
    };
    const auto first = run_retrieval(h, index, subqueries, params, judge);
    const auto second = run_retrieval(h, index, subqueries, params, judge);
    CHECK(trace_to_jsonl(first.state.trace) == trace_to_jsonl(second.state.trace));
    CHECK(first.ranking == second.ranking);
}

TEST_CASE("a throwing judge degrades to rating one and continues") {
    const EmbeddingIndex index = axis_index(4, 4);
    std::vector<Subquery> subqueries = {Subquery{1, "q", make({{1, 1, 1, 1}}), true}};
    const QueryAwareHypergraph h = assemble_hypergraph(index, 0.99, subqueries, 4);
    RetrievalParams params;
    params.budget_m = 3;
    int calls = 0;
    const auto outcome = run_retrieval(h, index, subqueries, params,
                                       [&](const std::string&, double) -> int {
                                           if (++calls == 1) throw GatewayError("flaky", true);
                                           return 4;
                                       });
    CHECK(outcome.state.evals_used == 3);
    CHECK(outcome.state.trace[0].rating == 1);
    CHECK(outcome.state.trace[1].rating == 4);
}

TEST_CASE("thompson sampling identifies the better arm") {
    // Two arms, Bernoulli-like oracle rewards 0.9 vs 0.1.
    BanditState bandit(2, 42);
    Rng reward_rng(42);
    const double p[2] = {0.9, 0.1};
    int late_wins = 0;
    for (int round = 0; round < 1000; ++round) {
        const ArmSample sample = sample_arms(bandit);
        const double reward = reward_rng.bernoulli(p[sample.winner]) ? 1.0 : 0.0;
        bandit.arms[sample.winner].alpha += reward;
        bandit.arms[sample.winner].beta += 1.0 - reward;
        if (round >= 900 && sample.winner == 0) ++late_wins;
    }
    CHECK(late_wins >= 80);
}

TEST_CASE("an arm fed only distractors collapses while the evidence arm rises") {
    // Two atoms with disjoint hyperedges; arm 1's pages are never evidence.
    double distractor_mean_sum = 0.0;
    double evidence_mean_sum = 0.0;
    for (int seed = 0; seed < 50; ++seed) {
        EmbeddingIndex index;
        for (int i = 0; i < 6; ++i) {
            MultiVectorEmbedding e(1, 4);
            e.at(0, i < 3 ? 0 : 1) = 1.0f + 0.01f * i;
            index.add_page({"doc", (i < 3 ? "ev" : "dis") + std::to_string(i),
                            static_cast<std::uint32_t>(i + 1), "", std::move(e)});
        }
        std::vector<Subquery> subqueries = {
            Subquery{1, "evidence-aspect", make({{1, 0, 0, 0}}), false},
            Subquery{2, "distractor-aspect", make({{0, 1, 0, 0}}), false},
            Subquery{3, "q", make({{1, 0, 0, 0}, {0, 1, 0, 0}}), true},
        };
        const QueryAwareHypergraph h = assemble_hypergraph(index, 0.99, subqueries, 3);
        RetrievalParams params;
        params.budget_m = 20;
        params.seed = 42 + static_cast<std::uint64_t>(seed);
        Rng judge_rng(1000 + seed);
        const auto outcome = run_retrieval(
            h, index, subqueries, params, [&](const std::string& id, double) {
                const bool evidence = id.rfind("ev", 0) == 0;
                return evidence ? (4 + static_cast<int>(judge_rng.next_u64() % 2))
                                : (1 + static_cast<int>(judge_rng.next_u64() % 2));
            });
        evidence_mean_sum += arm_mean(outcome.arms[0]);
        distractor_mean_sum += arm_mean(outcome.arms[1]);
    }
    CHECK(evidence_mean_sum / 50.0 > 0.65);
    CHECK(distractor_mean_sum / 50.0 < 0.35);
}

TEST_CASE("trace lines carry the documented fields") {
    const EmbeddingIndex index = axis_index(3, 3);
    std::vector<Subquery> subqueries = {Subquery{1, "q", make({{1, 1, 1}}), true}};
    const QueryAwareHypergraph h = assemble_hypergraph(index, 0.99, subqueries, 3);
    RetrievalParams params;
    params.budget_m = 2;
    const auto outcome = run_retrieval(h, index, subqueries, params,
                                       [](const std::string&, double) { return 3; });
    const std::string jsonl = trace_to_jsonl(outcome.state.trace);
    CHECK(jsonl.find("\"iter\":1") != std::string::npos);
    CHECK(jsonl.find("\"draws\":[") != std::string::npos);
    CHECK(jsonl.find("\"winner\":1") != std::string::npos);
    CHECK(jsonl.find("\"rating\":3") != std::string::npos);
    CHECK(jsonl.find("\"arms\":[[") != std::string::npos);
}

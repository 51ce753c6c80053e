#include "mabdqa/bandit.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "mabdqa/log.hpp"

namespace mabdqa {

double arm_mean(const ArmState& arm) {
    return arm.alpha / (arm.alpha + arm.beta);
}

double map_rating_to_reward(int rating) {
    if (rating < 1 || rating > 5) {
        log_warn("judge rating " + std::to_string(rating) + " outside 1..5, clamping");
        rating = std::clamp(rating, 1, 5);
    }
    return (rating - 1) / 4.0;
}

ArmSample sample_arms(BanditState& bandit) {
    if (bandit.arms.empty()) throw ContractError("sample_arms: no arms");
    ArmSample sample;
    sample.draws.reserve(bandit.arms.size());
    for (const ArmState& arm : bandit.arms) {
        sample.draws.push_back(bandit.rng.beta(arm.alpha, arm.beta));
    }
    sample.winner = static_cast<int>(
        std::max_element(sample.draws.begin(), sample.draws.end()) - sample.draws.begin());
    return sample;
}

double confidence_score(const std::string& page_id, const QueryAwareHypergraph& hypergraph,
                        const BanditState& bandit) {
    const std::vector<int>& arms = hypergraph.arms_of(page_id);
    if (arms.empty()) return 0.5;  // neutral prior for hyperedge-less pages
    double total = 0.0;
    for (int arm : arms) total += arm_mean(bandit.arms[arm]);
    return total / static_cast<double>(arms.size());
}

double composite_score(double li_norm, std::optional<double> vlm_reward, double degree_norm,
                       double s_cb, const RetrievalParams& params) {
    const double s_eff = vlm_reward.value_or(0.5);
    return (1.0 - params.alpha_mix) * li_norm + params.alpha_mix * s_eff +
           params.beta_mix * ((1.0 - params.lambda_mix) * degree_norm + params.lambda_mix * s_cb);
}

void update_arms(const std::string& page_id, double reward,
                 const QueryAwareHypergraph& hypergraph, BanditState& bandit) {
    if (reward < 0.0 || reward > 1.0) throw ContractError("reward must lie in [0,1]");
    for (int arm : hypergraph.arms_of(page_id)) {
        bandit.arms[arm].alpha += reward;
        bandit.arms[arm].beta += 1.0 - reward;
    }
}

namespace {

struct PageScores {
    std::vector<double> li_norm;      // by node position
    std::vector<double> degree_norm;  // by node position
};

PageScores init_page_scores(const QueryAwareHypergraph& hypergraph, const EmbeddingIndex& index,
                            const std::vector<Subquery>& subqueries) {
    PageScores scores;
    const std::size_t n = index.size();
    std::vector<double> li_raw(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (const Subquery& q : subqueries) {
            best = std::max(best, late_interaction(q.embedding, index.page(i).embedding));
        }
        li_raw[i] = best;
    }
    const double top = n ? *std::max_element(li_raw.begin(), li_raw.end()) : 0.0;
    scores.li_norm.resize(n, 0.0);
    if (top > 0.0) {
        // Division by the per-query max keeps the full ordering; the best
        // page lands exactly at 1. Negative raw scores stay negative.
        for (std::size_t i = 0; i < n; ++i) scores.li_norm[i] = li_raw[i] / top;
    }
    const int max_degree = std::max(1, hypergraph.max_degree());
    scores.degree_norm.resize(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        scores.degree_norm[i] =
            hypergraph.degree(index.page(i).page_id) / static_cast<double>(max_degree);
    }
    return scores;
}

}  // namespace

RetrievalOutcome run_retrieval(const QueryAwareHypergraph& hypergraph,
                               const EmbeddingIndex& index,
                               const std::vector<Subquery>& subqueries,
                               const RetrievalParams& params, const JudgeFn& judge) {
    if (subqueries.empty()) throw ContractError("run_retrieval: no subqueries");
    if (subqueries.size() != hypergraph.hyperedges().size()) {
        throw ContractError("run_retrieval: subquery/hyperedge count mismatch");
    }
    const std::size_t n = index.size();
    const PageScores scores = init_page_scores(hypergraph, index, subqueries);

    BanditState bandit(subqueries.size(), params.seed);
    RetrievalState state;

    auto score_of = [&](std::size_t pos) {
        const std::string& id = index.page(pos).page_id;
        auto it = state.vlm_reward.find(id);
        std::optional<double> reward;
        if (it != state.vlm_reward.end()) reward = it->second;
        return composite_score(scores.li_norm[pos], reward, scores.degree_norm[pos],
                               confidence_score(id, hypergraph, bandit), params);
    };

    std::vector<double> composite(n);
    for (std::size_t i = 0; i < n; ++i) composite[i] = score_of(i);

    auto pick_pool = [&](bool use_current) {
        std::vector<std::size_t> pool;
        if (use_current && state.current_page) {
            for (const std::string& id : hypergraph.neighbors(*state.current_page)) {
                if (!state.visited.count(id)) {
                    pool.push_back(static_cast<std::size_t>(index.position(id)));
                }
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                if (!state.visited.count(index.page(i).page_id)) pool.push_back(i);
            }
        }
        return pool;
    };

    while (state.evals_used < params.budget_m) {
        const ArmSample sample = sample_arms(bandit);
        const Hyperedge& winner_edge = hypergraph.hyperedges()[sample.winner];

        auto restrict_to_winner = [&](std::vector<std::size_t> pool) {
            std::vector<std::size_t> guided;
            for (std::size_t pos : pool) {
                if (winner_edge.contains(index.page(pos).page_id)) guided.push_back(pos);
            }
            return guided.empty() ? pool : guided;
        };

        std::vector<std::size_t> pool = restrict_to_winner(pick_pool(true));
        if (pool.empty()) {
            state.current_page.reset();
            pool = restrict_to_winner(pick_pool(false));
        }
        if (pool.empty()) break;  // every page visited

        std::size_t best = pool.front();
        for (std::size_t pos : pool) {
            if (composite[pos] > composite[best]) best = pos;  // ties keep lowest position
        }
        const std::string& page_id = index.page(best).page_id;

        int rating;
        try {
            rating = judge(page_id, scores.li_norm[best]);
        } catch (const std::exception& e) {
            log_warn("judge failed on " + page_id + " (" + e.what() + "), degrading to rating 1");
            rating = 1;
        }
        const double reward = map_rating_to_reward(rating);

        state.visited.insert(page_id);
        state.vlm_reward[page_id] = reward;
        state.current_page = page_id;
        ++state.evals_used;
        update_arms(page_id, reward, hypergraph, bandit);

        // Refresh the evaluated page and every page sharing an arm with it;
        // nothing else changed.
        composite[best] = score_of(best);
        for (int arm : hypergraph.arms_of(page_id)) {
            for (const std::string& member : hypergraph.hyperedges()[arm].members) {
                const int pos = index.position(member);
                if (pos >= 0) composite[static_cast<std::size_t>(pos)] = score_of(pos);
            }
        }

        TraceEntry entry;
        entry.iter = state.evals_used;
        entry.draws = sample.draws;
        entry.winner = sample.winner + 1;
        entry.page = page_id;
        entry.rating = std::clamp(rating, 1, 5);
        entry.arms = bandit.arms;
        state.trace.push_back(std::move(entry));
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return composite[a] > composite[b];
    });

    RetrievalOutcome outcome;
    const std::size_t keep = std::min<std::size_t>(n, static_cast<std::size_t>(
                                                          std::max(0, params.output_k)));
    for (std::size_t i = 0; i < keep; ++i) {
        outcome.ranking.emplace_back(index.page(order[i]).page_id, composite[order[i]]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        outcome.li_norm[index.page(i).page_id] = scores.li_norm[i];
        state.composite[index.page(i).page_id] = composite[i];
    }
    outcome.arms = bandit.arms;
    outcome.state = std::move(state);
    return outcome;
}

std::vector<std::pair<std::string, double>> pure_li_ranking(
    const MultiVectorEmbedding& question_embedding, const EmbeddingIndex& index, int output_k) {
    const std::size_t n = index.size();
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = normalized_li(question_embedding, index.page(i).embedding);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::pair<std::string, double>> out;
    const std::size_t keep = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(0, output_k)));
    for (std::size_t i = 0; i < keep; ++i) {
        out.emplace_back(index.page(order[i]).page_id, scores[order[i]]);
    }
    return out;
}

std::string trace_to_jsonl(const std::vector<TraceEntry>& trace) {
    std::string out;
    for (const TraceEntry& entry : trace) {
        nlohmann::ordered_json line;
        line["iter"] = entry.iter;
        line["draws"] = entry.draws;
        line["winner"] = entry.winner;
        line["page"] = entry.page;
        line["rating"] = entry.rating;
        nlohmann::ordered_json arms = nlohmann::ordered_json::array();
        for (const ArmState& arm : entry.arms) {
            arms.push_back(nlohmann::ordered_json::array({arm.alpha, arm.beta}));
        }
        line["arms"] = arms;
        out += line.dump();
        out += "\n";
    }
    return out;
}

void write_trace_jsonl(const std::vector<TraceEntry>& trace, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open trace for writing: " + path);
    out << trace_to_jsonl(trace);
    if (!out) throw IoError("trace write failed: " + path);
}

}  // namespace mabdqa

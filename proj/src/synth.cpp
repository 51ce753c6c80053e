#include "mabdqa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mabdqa/config.hpp"
#include "mabdqa/log.hpp"
#include "mabdqa/metrics.hpp"

namespace mabdqa {

using nlohmann::json;

namespace {

// Fig. 1-style scenario constants: the "high-frequency term" appears twice in
// the query's token stream, and evidence matches are attenuated per page.
constexpr int kDistractorQueryRepeat = 2;
constexpr double kEvidenceGammaLo = 0.55;
constexpr double kEvidenceGammaHi = 0.95;
constexpr double kBackgroundScale = 0.6;

std::vector<float> unit_normal_vec(Rng& rng, int dim) {
    std::vector<float> v(dim);
    double norm_sq = 0.0;
    for (int j = 0; j < dim; ++j) {
        const double x = rng.normal();
        v[j] = static_cast<float>(x);
        norm_sq += x * x;
    }
    if (norm_sq > 0.0) {
        const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
        for (float& x : v) x *= inv;
    }
    return v;
}

void add_row(MultiVectorEmbedding& e, std::size_t row, const std::vector<float>& base,
             double scale, double sigma, Rng& rng) {
    for (std::size_t j = 0; j < e.dim(); ++j) {
        e.at(row, j) = static_cast<float>(scale * base[j] + sigma * rng.normal());
    }
}

std::string page_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "page_%03d", i);
    return buf;
}

}  // namespace

void SyntheticCorpusSpec::validate() const {
    if (num_pages < 1) throw ContractError("num_pages must be >= 1");
    if (dim < 2) throw ContractError("dim must be >= 2");
    if (num_aspects < 1) throw ContractError("num_aspects must be >= 1");
    if (distractor_aspects < 0 || distractor_aspects >= num_aspects) {
        throw ContractError("distractor_aspects must satisfy 0 <= d < num_aspects");
    }
    if (num_pages < num_aspects) throw ContractError("num_pages must be >= num_aspects");
    if (vectors_per_page < 1) throw ContractError("vectors_per_page must be >= 1");
    if (judge_flip_prob < 0.0 || judge_flip_prob >= 1.0) {
        throw ContractError("judge_flip_prob must lie in [0, 1)");
    }
    if (noise_sigma < 0.0) throw ContractError("noise_sigma must be >= 0");
    if (num_queries < 1) throw ContractError("num_queries must be >= 1");
}

GeneratedCorpus generate_corpus(const SyntheticCorpusSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    GeneratedCorpus out;
    SyntheticTruth& truth = out.truth;

    const int informative = spec.num_aspects - spec.distractor_aspects;
    for (int a = 0; a < spec.num_aspects; ++a) {
        AspectInfo aspect;
        aspect.is_distractor = a >= informative;
        aspect.name = aspect.is_distractor ? "buzzword_" + std::to_string(a - informative)
                                           : "aspect_" + std::to_string(a);
        aspect.concept_vec = unit_normal_vec(rng, spec.dim);
        if (aspect.is_distractor) truth.distractor_atoms.insert(aspect.name);
        truth.aspects.push_back(std::move(aspect));
    }

    // Page budget: distractor pages first (when any distractor aspect
    // exists), then per-query evidence, background fills the rest.
    int distractor_total = 0;
    if (spec.distractor_aspects > 0) {
        distractor_total = std::max(spec.distractor_aspects, spec.num_pages * 15 / 100);
        distractor_total = std::min(distractor_total, spec.num_pages - 1);
    }
    int num_queries = std::min(spec.num_queries, spec.num_pages - distractor_total);
    num_queries = std::max(num_queries, 1);
    distractor_total = std::min(distractor_total, spec.num_pages - num_queries);

    std::vector<int> evidence_counts(num_queries);
    int remaining = spec.num_pages - distractor_total;
    for (int q = 0; q < num_queries; ++q) {
        evidence_counts[q] = std::min(2 + (q % 2), remaining - (num_queries - q - 1));
        evidence_counts[q] = std::max(evidence_counts[q], 1);
        remaining -= evidence_counts[q];
    }
    const int background_total = remaining;

    for (int q = 0; q < num_queries; ++q) {
        truth.topic_vecs.push_back(unit_normal_vec(rng, spec.dim));
    }

    struct Blueprint {
        enum Kind { kEvidence, kDistractor, kBackground } kind;
        int owner = 0;  // query index or distractor aspect index
    };
    std::vector<Blueprint> blueprints;
    for (int q = 0; q < num_queries; ++q) {
        for (int e = 0; e < evidence_counts[q]; ++e) {
            blueprints.push_back({Blueprint::kEvidence, q});
        }
    }
    for (int d = 0; d < distractor_total; ++d) {
        blueprints.push_back({Blueprint::kDistractor, informative + (d % spec.distractor_aspects)});
    }
    for (int b = 0; b < background_total; ++b) blueprints.push_back({Blueprint::kBackground, 0});

    // Deterministic shuffle so page kind does not correlate with insertion
    // order (tie-breaks fall back to position).
    for (std::size_t i = blueprints.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(blueprints[i - 1], blueprints[j]);
    }

    out.index.set_dim(static_cast<std::uint32_t>(spec.dim));
    std::vector<std::vector<std::string>> evidence_of(num_queries);
    for (int i = 0; i < spec.num_pages; ++i) {
        const Blueprint& bp = blueprints[static_cast<std::size_t>(i)];
        PageRecord page;
        page.doc_id = "synth";
        page.page_id = page_name(i);
        page.page_number = static_cast<std::uint32_t>(i + 1);
        MultiVectorEmbedding e(static_cast<std::size_t>(spec.vectors_per_page), spec.dim);
        truth.all_pages.insert(page.page_id);

        if (bp.kind == Blueprint::kEvidence) {
            const double gamma =
                kEvidenceGammaLo + (kEvidenceGammaHi - kEvidenceGammaLo) * rng.uniform();
            std::size_t row = 0;
            for (int a = 0; a < informative && row < e.count(); ++a) {
                add_row(e, row++, truth.aspects[a].concept_vec, gamma, spec.noise_sigma, rng);
                truth.page_aspects[page.page_id].push_back(a);
            }
            if (row < e.count()) {
                add_row(e, row++, truth.topic_vecs[bp.owner], gamma, spec.noise_sigma, rng);
            }
            for (; row < e.count(); ++row) {
                add_row(e, row, unit_normal_vec(rng, spec.dim), kBackgroundScale, 0.0, rng);
            }
            evidence_of[bp.owner].push_back(page.page_id);
        } else if (bp.kind == Blueprint::kDistractor) {
            for (std::size_t row = 0; row < e.count(); ++row) {
                add_row(e, row, truth.aspects[bp.owner].concept_vec, 1.0, spec.noise_sigma, rng);
            }
            truth.page_aspects[page.page_id].push_back(bp.owner);
        } else {
            for (std::size_t row = 0; row < e.count(); ++row) {
                add_row(e, row, unit_normal_vec(rng, spec.dim), kBackgroundScale, 0.0, rng);
            }
        }
        page.embedding = std::move(e);
        out.index.add_page(std::move(page));
    }

    for (int q = 0; q < num_queries; ++q) {
        SyntheticQuery query;
        query.qid = "synthq_" + std::to_string(q);
        query.topic_index = q;
        std::string aspect_list;
        for (int a = 0; a < informative; ++a) {
            query.atoms.push_back(truth.aspects[a].name);
            if (!aspect_list.empty()) aspect_list += " and ";
            aspect_list += truth.aspects[a].name;
        }
        query.atoms.push_back("topic_" + std::to_string(q));
        std::string buzz_list;
        for (int a = informative; a < spec.num_aspects; ++a) {
            query.atoms.push_back(truth.aspects[a].name);
            if (!buzz_list.empty()) buzz_list += " ";
            buzz_list += truth.aspects[a].name;
        }
        query.question = "In the " + buzz_list + " report on topic_" + std::to_string(q) +
                         ", what is stated about " + aspect_list + "?";
        if (buzz_list.empty()) {
            query.question = "In the report on topic_" + std::to_string(q) +
                             ", what is stated about " + aspect_list + "?";
        }
        query.evidence_pages = evidence_of[q];
        truth.queries.push_back(std::move(query));
    }
    return out;
}

SyntheticEmbedder::SyntheticEmbedder(const SyntheticTruth& truth, std::uint32_t dim,
                                     std::uint64_t seed)
    : dim_(dim), seed_(seed) {
    auto single = [&](const std::vector<float>& vec) {
        MultiVectorEmbedding e(1, dim_);
        for (std::size_t j = 0; j < dim_; ++j) e.at(0, j) = vec[j];
        return e;
    };
    for (const AspectInfo& aspect : truth.aspects) {
        table_.emplace(aspect.name, single(aspect.concept_vec));
    }
    for (std::size_t q = 0; q < truth.topic_vecs.size(); ++q) {
        table_.emplace("topic_" + std::to_string(q), single(truth.topic_vecs[q]));
    }
    for (const SyntheticQuery& query : truth.queries) {
        std::size_t row_count = 0;
        for (const std::string& atom : query.atoms) {
            row_count += truth.distractor_atoms.count(atom) ? kDistractorQueryRepeat : 1;
        }
        MultiVectorEmbedding full(row_count, dim_);
        std::size_t row = 0;
        for (const std::string& atom : query.atoms) {
            const MultiVectorEmbedding& atom_vec = table_.at(atom);
            const int repeat = truth.distractor_atoms.count(atom) ? kDistractorQueryRepeat : 1;
            for (int r = 0; r < repeat; ++r, ++row) {
                for (std::size_t j = 0; j < dim_; ++j) full.at(row, j) = atom_vec.at(0, j);
            }
        }
        table_.emplace(query.question, std::move(full));
    }
}

std::vector<MultiVectorEmbedding> SyntheticEmbedder::embed(const std::vector<EmbedInput>& batch) {
    if (batch.empty()) throw ContractError("embed: empty batch");
    std::vector<MultiVectorEmbedding> out;
    out.reserve(batch.size());
    for (const EmbedInput& input : batch) {
        const std::string& key = input.text.empty() ? input.image_path : input.text;
        auto it = table_.find(key);
        if (it != table_.end()) {
            out.push_back(it->second);
            continue;
        }
        log_warn("synthetic embedder fallback for unknown text: " + key);
        Rng rng(seed_ ^ fnv1a(key));
        MultiVectorEmbedding e(1, dim_);
        const auto vec = unit_normal_vec(rng, static_cast<int>(dim_));
        for (std::size_t j = 0; j < dim_; ++j) e.at(0, j) = vec[j];
        out.push_back(std::move(e));
    }
    return out;
}

int oracle_rating(bool is_evidence, double flip_prob, Rng& rng) {
    const bool flip = rng.bernoulli(flip_prob);
    const bool high_bucket = is_evidence != flip;
    return high_bucket ? rng.uniform_int(4, 5) : rng.uniform_int(1, 2);
}

OracleJudge::OracleJudge(const SyntheticTruth& truth, int query_index, double flip_prob,
                         std::uint64_t seed)
    : truth_(&truth), flip_prob_(flip_prob), rng_(seed) {
    const SyntheticQuery& query = truth.queries.at(static_cast<std::size_t>(query_index));
    evidence_.insert(query.evidence_pages.begin(), query.evidence_pages.end());
}

int OracleJudge::operator()(const std::string& page_id, double /*li_norm*/) {
    if (!truth_->all_pages.count(page_id)) {
        throw ContractError("oracle_judge: unknown page " + page_id);
    }
    return oracle_rating(evidence_.count(page_id) > 0, flip_prob_, rng_);
}

double binomial_tail_geq(int n, int k) {
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    double tail = 0.0;
    for (int i = k; i <= n; ++i) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                                std::lgamma(n - i + 1.0) - n * std::log(2.0);
        tail += std::exp(log_term);
    }
    return std::min(tail, 1.0);
}

namespace {

const std::vector<std::string> kMetricKeys = {
    "recall@1",  "recall@3",  "recall@5",  "precision@1", "precision@3",
    "precision@5", "ndcg@1", "ndcg@3",   "ndcg@5",      "mrr",
};

std::map<std::string, double> metrics_for_ranking(const std::vector<std::string>& ranking,
                                                  const std::set<std::string>& gt) {
    std::map<std::string, double> out;
    for (int k : kMetricCutoffs) {
        out["recall@" + std::to_string(k)] = recall_at_k(ranking, gt, k);
        out["precision@" + std::to_string(k)] = precision_at_k(ranking, gt, k);
        out["ndcg@" + std::to_string(k)] = ndcg_at_k(ranking, gt, k);
    }
    const int rank = first_relevant_rank(ranking, gt);
    out["mrr"] = rank > 0 ? 1.0 / rank : 0.0;
    return out;
}

MethodMetrics summarize(const std::map<std::string, std::vector<double>>& trial_values) {
    MethodMetrics metrics;
    auto mean_of = [&](const std::string& key) {
        const auto& values = trial_values.at(key);
        return values.empty()
                   ? 0.0
                   : std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    };
    for (int k : kMetricCutoffs) {
        metrics.recall[k] = mean_of("recall@" + std::to_string(k));
        metrics.precision[k] = mean_of("precision@" + std::to_string(k));
        metrics.ndcg[k] = mean_of("ndcg@" + std::to_string(k));
    }
    metrics.mrr = mean_of("mrr");
    return metrics;
}

}  // namespace

ComparisonReport compare_methods(const SyntheticCorpusSpec& spec, int trials,
                                 const CompareOptions& options) {
    if (trials < 1) throw ContractError("compare_methods: trials must be >= 1");
    ComparisonReport report;
    report.spec = spec;
    report.params = options.params;
    report.graph_params = options.graph_params;
    report.trials = trials;
    for (const std::string& key : kMetricKeys) {
        report.trial_values_mab[key] = {};
        report.trial_values_li[key] = {};
    }

    double evidence_posterior_sum = 0.0;
    double distractor_posterior_sum = 0.0;
    long evidence_posterior_n = 0;
    long distractor_posterior_n = 0;

    for (int t = 0; t < trials; ++t) {
        SyntheticCorpusSpec trial_spec = spec;
        trial_spec.seed = spec.seed + static_cast<std::uint64_t>(t);
        const GeneratedCorpus corpus = generate_corpus(trial_spec);
        SyntheticEmbedder embedder(corpus.truth, static_cast<std::uint32_t>(trial_spec.dim),
                                   trial_spec.seed);
        const PageGraph graph = build_page_graph(corpus.index, options.graph_params.theta_g);

        std::map<std::string, double> mab_sums, li_sums;
        for (const std::string& key : kMetricKeys) {
            mab_sums[key] = 0.0;
            li_sums[key] = 0.0;
        }

        for (std::size_t q = 0; q < corpus.truth.queries.size(); ++q) {
            const SyntheticQuery& query = corpus.truth.queries[q];
            const std::set<std::string> gt(query.evidence_pages.begin(),
                                           query.evidence_pages.end());
            if (gt.empty()) continue;

            const std::vector<std::string> atoms =
                options.use_decomposition ? query.atoms
                                          : std::vector<std::string>{query.question};
            const auto subqueries = build_subquery_set(query.question, atoms, embedder);
            const auto hypergraph = assemble_hypergraph(corpus.index, graph, subqueries,
                                                        options.graph_params.theta_h);
            RetrievalParams params = options.params;
            params.seed = options.params.seed + trial_spec.seed * 1000 + q;
            OracleJudge judge(corpus.truth, static_cast<int>(q), trial_spec.judge_flip_prob,
                              trial_spec.seed ^ fnv1a(query.qid));
            const RetrievalOutcome outcome = run_retrieval(
                hypergraph, corpus.index, subqueries, params,
                [&judge](const std::string& id, double li) { return judge(id, li); });

            std::vector<std::string> mab_ranking;
            for (const auto& [id, score] : outcome.ranking) mab_ranking.push_back(id);
            for (const auto& [key, value] : metrics_for_ranking(mab_ranking, gt)) {
                mab_sums[key] += value;
            }

            const auto question_embedding = embedder.embed({{query.question, ""}}).front();
            const auto li_pairs =
                pure_li_ranking(question_embedding, corpus.index, options.params.output_k);
            std::vector<std::string> li_ids;
            for (const auto& [id, score] : li_pairs) li_ids.push_back(id);
            for (const auto& [key, value] : metrics_for_ranking(li_ids, gt)) {
                li_sums[key] += value;
            }

            // Final posterior means by arm kind; the global arm is mixed by
            // construction, so it joins neither side.
            for (std::size_t j = 0; j + 1 < subqueries.size(); ++j) {
                const double mean = arm_mean(outcome.arms[j]);
                if (corpus.truth.distractor_atoms.count(subqueries[j].text)) {
                    distractor_posterior_sum += mean;
                    ++distractor_posterior_n;
                } else {
                    evidence_posterior_sum += mean;
                    ++evidence_posterior_n;
                }
            }
        }

        const double n_queries = static_cast<double>(corpus.truth.queries.size());
        for (const std::string& key : kMetricKeys) {
            report.trial_values_mab[key].push_back(mab_sums[key] / n_queries);
            report.trial_values_li[key].push_back(li_sums[key] / n_queries);
        }
    }

    report.mab = summarize(report.trial_values_mab);
    report.pure_li = summarize(report.trial_values_li);
    for (const std::string& key : kMetricKeys) {
        SignTest test;
        double diff_sum = 0.0;
        for (int t = 0; t < trials; ++t) {
            const double diff = report.trial_values_mab[key][t] - report.trial_values_li[key][t];
            diff_sum += diff;
            if (diff > 0) ++test.wins;
            else if (diff < 0) ++test.losses;
            else ++test.ties;
        }
        const int n = test.wins + test.losses;
        test.p_one_sided = binomial_tail_geq(n, test.wins);
        const double other = binomial_tail_geq(n, test.losses);
        test.p_two_sided = std::min(1.0, 2.0 * std::min(test.p_one_sided, other));
        report.mean_diff[key] = diff_sum / trials;
        report.sign_tests[key] = test;
    }
    if (evidence_posterior_n > 0) {
        report.evidence_arm_posterior_mean = evidence_posterior_sum / evidence_posterior_n;
    }
    if (distractor_posterior_n > 0) {
        report.distractor_arm_posterior_mean = distractor_posterior_sum / distractor_posterior_n;
    }
    return report;
}

std::string comparison_to_json(const ComparisonReport& report) {
    nlohmann::ordered_json out;
    out["spec"] = {
        {"num_pages", report.spec.num_pages},
        {"dim", report.spec.dim},
        {"num_aspects", report.spec.num_aspects},
        {"distractor_aspects", report.spec.distractor_aspects},
        {"vectors_per_page", report.spec.vectors_per_page},
        {"noise_sigma", report.spec.noise_sigma},
        {"judge_flip_prob", report.spec.judge_flip_prob},
        {"seed", report.spec.seed},
        {"num_queries", report.spec.num_queries},
    };
    out["params"] = {
        {"alpha", report.params.alpha_mix},
        {"beta", report.params.beta_mix},
        {"lambda", report.params.lambda_mix},
        {"m", report.params.budget_m},
        {"output_k", report.params.output_k},
        {"seed", report.params.seed},
        {"theta_g", report.graph_params.theta_g},
        {"theta_h", report.graph_params.theta_h},
    };
    out["trials"] = report.trials;
    auto method_json = [](const MethodMetrics& m) {
        nlohmann::ordered_json j;
        for (int k : kMetricCutoffs) {
            j["recall@" + std::to_string(k)] = m.recall.at(k);
            j["precision@" + std::to_string(k)] = m.precision.at(k);
            j["ndcg@" + std::to_string(k)] = m.ndcg.at(k);
        }
        j["mrr"] = m.mrr;
        return j;
    };
    out["mab"] = method_json(report.mab);
    out["pure_li"] = method_json(report.pure_li);
    nlohmann::ordered_json diffs;
    for (const auto& [key, value] : report.mean_diff) diffs[key] = value;
    out["mean_diff"] = diffs;
    nlohmann::ordered_json tests;
    for (const auto& [key, test] : report.sign_tests) {
        tests[key] = {{"wins", test.wins},
                      {"losses", test.losses},
                      {"ties", test.ties},
                      {"p_one_sided", test.p_one_sided},
                      {"p_two_sided", test.p_two_sided}};
    }
    out["sign_tests"] = tests;
    out["evidence_arm_posterior_mean"] = report.evidence_arm_posterior_mean;
    out["distractor_arm_posterior_mean"] = report.distractor_arm_posterior_mean;
    return out.dump(2);
}

SyntheticCorpusSpec load_corpus_spec(const std::string& path) {
    return corpus_spec_from_toml(load_toml(path));
}

std::string comparison_to_csv(const ComparisonReport& report) {
    std::ostringstream out;
    out << "metric,mab,pure_li,mean_diff,wins,losses,ties,p_one_sided,p_two_sided\n";
    auto value_of = [](const MethodMetrics& m, const std::string& key) {
        if (key == "mrr") return m.mrr;
        const int k = key.back() - '0';
        if (key.rfind("recall", 0) == 0) return m.recall.at(k);
        if (key.rfind("precision", 0) == 0) return m.precision.at(k);
        return m.ndcg.at(k);
    };
    for (const auto& [key, test] : report.sign_tests) {
        out << key << "," << value_of(report.mab, key) << "," << value_of(report.pure_li, key)
            << "," << report.mean_diff.at(key) << "," << test.wins << "," << test.losses << ","
            << test.ties << "," << test.p_one_sided << "," << test.p_two_sided << "\n";
    }
    return out.str();
}

}  // namespace mabdqa

#include "mabdqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mabdqa/rng.hpp"

using namespace mabdqa;

namespace {

// Independent reimplementations for the oracle-equivalence checks.
double recall_oracle(const std::vector<std::string>& pred, const std::set<std::string>& gt,
                     int k) {
    int hits = 0;
    for (int i = 0; i < k && i < static_cast<int>(pred.size()); ++i) {
        hits += gt.count(pred[i]) ? 1 : 0;
    }
    return hits / static_cast<double>(gt.size());
}

double precision_oracle(const std::vector<std::string>& pred, const std::set<std::string>& gt,
                        int k) {
    int hits = 0;
    for (int i = 0; i < k && i < static_cast<int>(pred.size()); ++i) {
        hits += gt.count(pred[i]) ? 1 : 0;
    }
    return hits / static_cast<double>(k);
}

double ndcg_oracle(const std::vector<std::string>& pred, const std::set<std::string>& gt,
                   int k) {
    double dcg = 0.0;
    for (int i = 0; i < k && i < static_cast<int>(pred.size()); ++i) {
        const double rel = gt.count(pred[i]) ? 1.0 : 0.0;
        dcg += (std::pow(2.0, rel) - 1.0) / std::log2(i + 2.0);
    }
    double idcg = 0.0;
    const int ideal = std::min<int>(static_cast<int>(gt.size()), k);
    for (int i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(i + 2.0);
    return idcg > 0 ? dcg / idcg : 0.0;
}

std::vector<std::string> pages(std::initializer_list<int> ids) {
    std::vector<std::string> out;
    for (int i : ids) out.push_back(std::to_string(i));
    return out;
}

std::set<std::string> page_set(std::initializer_list<int> ids) {
    std::set<std::string> out;
    for (int i : ids) out.insert(std::to_string(i));
    return out;
}

}  // namespace

TEST_CASE("recall at k") {
    CHECK(recall_at_k(pages({1, 5, 7}), page_set({1, 2}), 3) == doctest::Approx(0.5));
    CHECK(recall_at_k(pages({1, 2, 9}), page_set({1, 2}), 3) == doctest::Approx(1.0));
    CHECK(recall_at_k(pages({8, 9}), page_set({1, 2}), 2) == doctest::Approx(0.0));
    CHECK_THROWS_AS(recall_at_k(pages({1}), {}, 1), ContractError);
    CHECK_THROWS_AS(recall_at_k(pages({1}), page_set({1}), 0), ContractError);
}

TEST_CASE("precision at k divides by k even for short lists") {
    CHECK(precision_at_k(pages({1, 5, 7}), page_set({1, 2}), 3) == doctest::Approx(1.0 / 3));
    CHECK(precision_at_k(pages({1}), page_set({1}), 1) == doctest::Approx(1.0));
    CHECK(precision_at_k(pages({1}), page_set({1}), 5) == doctest::Approx(0.2));
}

TEST_CASE("ndcg at k on the worked example") {
    // rel pattern [1, 0, 1] with |gt| = 2: DCG = 1 + 1/2, IDCG = 1 + 1/log2(3).
    const double value = ndcg_at_k(pages({1, 9, 2}), page_set({1, 2}), 3);
    const double expected = 1.5 / (1.0 + 1.0 / std::log2(3.0));
    CHECK(std::abs(value - expected) < 1e-9);
    CHECK(value == doctest::Approx(0.9197).epsilon(1e-4));

    CHECK(ndcg_at_k(pages({1, 2}), page_set({1, 2}), 2) == doctest::Approx(1.0));
    CHECK(ndcg_at_k(pages({8, 9}), page_set({1, 2}), 2) == doctest::Approx(0.0));
}

TEST_CASE("graded ndcg ranks by provided scores") {
    std::unordered_map<std::string, double> rel = {{"1", 3.0}, {"2", 1.0}, {"3", 0.0}};
    CHECK(ndcg_at_k_graded(pages({1, 2, 3}), rel, 3) == doctest::Approx(1.0));
    CHECK(ndcg_at_k_graded(pages({3, 2, 1}), rel, 3) < 1.0);
}

TEST_CASE("mrr with the miss-as-zero convention") {
    CHECK(mrr({2, 1}) == doctest::Approx(0.75));
    CHECK(mrr({1}) == doctest::Approx(1.0));
    CHECK(mrr({4, 0}) == doctest::Approx(0.125));
    CHECK_THROWS_AS(mrr({}), ContractError);
    CHECK(first_relevant_rank(pages({9, 1}), page_set({1})) == 2);
    CHECK(first_relevant_rank(pages({9, 8}), page_set({1})) == 0);
}

TEST_CASE("recall never decreases in k") {
    // NDCG is deliberately absent here: with the min(|gt|, k) ideal the
    // denominator can grow while the numerator stalls, e.g. [hit, miss]
    // against two relevant pages drops from 1.0 at k=1 to ~0.61 at k=2.
    Rng rng(67);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> pred;
        for (int i = 0; i < 10; ++i) pred.push_back(std::to_string(rng.next_u64() % 20));
        std::set<std::string> gt;
        while (gt.size() < 3) gt.insert(std::to_string(rng.next_u64() % 20));
        for (int k = 1; k < 10; ++k) {
            CHECK(recall_at_k(pred, gt, k + 1) >= recall_at_k(pred, gt, k));
        }
    }
    CHECK(ndcg_at_k({"1", "9"}, {"1", "2"}, 1) == doctest::Approx(1.0));
    CHECK(ndcg_at_k({"1", "9"}, {"1", "2"}, 2) < 1.0);
}

TEST_CASE("precision at one equals recall at one when a single page is relevant") {
    Rng rng(71);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> pred;
        for (int i = 0; i < 5; ++i) pred.push_back(std::to_string(rng.next_u64() % 8));
        const std::set<std::string> gt = {std::to_string(rng.next_u64() % 8)};
        CHECK(precision_at_k(pred, gt, 1) == recall_at_k(pred, gt, 1));
    }
}

TEST_CASE("metrics match brute-force reimplementations on random instances") {
    Rng rng(73);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::string> universe;
        for (int i = 0; i < 30; ++i) universe.push_back(std::to_string(i));
        std::vector<std::string> pred;
        {
            std::vector<std::string> pool = universe;
            const int len = 1 + static_cast<int>(rng.next_u64() % 10);
            for (int i = 0; i < len; ++i) {
                const std::size_t pick = rng.next_u64() % pool.size();
                pred.push_back(pool[pick]);
                pool.erase(pool.begin() + static_cast<long>(pick));
            }
        }
        std::set<std::string> gt;
        const int gt_size = 1 + static_cast<int>(rng.next_u64() % 6);
        while (static_cast<int>(gt.size()) < gt_size) {
            gt.insert(std::to_string(rng.next_u64() % 30));
        }
        const int k = 1 + static_cast<int>(rng.next_u64() % 10);
        CHECK(recall_at_k(pred, gt, k) == doctest::Approx(recall_oracle(pred, gt, k)));
        CHECK(precision_at_k(pred, gt, k) == doctest::Approx(precision_oracle(pred, gt, k)));
        CHECK(ndcg_at_k(pred, gt, k) == doctest::Approx(ndcg_oracle(pred, gt, k)));
    }
}

TEST_CASE("issue detector fires on strict subquery improvement") {
    EvalRecord record;
    record.qid = "q1";
    record.question = "original";
    record.evidence_pages = {"e1", "e2"};

    const auto retriever = [](const std::string& query) -> std::vector<std::string> {
        if (query == "original") return {"x", "e1", "y", "z", "w"};  // recall@5 = 0.5
        if (query == "good-atom") return {"e1", "e2", "x", "y", "z"};  // recall@5 = 1.0
        return {"x", "y", "z", "w", "v"};
    };
    CHECK(detect_issue(record, {"bad-atom", "good-atom"}, retriever));
    CHECK_FALSE(detect_issue(record, {"bad-atom"}, retriever));

    const auto equal_retriever = [](const std::string&) -> std::vector<std::string> {
        return {"e1", "x", "y", "z", "w"};
    };
    CHECK_FALSE(detect_issue(record, {"a", "b"}, equal_retriever));
}

TEST_CASE("dataset loader validates the answerable invariant") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "mabdqa_dataset.jsonl").string();
    {
        std::ofstream out(path);
        out << R"({"qid":"q1","doc_id":"d","question":"?","answer":"42","evidence_pages":["p1"],"answerable":true})"
            << "\n";
        out << R"({"qid":"q2","doc_id":"d","question":"?","answer":"Not answerable","evidence_pages":[],"answerable":false})"
            << "\n";
    }
    const auto records = load_dataset_jsonl(path);
    REQUIRE(records.size() == 2);
    CHECK(records[0].gt_answer == "42");
    CHECK_FALSE(records[1].answerable);

    std::ofstream(path) << R"({"qid":"q1","question":"?","answer":"42","answerable":false})"
                        << "\n";
    CHECK_THROWS_AS(load_dataset_jsonl(path), FormatError);

    std::ofstream(path) << "not json\n";
    CHECK_THROWS_AS(load_dataset_jsonl(path), FormatError);
}

TEST_CASE("benchmark on an empty dataset reports zero counts") {
    BenchmarkEngine engine;
    const auto report = run_benchmark({}, engine, [](auto&&...) { return 1; });
    CHECK(report.total_queries == 0);
    CHECK(report.evaluated == 0);
    CHECK(report.per_query.empty());
}

TEST_CASE("benchmark ceiling: perfect retrieval and exact-match grading") {
    EvalRecord record;
    record.qid = "q1";
    record.question = "what?";
    record.gt_answer = "42";
    record.evidence_pages = {"e1"};

    BenchmarkEngine engine;
    engine.retrieve = [](const std::string&) {
        return std::make_pair(std::vector<std::string>{"e1", "x", "y"},
                              std::vector<std::string>{"atom"});
    };
    engine.answer = [](const std::string&, const std::vector<std::string>&) {
        return std::make_pair(std::string("42"), 0);
    };
    engine.rank_by_li = [](const std::string&) {
        return std::vector<std::string>{"e1", "x", "y"};
    };
    const Grader grader = [](const std::string&, const std::string& predicted,
                             const std::string& gt) { return predicted == gt ? 1 : 0; };

    const auto report = run_benchmark({record}, engine, grader);
    CHECK(report.evaluated == 1);
    for (int k : kMetricCutoffs) CHECK(report.recall.at(k) == doctest::Approx(1.0));
    CHECK(report.precision.at(1) == doctest::Approx(1.0));
    CHECK(report.ndcg.at(5) == doctest::Approx(1.0));
    CHECK(report.mrr_value == doctest::Approx(1.0));
    CHECK(report.accuracy == doctest::Approx(1.0));
    CHECK(report.issue_rate == doctest::Approx(0.0));
}

TEST_CASE("benchmark aggregates equal independently recomputed means") {
    Rng rng(79);
    std::vector<EvalRecord> dataset;
    for (int i = 0; i < 20; ++i) {
        EvalRecord record;
        record.qid = "q" + std::to_string(i);
        record.question = "question " + std::to_string(i);
        record.gt_answer = "answer";
        record.evidence_pages = {"e" + std::to_string(i)};
        dataset.push_back(std::move(record));
    }
    BenchmarkEngine engine;
    engine.retrieve = [&](const std::string& question) {
        // Pseudo-random but input-deterministic ranking.
        const std::uint64_t h = fnv1a(question);
        std::vector<std::string> ranking;
        const std::string own = "e" + question.substr(9);
        if (h % 3 != 0) ranking.push_back(own);
        ranking.push_back("x1");
        ranking.push_back("x2");
        if (h % 3 == 0) ranking.push_back(own);
        ranking.push_back("x3");
        return std::make_pair(ranking, std::vector<std::string>{"atom"});
    };
    engine.answer = [](const std::string& question, const std::vector<std::string>&) {
        return std::make_pair(fnv1a(question) % 2 == 0 ? std::string("answer")
                                                       : std::string("wrong"),
                              1);
    };
    const Grader grader = [](const std::string&, const std::string& predicted,
                             const std::string& gt) { return predicted == gt ? 1 : 0; };
    const auto report = run_benchmark(dataset, engine, grader);

    double recall5 = 0.0, accuracy = 0.0, rr = 0.0;
    for (const auto& row : report.per_query) {
        recall5 += row.recall.at(5);
        accuracy += row.grade;
        rr += row.first_relevant > 0 ? 1.0 / row.first_relevant : 0.0;
    }
    CHECK(report.recall.at(5) == doctest::Approx(recall5 / 20));
    CHECK(report.accuracy == doctest::Approx(accuracy / 20));
    CHECK(report.mrr_value == doctest::Approx(rr / 20));

    // Failures are excluded from aggregates but counted.
    BenchmarkEngine failing = engine;
    failing.retrieve = [&, n = 0](const std::string& question) mutable {
        if (++n == 1) throw IoError("boom");
        return engine.retrieve(question);
    };
    const auto with_failure = run_benchmark(dataset, failing, grader);
    CHECK(with_failure.failed == 1);
    CHECK(with_failure.evaluated == 19);

    // Report serializations carry the aggregate block.
    const std::string json_text = report_to_json(report, "{\"seed\":42}");
    CHECK(json_text.find("\"aggregates\"") != std::string::npos);
    CHECK(json_text.find("\"config\"") != std::string::npos);
    CHECK(report_rows_jsonl(report).find("\"qid\":\"q0\"") != std::string::npos);
    CHECK(report_to_csv(report).find("qid,failed") == 0);
}

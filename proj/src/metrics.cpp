#include "mabdqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mabdqa/log.hpp"

namespace mabdqa {

using nlohmann::json;

std::vector<EvalRecord> load_dataset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::vector<EvalRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json parsed;
        try {
            parsed = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError("dataset line " + std::to_string(line_no) +
                              " is not valid JSON: " + e.what());
        }
        EvalRecord record;
        try {
            record.qid = parsed.at("qid").get<std::string>();
            record.doc_id = parsed.value("doc_id", std::string());
            record.question = parsed.at("question").get<std::string>();
            record.gt_answer = parsed.at("answer").get<std::string>();
            record.evidence_pages = parsed.value("evidence_pages", std::vector<std::string>());
            record.answerable = parsed.value("answerable", true);
        } catch (const json::exception& e) {
            throw FormatError("dataset line " + std::to_string(line_no) +
                              " has a bad field: " + e.what());
        }
        if (record.answerable == (record.gt_answer == "Not answerable")) {
            throw FormatError("dataset line " + std::to_string(line_no) +
                              ": answerable flag contradicts the answer text");
        }
        records.push_back(std::move(record));
    }
    return records;
}

namespace {

int hits_at_k(const std::vector<std::string>& pred, const std::set<std::string>& gt, int k) {
    int hits = 0;
    const std::size_t limit = std::min<std::size_t>(pred.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
        if (gt.count(pred[i])) ++hits;
    }
    return hits;
}

}  // namespace

double recall_at_k(const std::vector<std::string>& pred, const std::set<std::string>& gt, int k) {
    if (k < 1) throw ContractError("recall_at_k: k must be >= 1");
    if (gt.empty()) throw ContractError("recall_at_k: empty ground truth");
    return hits_at_k(pred, gt, k) / static_cast<double>(gt.size());
}

double precision_at_k(const std::vector<std::string>& pred, const std::set<std::string>& gt,
                      int k) {
    if (k < 1) throw ContractError("precision_at_k: k must be >= 1");
    return hits_at_k(pred, gt, k) / static_cast<double>(k);
}

double ndcg_at_k(const std::vector<std::string>& pred, const std::set<std::string>& gt, int k) {
    if (k < 1) throw ContractError("ndcg_at_k: k must be >= 1");
    if (gt.empty()) throw ContractError("ndcg_at_k: empty ground truth");
    double dcg = 0.0;
    const std::size_t limit = std::min<std::size_t>(pred.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
        if (gt.count(pred[i])) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);  // (2^1 - 1) gain
        }
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min<std::size_t>(gt.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < ideal; ++i) {
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

double ndcg_at_k_graded(const std::vector<std::string>& pred,
                        const std::unordered_map<std::string, double>& rel_scores, int k) {
    if (k < 1) throw ContractError("ndcg_at_k_graded: k must be >= 1");
    auto gain = [](double rel) { return std::pow(2.0, rel) - 1.0; };
    double dcg = 0.0;
    const std::size_t limit = std::min<std::size_t>(pred.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
        auto it = rel_scores.find(pred[i]);
        const double rel = it == rel_scores.end() ? 0.0 : it->second;
        dcg += gain(rel) / std::log2(static_cast<double>(i) + 2.0);
    }
    std::vector<double> all;
    all.reserve(rel_scores.size());
    for (const auto& [page, rel] : rel_scores) all.push_back(rel);
    std::sort(all.begin(), all.end(), std::greater<double>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min<std::size_t>(all.size(), static_cast<std::size_t>(k));
         ++i) {
        idcg += gain(all[i]) / std::log2(static_cast<double>(i) + 2.0);
    }
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

int first_relevant_rank(const std::vector<std::string>& pred, const std::set<std::string>& gt) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (gt.count(pred[i])) return static_cast<int>(i) + 1;
    }
    return 0;
}

double mrr(const std::vector<int>& first_relevant_ranks) {
    if (first_relevant_ranks.empty()) throw ContractError("mrr: needs at least one query");
    double total = 0.0;
    for (int rank : first_relevant_ranks) {
        if (rank > 0) total += 1.0 / rank;
    }
    return total / static_cast<double>(first_relevant_ranks.size());
}

bool detect_issue(const EvalRecord& record, const std::vector<std::string>& atomic_subqueries,
                  const std::function<std::vector<std::string>(const std::string&)>& retriever) {
    const std::set<std::string> gt(record.evidence_pages.begin(), record.evidence_pages.end());
    if (gt.empty()) throw ContractError("detect_issue: record has no evidence labels");
    const double base = recall_at_k(retriever(record.question), gt, 5);
    for (const std::string& atom : atomic_subqueries) {
        if (recall_at_k(retriever(atom), gt, 5) > base) return true;
    }
    return false;
}

MetricsReport run_benchmark(const std::vector<EvalRecord>& dataset, const BenchmarkEngine& engine,
                            const Grader& grader) {
    MetricsReport report;
    report.total_queries = static_cast<int>(dataset.size());
    for (const EvalRecord& record : dataset) {
        QueryResult row;
        row.qid = record.qid;
        try {
            auto [ranking, atoms] = engine.retrieve(record.question);
            const std::set<std::string> gt(record.evidence_pages.begin(),
                                           record.evidence_pages.end());
            if (gt.empty()) {
                log_info("qid " + record.qid + ": no evidence labels, retrieval metrics skipped");
            } else {
                row.retrieval_scored = true;
                for (int k : kMetricCutoffs) {
                    row.recall[k] = recall_at_k(ranking, gt, k);
                    row.precision[k] = precision_at_k(ranking, gt, k);
                    row.ndcg[k] = ndcg_at_k(ranking, gt, k);
                }
                row.first_relevant = first_relevant_rank(ranking, gt);
                if (engine.rank_by_li) {
                    row.issue_checked = true;
                    row.issue = detect_issue(record, atoms, engine.rank_by_li);
                }
            }
            auto [answer, rounds] = engine.answer(record.question, ranking);
            row.answer = answer;
            row.rounds = rounds;
            row.graded = true;
            row.grade = grader(record.question, answer, record.gt_answer);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            log_warn("qid " + record.qid + " failed: " + row.error);
        }
        report.per_query.push_back(std::move(row));
    }

    // Deterministic reduction order regardless of evaluation order.
    std::sort(report.per_query.begin(), report.per_query.end(),
              [](const QueryResult& a, const QueryResult& b) { return a.qid < b.qid; });

    std::vector<int> ranks;
    for (const QueryResult& row : report.per_query) {
        if (row.failed) {
            ++report.failed;
            continue;
        }
        ++report.evaluated;
        if (row.retrieval_scored) {
            ++report.retrieval_scored;
            for (int k : kMetricCutoffs) {
                report.recall[k] += row.recall.at(k);
                report.precision[k] += row.precision.at(k);
                report.ndcg[k] += row.ndcg.at(k);
            }
            ranks.push_back(row.first_relevant);
        }
        if (row.graded) {
            ++report.graded;
            report.accuracy += row.grade;
        }
        if (row.issue_checked) {
            ++report.issue_checked;
            report.issue_rate += row.issue ? 1.0 : 0.0;
        }
    }
    if (report.retrieval_scored > 0) {
        for (int k : kMetricCutoffs) {
            report.recall[k] /= report.retrieval_scored;
            report.precision[k] /= report.retrieval_scored;
            report.ndcg[k] /= report.retrieval_scored;
        }
        report.mrr_value = mrr(ranks);
    }
    if (report.graded > 0) report.accuracy /= report.graded;
    if (report.issue_checked > 0) report.issue_rate /= report.issue_checked;
    return report;
}

namespace {

json aggregates_to_json(const MetricsReport& report) {
    json out;
    out["total_queries"] = report.total_queries;
    out["evaluated"] = report.evaluated;
    out["failed"] = report.failed;
    out["retrieval_scored"] = report.retrieval_scored;
    out["graded"] = report.graded;
    out["issue_checked"] = report.issue_checked;
    for (int k : kMetricCutoffs) {
        const std::string suffix = "@" + std::to_string(k);
        if (report.retrieval_scored > 0) {
            out["recall" + suffix] = report.recall.at(k);
            out["precision" + suffix] = report.precision.at(k);
            out["ndcg" + suffix] = report.ndcg.at(k);
        }
    }
    if (report.retrieval_scored > 0) out["mrr"] = report.mrr_value;
    if (report.graded > 0) out["accuracy"] = report.accuracy;
    if (report.issue_checked > 0) out["issue_rate"] = report.issue_rate;
    return out;
}

json row_to_json(const QueryResult& row) {
    json out;
    out["qid"] = row.qid;
    out["failed"] = row.failed;
    if (row.failed) {
        out["error"] = row.error;
        return out;
    }
    if (row.retrieval_scored) {
        for (int k : kMetricCutoffs) {
            const std::string suffix = "@" + std::to_string(k);
            out["recall" + suffix] = row.recall.at(k);
            out["precision" + suffix] = row.precision.at(k);
            out["ndcg" + suffix] = row.ndcg.at(k);
        }
        out["first_relevant_rank"] = row.first_relevant;
    }
    if (row.issue_checked) out["issue"] = row.issue;
    if (row.graded) out["grade"] = row.grade;
    out["answer"] = row.answer;
    out["rounds"] = row.rounds;
    return out;
}

}  // namespace

std::string report_to_json(const MetricsReport& report, const std::string& config_echo_json) {
    json out;
    if (!config_echo_json.empty()) out["config"] = json::parse(config_echo_json);
    out["aggregates"] = aggregates_to_json(report);
    json rows = json::array();
    for (const QueryResult& row : report.per_query) rows.push_back(row_to_json(row));
    out["per_query"] = rows;
    return out.dump(2);
}

std::string report_rows_jsonl(const MetricsReport& report) {
    std::string out;
    for (const QueryResult& row : report.per_query) {
        out += row_to_json(row).dump();
        out += "\n";
    }
    return out;
}

std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "qid,failed,recall@1,recall@3,recall@5,precision@1,precision@3,precision@5,"
           "ndcg@1,ndcg@3,ndcg@5,first_relevant_rank,issue,grade,rounds\n";
    auto cell = [](const std::map<int, double>& m, int k) {
        auto it = m.find(k);
        return it == m.end() ? std::string() : std::to_string(it->second);
    };
    for (const QueryResult& row : report.per_query) {
        out << row.qid << "," << (row.failed ? 1 : 0);
        for (const auto* metric : {&row.recall, &row.precision, &row.ndcg}) {
            for (int k : kMetricCutoffs) out << "," << cell(*metric, k);
        }
        out << "," << (row.retrieval_scored ? std::to_string(row.first_relevant) : std::string())
            << "," << (row.issue_checked ? std::to_string(row.issue ? 1 : 0) : std::string())
            << "," << (row.graded ? std::to_string(row.grade) : std::string())
            << "," << row.rounds << "\n";
    }
    return out.str();
}

}  // namespace mabdqa

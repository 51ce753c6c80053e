#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "mabdqa/config.hpp"
#include "mabdqa/log.hpp"
#include "mabdqa/metrics.hpp"
#include "mabdqa/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mabdqa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Clients {
    std::unique_ptr<MockGateway> mock;
    std::unique_ptr<HttpGateway> http;
    ChatClient* chat = nullptr;
    EmbedClient* embed = nullptr;
};

Clients make_clients(const AppConfig& config) {
    Clients clients;
    if (config.mock) {
        MockScript script;
        if (!config.gateway.mock_script_path.empty()) {
            script = load_mock_script(config.gateway.mock_script_path);
        }
        clients.mock = std::make_unique<MockGateway>(std::move(script), config.gateway.mock_seed,
                                                     config.gateway.mock_dim);
        clients.chat = clients.mock.get();
        clients.embed = clients.mock.get();
    } else {
        clients.http = std::make_unique<HttpGateway>(config.gateway);
        clients.chat = clients.http.get();
        clients.embed = clients.http.get();
    }
    return clients;
}

std::string format_score(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

PageGraph obtain_graph(const AppConfig& config, const EmbeddingIndex& index) {
    if (!config.graph_cache_path.empty() && fs::exists(config.graph_cache_path)) {
        PageGraph cached = load_page_graph(config.graph_cache_path, index);
        if (cached.theta_g() == config.graph.theta_g) return cached;
        log_info("graph cache theta_g mismatch, rebuilding");
    }
    PageGraph graph = build_page_graph(index, config.graph.theta_g);
    if (!config.graph_cache_path.empty()) save_page_graph(graph, config.graph_cache_path);
    return graph;
}

Pipeline make_pipeline(const AppConfig& config, const EmbeddingIndex& index, Clients& clients) {
    PipelineOptions options{config.params, config.graph, config.reasoner};
    Pipeline pipeline(&index, clients.chat, clients.embed, options);
    pipeline.set_page_graph(obtain_graph(config, index));
    if (!config.manifest_path.empty()) {
        pipeline.hydrate_image_paths(load_manifest(config.manifest_path));
    }
    return pipeline;
}

int cmd_ingest(const AppConfig& config, const std::string& out_path, bool json_out) {
    auto docs = load_manifest(config.manifest_path);
    Clients clients = make_clients(config);
    EmbeddingIndex index = ingest_corpus(docs, *clients.embed);
    save_index(index, out_path);
    if (json_out) {
        std::cout << json{{"pages", index.size()}, {"dim", index.dim()}, {"index", out_path}}.dump()
                  << "\n";
    } else {
        std::cout << "ingested pages=" << index.size() << " dim=" << index.dim() << " -> "
                  << out_path << "\n";
    }
    return kExitOk;
}

int cmd_build_graph(const AppConfig& config, const std::string& out_path, bool json_out) {
    EmbeddingIndex index = load_index(config.index_path);
    PageGraph graph = build_page_graph(index, config.graph.theta_g);
    save_page_graph(graph, out_path);
    if (json_out) {
        std::cout << json{{"nodes", graph.nodes().size()},
                          {"edges", graph.edge_count()},
                          {"theta_g", graph.theta_g()},
                          {"cache", out_path}}
                         .dump()
                  << "\n";
    } else {
        std::cout << "graph nodes=" << graph.nodes().size() << " edges=" << graph.edge_count()
                  << " theta_g=" << graph.theta_g() << " -> " << out_path << "\n";
    }
    return kExitOk;
}

void print_ranking(const std::vector<std::pair<std::string, double>>& ranking,
                   const std::vector<std::string>& atoms, int evals_used, bool json_out) {
    if (json_out) {
        json rows = json::array();
        for (const auto& [id, score] : ranking) rows.push_back({{"page", id}, {"score", score}});
        std::cout << json{{"ranking", rows}, {"atoms", atoms}, {"evals_used", evals_used}}.dump()
                  << "\n";
        return;
    }
    if (!atoms.empty()) {
        std::cout << "atoms:";
        for (const auto& atom : atoms) std::cout << " [" << atom << "]";
        std::cout << "\n";
    }
    std::cout << "rank page score\n";
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        std::cout << (i + 1) << " " << ranking[i].first << " " << format_score(ranking[i].second)
                  << "\n";
    }
    std::cout << "judge evaluations: " << evals_used << "\n";
}

int cmd_retrieve(const AppConfig& config, const std::string& question, bool baseline,
                 const std::string& trace_path, const std::string& dump_path, bool json_out) {
    EmbeddingIndex index = load_index(config.index_path);
    Clients clients = make_clients(config);
    Pipeline pipeline = make_pipeline(config, index, clients);
    if (baseline) {
        const auto ranking = pipeline.retrieve_baseline(question);
        write_trace_jsonl({}, trace_path);
        print_ranking(ranking, {}, 0, json_out);
        return kExitOk;
    }
    const Pipeline::Retrieval result = pipeline.retrieve(question);
    write_trace_jsonl(result.outcome.state.trace, trace_path);
    if (!dump_path.empty()) {
        write_file(dump_path, result.hypergraph.debug_dump(result.subqueries) + "\n");
    }
    print_ranking(result.ranking, result.atoms, result.outcome.state.evals_used, json_out);
    return kExitOk;
}

int cmd_answer(const AppConfig& config, const std::string& question,
               const std::string& trace_path, const std::string& answers_path, bool json_out) {
    EmbeddingIndex index = load_index(config.index_path);
    Clients clients = make_clients(config);
    Pipeline pipeline = make_pipeline(config, index, clients);
    const Pipeline::Retrieval retrieval = pipeline.retrieve(question);
    write_trace_jsonl(retrieval.outcome.state.trace, trace_path);
    const AnswerResult result = pipeline.answer(question, retrieval);

    char qid[32];
    std::snprintf(qid, sizeof(qid), "q_%016llx",
                  static_cast<unsigned long long>(fnv1a(question)));
    std::ofstream answers(answers_path, std::ios::app);
    if (!answers) throw IoError("cannot open answers file: " + answers_path);
    answers << answer_record_json(qid, result, trace_path) << "\n";

    if (json_out) {
        std::cout << json{{"answer", result.answer},
                          {"rounds", result.trace.rounds_used},
                          {"degraded", result.trace.degraded}}
                         .dump()
                  << "\n";
    } else {
        std::cout << result.answer << "\n";
        std::cout << "rounds: " << result.trace.rounds_used
                  << (result.trace.degraded ? " (degraded)" : "") << "\n";
    }
    return kExitOk;
}

int cmd_eval(const AppConfig& config, bool json_out) {
    const auto dataset = load_dataset_jsonl(config.dataset_path);
    fs::create_directories(config.report_dir);

    MetricsReport report;
    if (!dataset.empty()) {
        EmbeddingIndex index = load_index(config.index_path);
        Clients clients = make_clients(config);
        Pipeline pipeline = make_pipeline(config, index, clients);

        BenchmarkEngine engine;
        std::unordered_map<std::string, Pipeline::Retrieval> cache;
        engine.retrieve = [&](const std::string& question) {
            auto retrieval = pipeline.retrieve(question);
            std::vector<std::string> ids;
            for (const auto& [id, score] : retrieval.ranking) ids.push_back(id);
            auto atoms = retrieval.atoms;
            cache[question] = std::move(retrieval);
            return std::make_pair(ids, atoms);
        };
        engine.answer = [&](const std::string& question, const std::vector<std::string>&) {
            const AnswerResult result = pipeline.answer(question, cache.at(question));
            return std::make_pair(result.answer, result.trace.rounds_used);
        };
        engine.rank_by_li = [&](const std::string& text) { return pipeline.rank_by_li(text); };
        const Grader grader = [&](const std::string& question, const std::string& predicted,
                                  const std::string& gt) {
            return grade_answer(*clients.chat, question, predicted, gt);
        };
        report = run_benchmark(dataset, engine, grader);
    } else {
        report.total_queries = 0;
    }

    const std::string report_json = report_to_json(report, config.to_json());
    write_file((fs::path(config.report_dir) / "report.json").string(), report_json);
    write_file((fs::path(config.report_dir) / "report_rows.jsonl").string(),
               report_rows_jsonl(report));
    write_file((fs::path(config.report_dir) / "report.csv").string(), report_to_csv(report));
    if (json_out) {
        std::cout << report_json << "\n";
    } else {
        std::cout << "queries=" << report.total_queries << " evaluated=" << report.evaluated
                  << " failed=" << report.failed << "\n";
        if (report.retrieval_scored > 0) {
            std::cout << "recall@5=" << format_score(report.recall.at(5))
                      << " ndcg@5=" << format_score(report.ndcg.at(5))
                      << " mrr=" << format_score(report.mrr_value) << "\n";
        }
        if (report.graded > 0) {
            std::cout << "accuracy=" << format_score(report.accuracy) << "\n";
        }
        if (report.issue_checked > 0) {
            std::cout << "issue_rate=" << format_score(report.issue_rate) << "\n";
        }
        std::cout << "report: " << (fs::path(config.report_dir) / "report.json").string() << "\n";
    }
    return kExitOk;
}

int cmd_simulate(const AppConfig& config, const std::string& spec_path, int trials,
                 bool seed_overridden, bool json_out) {
    SyntheticCorpusSpec spec;
    if (!spec_path.empty()) spec = load_corpus_spec(spec_path);
    // Single-seed policy: an explicit --seed drives the corpus too.
    if (seed_overridden || spec_path.empty()) spec.seed = config.params.seed;
    CompareOptions options;
    options.params = config.params;
    options.graph_params = config.graph;
    const ComparisonReport report = compare_methods(spec, trials, options);

    fs::create_directories(config.report_dir);
    json wrapped = {{"config", json::parse(config.to_json())},
                    {"report", json::parse(comparison_to_json(report))}};
    write_file((fs::path(config.report_dir) / "comparison.json").string(), wrapped.dump(2));
    write_file((fs::path(config.report_dir) / "comparison.csv").string(),
               comparison_to_csv(report));
    if (json_out) {
        std::cout << wrapped.dump() << "\n";
    } else {
        std::cout << "trials=" << report.trials << "\n";
        std::cout << "recall@5 mab=" << format_score(report.mab.recall.at(5))
                  << " pure_li=" << format_score(report.pure_li.recall.at(5))
                  << " diff=" << format_score(report.mean_diff.at("recall@5"))
                  << " p_one_sided=" << format_score(report.sign_tests.at("recall@5").p_one_sided)
                  << "\n";
        std::cout << "arm posteriors: evidence="
                  << format_score(report.evidence_arm_posterior_mean)
                  << " distractor=" << format_score(report.distractor_arm_posterior_mean) << "\n";
        std::cout << "report: " << (fs::path(config.report_dir) / "comparison.json").string()
                  << "\n";
    }
    return kExitOk;
}

int cmd_export_heatmap(const AppConfig& config, const std::string& question,
                       const std::string& page_id, const std::string& out_path, bool json_out) {
    EmbeddingIndex index = load_index(config.index_path);
    const PageRecord* page = index.find(page_id);
    if (!page) throw ContractError("page not found in index: " + page_id);
    Clients clients = make_clients(config);
    const auto query = clients.embed->embed({{question, ""}}).front();
    const auto values = export_similarity_map(query, page->embedding);
    std::string csv;
    for (const double v : values) {
        csv += format_score(v);
        csv += "\n";
    }
    write_file(out_path, csv);
    if (json_out) {
        std::cout << json{{"page", page_id}, {"vectors", values.size()}, {"csv", out_path}}.dump()
                  << "\n";
    } else {
        std::cout << "wrote " << values.size() << " rows -> " << out_path << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bandit-guided multi-page document retrieval and answering"};
    app.require_subcommand(1);

    std::string config_path;
    bool mock = false;
    bool json_out = false;
    std::optional<long> seed_flag;
    app.add_option("--config", config_path, "TOML config file");
    app.add_flag("--mock", mock, "use the deterministic offline oracle, no network");
    app.add_flag("--json", json_out, "machine-readable stdout");
    app.add_option("--seed", seed_flag, "seed for every random stream");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "embed a corpus manifest into a binary index");
    std::string ingest_manifest, ingest_out;
    ingest->add_option("--manifest", ingest_manifest, "corpus manifest JSON")->required();
    ingest->add_option("--out", ingest_out, "output index path")->required();

    // build-graph
    auto* build_graph = app.add_subcommand("build-graph", "build the page-similarity graph cache");
    std::string graph_index, graph_out;
    std::optional<double> graph_theta;
    build_graph->add_option("--index", graph_index, "binary index path")->required();
    build_graph->add_option("--out", graph_out, "graph cache JSON path")->required();
    build_graph->add_option("--theta-g", graph_theta, "similarity threshold");

    // retrieve / answer shared flags
    std::string rq_index, rq_question, rq_graph, rq_manifest;
    std::string rq_trace = "trace.jsonl";
    std::optional<int> rq_m, rq_k;
    bool rq_baseline = false;
    auto add_retrieval_flags = [&](CLI::App* cmd) {
        cmd->add_option("--index", rq_index, "binary index path")->required();
        cmd->add_option("--question", rq_question, "question text")->required();
        cmd->add_option("--graph", rq_graph, "page-graph cache JSON");
        cmd->add_option("--manifest", rq_manifest, "manifest for page image paths");
        cmd->add_option("--trace", rq_trace, "trace JSONL output path");
        cmd->add_option("--m", rq_m, "judge evaluation budget");
        cmd->add_option("--k", rq_k, "output list length");
    };
    auto* retrieve = app.add_subcommand("retrieve", "bandit-guided page retrieval");
    add_retrieval_flags(retrieve);
    retrieve->add_flag("--baseline", rq_baseline, "rank by pure normalized LI instead");
    std::string rq_dump;
    retrieve->add_option("--dump-hypergraph", rq_dump, "hypergraph debug JSON output path");

    auto* answer = app.add_subcommand("answer", "retrieve then answer with reflection");
    add_retrieval_flags(answer);
    std::string answers_path = "answers.jsonl";
    answer->add_option("--answers", answers_path, "answer records JSONL (appended)");

    // eval
    auto* eval = app.add_subcommand("eval", "run a labeled dataset through the full pipeline");
    std::string eval_dataset, eval_index, eval_graph, eval_manifest, eval_out = "eval_report";
    eval->add_option("--dataset", eval_dataset, "JSONL dataset")->required();
    eval->add_option("--index", eval_index, "binary index path")->required();
    eval->add_option("--graph", eval_graph, "page-graph cache JSON");
    eval->add_option("--manifest", eval_manifest, "manifest for page image paths");
    eval->add_option("--out", eval_out, "report directory");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "synthetic MAB vs pure-LI comparison");
    std::string sim_spec, sim_out = "sim_report";
    int sim_trials = 10;
    simulate->add_option("--spec", sim_spec, "corpus spec TOML");
    simulate->add_option("--trials", sim_trials, "number of trial seeds");
    simulate->add_option("--out", sim_out, "report directory");

    // export-heatmap
    auto* heatmap = app.add_subcommand("export-heatmap", "per-patch max-similarity CSV");
    std::string hm_index, hm_question, hm_page, hm_out;
    heatmap->add_option("--index", hm_index, "binary index path")->required();
    heatmap->add_option("--question", hm_question, "question text")->required();
    heatmap->add_option("--page", hm_page, "page id")->required();
    heatmap->add_option("--out", hm_out, "output CSV path")->required();

    // Global flags may appear after the subcommand as well.
    for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        AppConfig config = load_app_config(config_path);
        config.mock = config.mock || mock;
        if (seed_flag) {
            config.params.seed = static_cast<std::uint64_t>(*seed_flag);
            config.gateway.mock_seed = static_cast<std::uint64_t>(*seed_flag);
        }

        if (*ingest) {
            config.manifest_path = ingest_manifest;
            return cmd_ingest(config, ingest_out, json_out);
        }
        if (*build_graph) {
            config.index_path = graph_index;
            if (graph_theta) config.graph.theta_g = *graph_theta;
            return cmd_build_graph(config, graph_out, json_out);
        }
        if (*retrieve || *answer) {
            config.index_path = rq_index;
            if (!rq_graph.empty()) config.graph_cache_path = rq_graph;
            if (!rq_manifest.empty()) config.manifest_path = rq_manifest;
            if (rq_m) config.params.budget_m = *rq_m;
            if (rq_k) config.params.output_k = *rq_k;
            if (*retrieve) {
                return cmd_retrieve(config, rq_question, rq_baseline, rq_trace, rq_dump,
                                    json_out);
            }
            return cmd_answer(config, rq_question, rq_trace, answers_path, json_out);
        }
        if (*eval) {
            config.dataset_path = eval_dataset;
            config.index_path = eval_index;
            if (!eval_graph.empty()) config.graph_cache_path = eval_graph;
            if (!eval_manifest.empty()) config.manifest_path = eval_manifest;
            config.report_dir = eval_out;
            return cmd_eval(config, json_out);
        }
        if (*simulate) {
            config.report_dir = sim_out;
            return cmd_simulate(config, sim_spec, sim_trials, seed_flag.has_value(), json_out);
        }
        if (*heatmap) {
            config.index_path = hm_index;
            return cmd_export_heatmap(config, hm_question, hm_page, hm_out, json_out);
        }
        std::cerr << "no subcommand\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ContractError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

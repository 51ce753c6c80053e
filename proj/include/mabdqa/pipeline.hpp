#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mabdqa/bandit.hpp"
#include "mabdqa/gateway.hpp"
#include "mabdqa/hypergraph.hpp"
#include "mabdqa/reasoner.hpp"
#include "mabdqa/synth.hpp"

namespace mabdqa {

// Corpus manifest: {"documents":[{"doc_id":..,"pages":[{"page_id":..,
// "page_number":..,"image_path":..}]}]}
struct ManifestPage {
    std::string page_id;
    std::uint32_t page_number = 1;
    std::string image_path;
};

struct ManifestDoc {
    std::string doc_id;
    std::vector<ManifestPage> pages;
};

std::vector<ManifestDoc> load_manifest(const std::string& path);
std::vector<ManifestDoc> parse_manifest(const std::string& json_text);

// Embeds every page (image when available, a stable text key otherwise) and
// assembles the index in manifest order.
EmbeddingIndex ingest_corpus(const std::vector<ManifestDoc>& docs, EmbedClient& embedder);

struct PipelineOptions {
    RetrievalParams params;
    HypergraphParams graph;
    ReasonerParams reasoner;
};

// Wires decomposition, hypergraph assembly, bandit retrieval, and the
// reflective reasoner over one immutable index. One instance per corpus;
// queries run sequentially through it.
class Pipeline {
public:
    Pipeline(const EmbeddingIndex* index, ChatClient* chat, EmbedClient* embed,
             PipelineOptions options);

    // Reuse a cached query-agnostic page graph instead of rebuilding.
    void set_page_graph(PageGraph graph);
    const PageGraph& page_graph();

    // Per-page image paths from the corpus manifest (the binary index does
    // not persist them).
    void hydrate_image_paths(const std::vector<ManifestDoc>& docs);

    struct Retrieval {
        std::vector<std::pair<std::string, double>> ranking;
        std::vector<std::string> atoms;
        std::vector<Subquery> subqueries;
        QueryAwareHypergraph hypergraph;
        RetrievalOutcome outcome;
    };

    Retrieval retrieve(const std::string& question);
    std::vector<std::pair<std::string, double>> retrieve_baseline(const std::string& question);
    // Pure-LI ranking of page ids for an arbitrary query text (Issue metric).
    std::vector<std::string> rank_by_li(const std::string& query_text);

    AnswerResult answer(const std::string& question, const Retrieval& retrieval);

    PageRef page_ref(const std::string& page_id) const;

private:
    const EmbeddingIndex* index_;
    ChatClient* chat_;
    EmbedClient* embed_;
    PipelineOptions options_;
    std::optional<PageGraph> graph_;
    std::unordered_map<std::string, std::string> image_paths_;
};

}  // namespace mabdqa

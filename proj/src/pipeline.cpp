#include "mabdqa/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mabdqa/prompts.hpp"

namespace mabdqa {

using nlohmann::json;

std::vector<ManifestDoc> parse_manifest(const std::string& json_text) {
    json parsed;
    try {
        parsed = json::parse(json_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
    }
    std::vector<ManifestDoc> docs;
    try {
        for (const auto& doc_json : parsed.at("documents")) {
            ManifestDoc doc;
            doc.doc_id = doc_json.at("doc_id").get<std::string>();
            for (const auto& page_json : doc_json.at("pages")) {
                ManifestPage page;
                page.page_id = page_json.at("page_id").get<std::string>();
                page.page_number = page_json.at("page_number").get<std::uint32_t>();
                page.image_path = page_json.value("image_path", std::string());
                doc.pages.push_back(std::move(page));
            }
            docs.push_back(std::move(doc));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest schema violation: ") + e.what());
    }
    return docs;
}

std::vector<ManifestDoc> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_manifest(buffer.str());
}

EmbeddingIndex ingest_corpus(const std::vector<ManifestDoc>& docs, EmbedClient& embedder) {
    std::vector<EmbedInput> batch;
    std::vector<PageRecord> records;
    for (const ManifestDoc& doc : docs) {
        for (const ManifestPage& page : doc.pages) {
            PageRecord record;
            record.doc_id = doc.doc_id;
            record.page_id = page.page_id;
            record.page_number = page.page_number;
            record.image_path = page.image_path;
            records.push_back(std::move(record));
            batch.push_back({doc.doc_id + "/" + page.page_id, page.image_path});
        }
    }
    if (batch.empty()) throw ContractError("manifest contains no pages");
    auto embeddings = embedder.embed(batch);
    EmbeddingIndex index;
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].embedding = std::move(embeddings[i]);
        index.add_page(std::move(records[i]));
    }
    return index;
}

Pipeline::Pipeline(const EmbeddingIndex* index, ChatClient* chat, EmbedClient* embed,
                   PipelineOptions options)
    : index_(index), chat_(chat), embed_(embed), options_(options) {
    if (!index_ || !chat_ || !embed_) throw ContractError("pipeline needs index, chat, embed");
}

void Pipeline::set_page_graph(PageGraph graph) {
    graph_ = std::move(graph);
}

const PageGraph& Pipeline::page_graph() {
    if (!graph_) graph_ = build_page_graph(*index_, options_.graph.theta_g);
    return *graph_;
}

void Pipeline::hydrate_image_paths(const std::vector<ManifestDoc>& docs) {
    for (const ManifestDoc& doc : docs) {
        for (const ManifestPage& page : doc.pages) {
            if (!page.image_path.empty()) image_paths_[page.page_id] = page.image_path;
        }
    }
}

PageRef Pipeline::page_ref(const std::string& page_id) const {
    PageRef ref;
    ref.page_id = page_id;
    auto it = image_paths_.find(page_id);
    if (it != image_paths_.end()) {
        ref.image_path = it->second;
    } else if (const PageRecord* record = index_->find(page_id)) {
        ref.image_path = record->image_path;
        ref.text = "page " + page_id + " of " + record->doc_id;
    } else {
        ref.text = "page " + page_id;
    }
    return ref;
}

Pipeline::Retrieval Pipeline::retrieve(const std::string& question) {
    Retrieval result;
    result.atoms = decompose_query(question, *chat_);
    result.subqueries = build_subquery_set(question, result.atoms, *embed_);
    result.hypergraph =
        assemble_hypergraph(*index_, page_graph(), result.subqueries, options_.graph.theta_h);
    const JudgeFn judge = [this, &question](const std::string& page_id, double li_norm) {
        return judge_page(*chat_, question, page_ref(page_id), priori_bucket(li_norm));
    };
    result.outcome =
        run_retrieval(result.hypergraph, *index_, result.subqueries, options_.params, judge);
    result.ranking = result.outcome.ranking;
    return result;
}

std::vector<std::pair<std::string, double>> Pipeline::retrieve_baseline(
    const std::string& question) {
    const auto embedding = embed_->embed({{question, ""}}).front();
    return pure_li_ranking(embedding, *index_, options_.params.output_k);
}

std::vector<std::string> Pipeline::rank_by_li(const std::string& query_text) {
    const auto embedding = embed_->embed({{query_text, ""}}).front();
    const auto pairs = pure_li_ranking(embedding, *index_, options_.params.output_k);
    std::vector<std::string> ids;
    ids.reserve(pairs.size());
    for (const auto& [id, score] : pairs) ids.push_back(id);
    return ids;
}

AnswerResult Pipeline::answer(const std::string& question, const Retrieval& retrieval) {
    std::vector<std::string> ranked_ids;
    ranked_ids.reserve(retrieval.ranking.size());
    for (const auto& [id, score] : retrieval.ranking) ranked_ids.push_back(id);
    std::vector<PageRef> refs;
    refs.reserve(ranked_ids.size());
    for (const std::string& id : ranked_ids) refs.push_back(page_ref(id));
    return answer_question(question, ranked_ids, refs, retrieval.hypergraph,
                           retrieval.subqueries, retrieval.outcome.state.composite,
                           options_.reasoner, *chat_);
}

}  // namespace mabdqa

#include "mabdqa/hypergraph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace mabdqa {

using nlohmann::json;

void PageGraph::add_edge(const std::string& a, const std::string& b, double similarity) {
    if (a == b) throw ContractError("page graph forbids self-loops");
    auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    if (edges_.emplace(std::move(key), similarity).second) {
        adjacency_[a].push_back(b);
        adjacency_[b].push_back(a);
    }
}

bool PageGraph::has_edge(const std::string& a, const std::string& b) const {
    auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    return edges_.count(key) > 0;
}

double PageGraph::edge_similarity(const std::string& a, const std::string& b) const {
    auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    auto it = edges_.find(key);
    if (it == edges_.end()) throw ContractError("no edge between " + a + " and " + b);
    return it->second;
}

const std::vector<std::string>& PageGraph::neighbors(const std::string& id) const {
    auto it = adjacency_.find(id);
    return it == adjacency_.end() ? empty_ : it->second;
}

std::vector<std::tuple<std::string, std::string, double>> PageGraph::sorted_edges() const {
    std::vector<std::tuple<std::string, std::string, double>> out;
    out.reserve(edges_.size());
    for (const auto& [key, sim] : edges_) out.emplace_back(key.first, key.second, sim);
    return out;  // map iteration is already lexicographic by pair
}

int CandidateSet::rank_of(const std::string& page_id) const {
    for (std::size_t i = 0; i < page_ids.size(); ++i) {
        if (page_ids[i] == page_id) return static_cast<int>(i) + 1;
    }
    return 0;
}

QueryAwareHypergraph::QueryAwareHypergraph(std::vector<std::string> nodes,
                                           std::vector<Hyperedge> hyperedges, PageGraph graph)
    : nodes_(std::move(nodes)), hyperedges_(std::move(hyperedges)), graph_(std::move(graph)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        node_pos_[nodes_[i]] = static_cast<int>(i);
    }
    for (std::size_t e = 0; e < hyperedges_.size(); ++e) {
        for (const std::string& page : hyperedges_[e].members) {
            arms_by_page_[page].push_back(static_cast<int>(e));
        }
    }
}

int QueryAwareHypergraph::degree(const std::string& page_id) const {
    auto it = arms_by_page_.find(page_id);
    return it == arms_by_page_.end() ? 0 : static_cast<int>(it->second.size());
}

int QueryAwareHypergraph::max_degree() const {
    int best = 0;
    for (const auto& [page, arms] : arms_by_page_) {
        best = std::max(best, static_cast<int>(arms.size()));
    }
    return best;
}

const std::vector<int>& QueryAwareHypergraph::arms_of(const std::string& page_id) const {
    auto it = arms_by_page_.find(page_id);
    return it == arms_by_page_.end() ? empty_ : it->second;
}

std::vector<std::string> QueryAwareHypergraph::neighbors(const std::string& page_id) const {
    std::unordered_set<std::string> seen;
    seen.insert(page_id);
    std::vector<std::string> out;
    for (int arm : arms_of(page_id)) {
        for (const std::string& member : hyperedges_[arm].members) {
            if (seen.insert(member).second) out.push_back(member);
        }
    }
    for (const std::string& neighbor : graph_.neighbors(page_id)) {
        if (seen.insert(neighbor).second) out.push_back(neighbor);
    }
    // Deterministic order: node insertion order, not discovery order.
    std::sort(out.begin(), out.end(), [&](const std::string& a, const std::string& b) {
        return node_position(a) < node_position(b);
    });
    return out;
}

int QueryAwareHypergraph::node_position(const std::string& page_id) const {
    auto it = node_pos_.find(page_id);
    return it == node_pos_.end() ? -1 : it->second;
}

std::string QueryAwareHypergraph::debug_dump(const std::vector<Subquery>& subqueries) const {
    json out;
    out["nodes"] = nodes_;
    json sq = json::array();
    for (const Subquery& q : subqueries) {
        sq.push_back({{"index", q.index}, {"text", q.text}, {"is_global", q.is_global}});
    }
    out["subqueries"] = sq;
    json edges = json::array();
    for (const Hyperedge& e : hyperedges_) {
        edges.push_back({{"subquery", e.subquery_index}, {"members", e.members}});
    }
    out["hyperedges"] = edges;
    json pairwise = json::array();
    for (const auto& [a, b, sim] : graph_.sorted_edges()) {
        pairwise.push_back(json::array({a, b, sim}));
    }
    out["edges"] = pairwise;
    return out.dump(2);
}

PageGraph build_page_graph(const EmbeddingIndex& index, double theta_g) {
    if (theta_g < -1.0 || theta_g > 1.0) {
        throw ContractError("theta_g must lie in [-1, 1]");
    }
    std::vector<std::string> nodes;
    nodes.reserve(index.size());
    for (const PageRecord& page : index.pages()) nodes.push_back(page.page_id);
    PageGraph graph(theta_g, std::move(nodes));
    for (std::size_t i = 0; i < index.size(); ++i) {
        for (std::size_t j = i + 1; j < index.size(); ++j) {
            const double sim = page_similarity(index.page(i), index.page(j));
            if (sim >= theta_g) {
                graph.add_edge(index.page(i).page_id, index.page(j).page_id, sim);
            }
        }
    }
    return graph;
}

void save_page_graph(const PageGraph& graph, const std::string& path) {
    json out;
    out["theta_g"] = graph.theta_g();
    json edges = json::array();
    for (const auto& [a, b, sim] : graph.sorted_edges()) {
        edges.push_back(json::array({a, b, sim}));
    }
    out["edges"] = edges;
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw IoError("cannot open graph cache for writing: " + path);
    file << out.dump(2) << "\n";
    if (!file) throw IoError("graph cache write failed: " + path);
}

PageGraph load_page_graph(const std::string& path, const EmbeddingIndex& index) {
    std::ifstream file(path);
    if (!file) throw IoError("cannot open graph cache: " + path);
    json parsed;
    try {
        file >> parsed;
    } catch (const json::exception& e) {
        throw FormatError(std::string("graph cache is not valid JSON: ") + e.what());
    }
    std::vector<std::string> nodes;
    for (const PageRecord& page : index.pages()) nodes.push_back(page.page_id);
    PageGraph graph(parsed.at("theta_g").get<double>(), std::move(nodes));
    for (const auto& edge : parsed.at("edges")) {
        graph.add_edge(edge.at(0).get<std::string>(), edge.at(1).get<std::string>(),
                       edge.at(2).get<double>());
    }
    return graph;
}

std::vector<std::string> decompose_query(const std::string& question, ChatClient& gateway) {
    if (trim(question).empty()) throw ContractError("decompose_query: empty question");
    const std::string reply =
        gateway.chat(TemplateId::kDecompose, {{"question", question}}, {});
    const std::string trimmed = trim(reply);
    if (trimmed.empty() || trimmed.find(',') == std::string::npos) {
        return {question};  // unparsable: single atom, the question itself
    }
    auto atoms = parse_comma_list(trimmed, 8);
    if (atoms.empty()) return {question};
    return atoms;
}

std::vector<Subquery> build_subquery_set(const std::string& question,
                                         const std::vector<std::string>& atoms,
                                         EmbedClient& embedder) {
    if (atoms.empty()) throw ContractError("build_subquery_set: atoms must be non-empty");
    std::vector<EmbedInput> batch;
    batch.reserve(atoms.size() + 1);
    for (const std::string& atom : atoms) batch.push_back({atom, ""});
    batch.push_back({question, ""});
    auto embeddings = embedder.embed(batch);
    std::vector<Subquery> out;
    out.reserve(atoms.size() + 1);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        out.push_back({static_cast<int>(i) + 1, atoms[i], std::move(embeddings[i]), false});
    }
    out.push_back({static_cast<int>(atoms.size()) + 1, question,
                   std::move(embeddings[atoms.size()]), true});
    return out;
}

CandidateSet rank_candidates(const Subquery& subquery, const EmbeddingIndex& index, int theta_h) {
    if (theta_h < 1) throw ContractError("theta_h must be >= 1");
    std::vector<double> scores(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        scores[i] = late_interaction(subquery.embedding, index.page(i).embedding);
    }
    std::vector<std::size_t> order(index.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];  // ties keep insertion order
    });
    CandidateSet out;
    out.subquery_index = subquery.index;
    const std::size_t keep = std::min<std::size_t>(index.size(), static_cast<std::size_t>(theta_h));
    for (std::size_t i = 0; i < keep; ++i) {
        out.page_ids.push_back(index.page(order[i]).page_id);
        out.scores.push_back(scores[order[i]]);
    }
    return out;
}

Hyperedge build_hyperedge(const CandidateSet& candidates, const CandidateSet& global_candidates) {
    Hyperedge edge;
    edge.subquery_index = candidates.subquery_index;
    for (std::size_t i = 0; i < candidates.page_ids.size(); ++i) {
        const std::string& page = candidates.page_ids[i];
        const int rank_j = static_cast<int>(i) + 1;
        const int rank_b = global_candidates.rank_of(page);
        if (rank_b == 0 || rank_j <= rank_b) {
            edge.members.push_back(page);
            edge.member_set.insert(page);
        }
    }
    return edge;
}

QueryAwareHypergraph assemble_hypergraph(const EmbeddingIndex& index, double theta_g,
                                         const std::vector<Subquery>& subqueries, int theta_h) {
    return assemble_hypergraph(index, build_page_graph(index, theta_g), subqueries, theta_h);
}

QueryAwareHypergraph assemble_hypergraph(const EmbeddingIndex& index, const PageGraph& graph,
                                         const std::vector<Subquery>& subqueries, int theta_h) {
    if (subqueries.empty()) throw ContractError("assemble_hypergraph: no subqueries");
    if (!subqueries.back().is_global) {
        throw ContractError("assemble_hypergraph: last subquery must be the global one");
    }
    std::vector<CandidateSet> candidates;
    candidates.reserve(subqueries.size());
    for (const Subquery& q : subqueries) {
        candidates.push_back(rank_candidates(q, index, theta_h));
    }
    const CandidateSet& global = candidates.back();
    std::vector<Hyperedge> hyperedges;
    hyperedges.reserve(candidates.size());
    for (const CandidateSet& c : candidates) {
        hyperedges.push_back(build_hyperedge(c, global));
    }
    std::vector<std::string> nodes;
    nodes.reserve(index.size());
    for (const PageRecord& page : index.pages()) nodes.push_back(page.page_id);
    return QueryAwareHypergraph(std::move(nodes), std::move(hyperedges), graph);
}

}  // namespace mabdqa

#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mabdqa/embedding.hpp"
#include "mabdqa/gateway.hpp"

namespace mabdqa {

// Query-agnostic page graph: one undirected edge per page pair whose pooled
// similarity meets the threshold. Built once per corpus, cacheable.
class PageGraph {
public:
    PageGraph() = default;
    PageGraph(double theta_g, std::vector<std::string> nodes)
        : theta_g_(theta_g), nodes_(std::move(nodes)) {}

    double theta_g() const { return theta_g_; }
    const std::vector<std::string>& nodes() const { return nodes_; }

    void add_edge(const std::string& a, const std::string& b, double similarity);
    bool has_edge(const std::string& a, const std::string& b) const;
    // Similarity of a stored edge; NaN-free: throws when the edge is absent.
    double edge_similarity(const std::string& a, const std::string& b) const;
    std::size_t edge_count() const { return edges_.size(); }

    // Neighbors in node insertion order.
    const std::vector<std::string>& neighbors(const std::string& id) const;

    // Edges as (low_id, high_id, similarity), sorted lexicographically.
    std::vector<std::tuple<std::string, std::string, double>> sorted_edges() const;

private:
    double theta_g_ = 0.8;
    std::vector<std::string> nodes_;
    std::map<std::pair<std::string, std::string>, double> edges_;
    std::unordered_map<std::string, std::vector<std::string>> adjacency_;
    std::vector<std::string> empty_;
};

struct Subquery {
    int index = 1;  // 1-based; the global subquery carries index M+1
    std::string text;
    MultiVectorEmbedding embedding;
    bool is_global = false;
};

// Top-theta_H pages for one subquery, descending LI, ties by insertion order.
struct CandidateSet {
    int subquery_index = 1;
    std::vector<std::string> page_ids;
    std::vector<double> scores;

    // 1-based rank within this set; 0 when absent.
    int rank_of(const std::string& page_id) const;
};

struct Hyperedge {
    int subquery_index = 1;
    std::vector<std::string> members;  // index insertion order
    std::unordered_set<std::string> member_set;

    bool contains(const std::string& page_id) const { return member_set.count(page_id) > 0; }
};

class QueryAwareHypergraph {
public:
    QueryAwareHypergraph() = default;
    QueryAwareHypergraph(std::vector<std::string> nodes, std::vector<Hyperedge> hyperedges,
                         PageGraph graph);

    const std::vector<std::string>& nodes() const { return nodes_; }
    const std::vector<Hyperedge>& hyperedges() const { return hyperedges_; }
    const PageGraph& graph() const { return graph_; }

    // Number of hyperedges containing the page (h_i); in [0, M+1].
    int degree(const std::string& page_id) const;
    int max_degree() const;

    // 0-based positions of hyperedges containing the page.
    const std::vector<int>& arms_of(const std::string& page_id) const;

    // Hyperedge co-members plus pairwise-graph neighbors, insertion order,
    // excluding the page itself.
    std::vector<std::string> neighbors(const std::string& page_id) const;

    int node_position(const std::string& page_id) const;

    std::string debug_dump(const std::vector<Subquery>& subqueries) const;

private:
    std::vector<std::string> nodes_;
    std::vector<Hyperedge> hyperedges_;
    PageGraph graph_;
    std::unordered_map<std::string, int> node_pos_;
    std::unordered_map<std::string, std::vector<int>> arms_by_page_;
    std::vector<int> empty_;
};

// O(N^2) pair scan in index order; edge iff page_similarity >= theta_g, i != j.
PageGraph build_page_graph(const EmbeddingIndex& index, double theta_g);

// Page-graph cache file: {"theta_g": ..., "edges": [["pA","pB",sim], ...]}.
void save_page_graph(const PageGraph& graph, const std::string& path);
PageGraph load_page_graph(const std::string& path, const EmbeddingIndex& index);

// Sends the decompose template; returns atom texts. Blank or comma-free
// replies fall back to the whole question as the sole atom. Cap 8, dedup.
std::vector<std::string> decompose_query(const std::string& question, ChatClient& gateway);

// M atomic subqueries plus the global one embedding the full question.
std::vector<Subquery> build_subquery_set(const std::string& question,
                                         const std::vector<std::string>& atoms,
                                         EmbedClient& embedder);

CandidateSet rank_candidates(const Subquery& subquery, const EmbeddingIndex& index, int theta_h);

// Eq-style filter: keep p in C_j when p is not in C_b, or ranks at least as
// well under Q_j as under Q_b.
Hyperedge build_hyperedge(const CandidateSet& candidates, const CandidateSet& global_candidates);

QueryAwareHypergraph assemble_hypergraph(const EmbeddingIndex& index, double theta_g,
                                         const std::vector<Subquery>& subqueries, int theta_h);
// Variant reusing a cached page graph.
QueryAwareHypergraph assemble_hypergraph(const EmbeddingIndex& index, const PageGraph& graph,
                                         const std::vector<Subquery>& subqueries, int theta_h);

}  // namespace mabdqa

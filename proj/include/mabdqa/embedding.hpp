#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mabdqa/errors.hpp"

namespace mabdqa {

// One query or page as a matrix of per-token / per-patch vectors,
// row-major float32, rows = vector count, cols = embedding dimension.
class MultiVectorEmbedding {
public:
    MultiVectorEmbedding() = default;
    MultiVectorEmbedding(std::size_t count, std::size_t dim);
    MultiVectorEmbedding(std::size_t count, std::size_t dim, std::vector<float> data);

    std::size_t count() const { return count_; }
    std::size_t dim() const { return dim_; }

    float* row(std::size_t i) { return data_.data() + i * dim_; }
    const float* row(std::size_t i) const { return data_.data() + i * dim_; }

    float& at(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
    float at(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }

    const std::vector<float>& data() const { return data_; }

    // count >= 1, dim >= 1, all entries finite.
    void validate() const;

    bool operator==(const MultiVectorEmbedding& other) const = default;

private:
    std::size_t count_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

struct PageRecord {
    std::string doc_id;
    std::string page_id;
    std::uint32_t page_number = 1;
    std::string image_path;  // sidecar metadata; not persisted in the index file
    MultiVectorEmbedding embedding;

    bool operator==(const PageRecord& other) const = default;
};

// Immutable after load; iteration order is insertion order.
class EmbeddingIndex {
public:
    EmbeddingIndex() = default;
    explicit EmbeddingIndex(std::uint32_t dim) : dim_(dim) {}

    std::uint32_t dim() const { return dim_; }
    void set_dim(std::uint32_t dim) { dim_ = dim; }

    std::size_t size() const { return pages_.size(); }
    const std::vector<PageRecord>& pages() const { return pages_; }
    const PageRecord& page(std::size_t i) const { return pages_[i]; }

    // Rejects duplicate page_ids and dimension mismatches.
    void add_page(PageRecord record);

    const PageRecord* find(const std::string& page_id) const;
    // Insertion-order position, or -1 when absent.
    int position(const std::string& page_id) const;

    bool operator==(const EmbeddingIndex& other) const;

private:
    std::uint32_t dim_ = 0;
    std::vector<PageRecord> pages_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// Eq-style late interaction: sum over query vectors of the max dot product
// against the page's vectors. Accumulation is in double, fixed vector order.
double late_interaction(const MultiVectorEmbedding& query, const MultiVectorEmbedding& page);

// late_interaction divided by the query vector count, comparable across
// queries of different token counts.
double normalized_li(const MultiVectorEmbedding& query, const MultiVectorEmbedding& page);

// Mean-pool each page, L2-normalize (zero pools stay zero), dot product.
// Symmetric, range [-1, 1].
double page_similarity(const PageRecord& a, const PageRecord& b);
double pooled_similarity(const MultiVectorEmbedding& a, const MultiVectorEmbedding& b);

// One value per page vector: the max dot product over query vectors.
// Feedstock for heatmap rendering.
std::vector<double> export_similarity_map(const MultiVectorEmbedding& query,
                                          const MultiVectorEmbedding& page);

// Binary index file, layout:
//   "MABQ" | u32 version=1 | u32 dim | u32 page_count |
//   per page: u32+bytes page_id | u32+bytes doc_id | u32 page_number |
//             u32 vector_count | vector_count*dim float32
// All integers and floats little-endian.
void save_index(const EmbeddingIndex& index, const std::string& path);
EmbeddingIndex load_index(const std::string& path);

// In-memory codec used by save/load; exposed for byte-identity tests.
std::vector<std::uint8_t> serialize_index(const EmbeddingIndex& index);
EmbeddingIndex deserialize_index(const std::vector<std::uint8_t>& bytes);

}  // namespace mabdqa

#include "mabdqa/embedding.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace mabdqa {

MultiVectorEmbedding::MultiVectorEmbedding(std::size_t count, std::size_t dim)
    : count_(count), dim_(dim), data_(count * dim, 0.0f) {}

MultiVectorEmbedding::MultiVectorEmbedding(std::size_t count, std::size_t dim,
                                           std::vector<float> data)
    : count_(count), dim_(dim), data_(std::move(data)) {
    if (data_.size() != count_ * dim_) {
        throw ContractError("embedding data size does not match count*dim");
    }
}

void MultiVectorEmbedding::validate() const {
    if (count_ < 1 || dim_ < 1) {
        throw ContractError("embedding must have count >= 1 and dim >= 1");
    }
    for (float v : data_) {
        if (!std::isfinite(v)) throw ContractError("embedding contains non-finite entry");
    }
}

void EmbeddingIndex::add_page(PageRecord record) {
    if (dim_ == 0) {
        dim_ = static_cast<std::uint32_t>(record.embedding.dim());
    }
    if (record.embedding.dim() != dim_) {
        throw ContractError("page embedding dim " + std::to_string(record.embedding.dim()) +
                            " does not match index dim " + std::to_string(dim_));
    }
    if (by_id_.count(record.page_id)) {
        throw ContractError("duplicate page_id: " + record.page_id);
    }
    by_id_.emplace(record.page_id, pages_.size());
    pages_.push_back(std::move(record));
}

const PageRecord* EmbeddingIndex::find(const std::string& page_id) const {
    auto it = by_id_.find(page_id);
    return it == by_id_.end() ? nullptr : &pages_[it->second];
}

int EmbeddingIndex::position(const std::string& page_id) const {
    auto it = by_id_.find(page_id);
    return it == by_id_.end() ? -1 : static_cast<int>(it->second);
}

bool EmbeddingIndex::operator==(const EmbeddingIndex& other) const {
    return dim_ == other.dim_ && pages_ == other.pages_;
}

double late_interaction(const MultiVectorEmbedding& query, const MultiVectorEmbedding& page) {
    if (query.dim() != page.dim()) {
        throw ContractError("late_interaction: query dim " + std::to_string(query.dim()) +
                            " != page dim " + std::to_string(page.dim()));
    }
    const std::size_t d = query.dim();
    double total = 0.0;
    for (std::size_t k = 0; k < query.count(); ++k) {
        const float* q = query.row(k);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < page.count(); ++l) {
            const float* p = page.row(l);
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dot += static_cast<double>(q[j]) * static_cast<double>(p[j]);
            }
            if (dot > best) best = dot;
        }
        total += best;
    }
    return total;
}

double normalized_li(const MultiVectorEmbedding& query, const MultiVectorEmbedding& page) {
    if (query.count() == 0) return 0.0;
    return late_interaction(query, page) / static_cast<double>(query.count());
}

namespace {

std::vector<double> pooled_unit(const MultiVectorEmbedding& e) {
    std::vector<double> pooled(e.dim(), 0.0);
    for (std::size_t i = 0; i < e.count(); ++i) {
        const float* r = e.row(i);
        for (std::size_t j = 0; j < e.dim(); ++j) pooled[j] += r[j];
    }
    const double inv_n = e.count() > 0 ? 1.0 / static_cast<double>(e.count()) : 0.0;
    double norm_sq = 0.0;
    for (double& v : pooled) {
        v *= inv_n;
        norm_sq += v * v;
    }
    if (norm_sq > 0.0) {
        const double inv_norm = 1.0 / std::sqrt(norm_sq);
        for (double& v : pooled) v *= inv_norm;
    }
    return pooled;
}

}  // namespace

double pooled_similarity(const MultiVectorEmbedding& a, const MultiVectorEmbedding& b) {
    if (a.dim() != b.dim()) {
        throw ContractError("page_similarity: dimension mismatch");
    }
    const auto pa = pooled_unit(a);
    const auto pb = pooled_unit(b);
    double dot = 0.0;
    for (std::size_t j = 0; j < pa.size(); ++j) dot += pa[j] * pb[j];
    if (dot > 1.0) dot = 1.0;
    if (dot < -1.0) dot = -1.0;
    return dot;
}

double page_similarity(const PageRecord& a, const PageRecord& b) {
    return pooled_similarity(a.embedding, b.embedding);
}

std::vector<double> export_similarity_map(const MultiVectorEmbedding& query,
                                          const MultiVectorEmbedding& page) {
    if (query.dim() != page.dim()) {
        throw ContractError("export_similarity_map: dimension mismatch");
    }
    const std::size_t d = query.dim();
    std::vector<double> per_patch(page.count(), 0.0);
    for (std::size_t l = 0; l < page.count(); ++l) {
        const float* p = page.row(l);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < query.count(); ++k) {
            const float* q = query.row(k);
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dot += static_cast<double>(q[j]) * static_cast<double>(p[j]);
            }
            if (dot > best) best = dot;
        }
        per_patch[l] = best;
    }
    return per_patch;
}

namespace {

constexpr char kMagic[4] = {'M', 'A', 'B', 'Q'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u32(out, bits);
}

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint32_t read_u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(bytes_[pos_]) |
                          (static_cast<std::uint32_t>(bytes_[pos_ + 1]) << 8) |
                          (static_cast<std::uint32_t>(bytes_[pos_ + 2]) << 16) |
                          (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
        pos_ += 4;
        return v;
    }

    std::string read_string() {
        const std::uint32_t len = read_u32();
        need(len);
        std::string s(bytes_.begin() + static_cast<long>(pos_),
                      bytes_.begin() + static_cast<long>(pos_ + len));
        pos_ += len;
        return s;
    }

    float read_f32() {
        const std::uint32_t bits = read_u32();
        float v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    void read_magic() {
        need(4);
        if (std::memcmp(bytes_.data() + pos_, kMagic, 4) != 0) {
            throw BadMagicError("index file does not start with MABQ magic");
        }
        pos_ += 4;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw TruncatedError("index payload truncated at byte " + std::to_string(pos_));
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_index(const EmbeddingIndex& index) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kFormatVersion);
    put_u32(out, index.dim());
    put_u32(out, static_cast<std::uint32_t>(index.size()));
    for (const PageRecord& page : index.pages()) {
        put_string(out, page.page_id);
        put_string(out, page.doc_id);
        put_u32(out, page.page_number);
        put_u32(out, static_cast<std::uint32_t>(page.embedding.count()));
        for (float v : page.embedding.data()) put_f32(out, v);
    }
    return out;
}

EmbeddingIndex deserialize_index(const std::vector<std::uint8_t>& bytes) {
    ByteReader reader(bytes);
    reader.read_magic();
    const std::uint32_t version = reader.read_u32();
    if (version != kFormatVersion) {
        throw BadVersionError("unsupported index format version " + std::to_string(version));
    }
    const std::uint32_t dim = reader.read_u32();
    const std::uint32_t page_count = reader.read_u32();
    EmbeddingIndex index(dim);
    for (std::uint32_t i = 0; i < page_count; ++i) {
        PageRecord page;
        page.page_id = reader.read_string();
        page.doc_id = reader.read_string();
        page.page_number = reader.read_u32();
        const std::uint32_t vectors = reader.read_u32();
        std::vector<float> data(static_cast<std::size_t>(vectors) * dim);
        for (float& v : data) v = reader.read_f32();
        page.embedding = MultiVectorEmbedding(vectors, dim, std::move(data));
        index.add_page(std::move(page));
    }
    return index;
}

void save_index(const EmbeddingIndex& index, const std::string& path) {
    const auto bytes = serialize_index(index);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

EmbeddingIndex load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path);
    return deserialize_index(bytes);
}

}  // namespace mabdqa

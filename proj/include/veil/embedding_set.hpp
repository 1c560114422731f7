#ifndef VEIL_EMBEDDING_SET_HPP
#define VEIL_EMBEDDING_SET_HPP

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace veil {

// Id-indexed collection of fixed-dimension vectors, row-major. Ids are
// unique and every entry is finite.
class EmbeddingSet {
public:
    EmbeddingSet(std::vector<std::string> ids, std::vector<double> row_major, int dim,
                 std::string provider = "");

    int count() const { return static_cast<int>(ids_.size()); }
    int dim() const { return dim_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::string& provider() const { return provider_; }

    std::span<const double> row(int i) const {
        return {data_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
    }
    const std::vector<double>& data() const { return data_; }

    // Index of an id, or -1.
    int find(const std::string& id) const;

private:
    std::vector<std::string> ids_;
    std::vector<double> data_;
    int dim_;
    std::string provider_;
};

// Binary container shared by embedding sets and identity pools: a magic
// tag, a JSON header (ids, dimension, provider, optional normalization
// flag and source hash) and the row-major little-endian float32 matrix.
// Serialization is deterministic: equal content gives equal bytes.
struct EmbeddingFileMeta {
    std::string container = "embedding_set";  // or "identity_pool"
    bool normalized = false;
    std::string source_hash;
};

void save_embedding_file(const std::filesystem::path& path, const EmbeddingSet& set,
                         const EmbeddingFileMeta& meta = {});
EmbeddingSet load_embedding_file(const std::filesystem::path& path,
                                 EmbeddingFileMeta* meta_out = nullptr);

}  // namespace veil

#endif  // VEIL_EMBEDDING_SET_HPP

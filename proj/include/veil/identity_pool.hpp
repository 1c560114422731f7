#ifndef VEIL_IDENTITY_POOL_HPP
#define VEIL_IDENTITY_POOL_HPP

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "veil/embedding_set.hpp"

namespace veil {

// Synthetic identity pool used for face swapping. Rows are stored
// L2-normalized; all distance queries run on the unit sphere so the swap
// threshold is independent of the encoder's scale. Immutable after build;
// concurrent queries are safe.
class IdentityPool {
public:
    int count() const { return static_cast<int>(ids_.size()); }
    int dim() const { return dim_; }
    const std::vector<std::string>& ids() const { return ids_; }
    std::span<const double> row(int i) const {
        return {data_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
    }
    // Index of an id, or -1.
    int find_index(const std::string& id) const {
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (ids_[i] == id) return static_cast<int>(i);
        }
        return -1;
    }
    const std::string& source_hash() const { return source_hash_; }

    friend IdentityPool build_pool(const EmbeddingSet& embeddings);
    friend IdentityPool load_pool(const std::filesystem::path& path);

private:
    std::vector<std::string> ids_;
    std::vector<double> data_;  // normalized rows
    int dim_ = 0;
    std::string source_hash_;
};

// Validates and normalizes the embeddings (zero rows are rejected).
IdentityPool build_pool(const EmbeddingSet& embeddings);

void save_pool(const std::filesystem::path& path, const IdentityPool& pool);
IdentityPool load_pool(const std::filesystem::path& path);

struct SwapResult {
    std::string query_id;
    std::string chosen_id;
    double distance = 0.0;
};

// Nearest pool member at Euclidean distance >= min_dist between the
// L2-normalized query and the normalized pool rows. Ties break on the
// lexicographically smallest id. Throws NoCandidateError if the constraint
// is unsatisfiable.
SwapResult find_swap(std::span<const double> query, const IdentityPool& pool,
                     double min_dist = 1.0, const std::string& query_id = "");

// Two-token conditioning [original, swapped] for the image-prompt slot.
std::vector<std::vector<double>> assemble_conditioning(std::span<const double> original_embed,
                                                       std::span<const double> swapped_embed);

}  // namespace veil

#endif  // VEIL_IDENTITY_POOL_HPP

#include "veil/identity_pool.hpp"

#include <cmath>

#include "veil/errors.hpp"
#include "veil/hashing.hpp"

namespace veil {

namespace {

void normalize_row(double* row, int dim, const std::string& id) {
    double norm2 = 0.0;
    for (int d = 0; d < dim; ++d) norm2 += row[d] * row[d];
    if (!(norm2 > 0.0)) {
        throw DomainError("identity pool: zero embedding for id '" + id + "'");
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (int d = 0; d < dim; ++d) row[d] *= inv;
}

}  // namespace

IdentityPool build_pool(const EmbeddingSet& embeddings) {
    IdentityPool pool;
    pool.ids_ = embeddings.ids();
    pool.data_ = embeddings.data();
    pool.dim_ = embeddings.dim();
    for (int i = 0; i < pool.count(); ++i) {
        normalize_row(pool.data_.data() + static_cast<std::size_t>(i) * pool.dim_, pool.dim_,
                      pool.ids_[i]);
    }
    pool.source_hash_ = to_hex(fnv1a64(embeddings.data().data(),
                                       embeddings.data().size() * sizeof(double)));
    return pool;
}

void save_pool(const std::filesystem::path& path, const IdentityPool& pool) {
    std::vector<double> rows;
    rows.reserve(static_cast<std::size_t>(pool.count()) * pool.dim());
    for (int i = 0; i < pool.count(); ++i) {
        auto r = pool.row(i);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    EmbeddingSet set(pool.ids(), std::move(rows), pool.dim(), "identity_pool");
    EmbeddingFileMeta meta;
    meta.container = "identity_pool";
    meta.normalized = true;
    meta.source_hash = pool.source_hash();
    save_embedding_file(path, set, meta);
}

IdentityPool load_pool(const std::filesystem::path& path) {
    EmbeddingFileMeta meta;
    EmbeddingSet set = load_embedding_file(path, &meta);
    if (meta.container != "identity_pool") {
        throw IoError("not an identity pool file: " + path.string());
    }
    IdentityPool pool;
    pool.ids_ = set.ids();
    pool.data_ = set.data();
    pool.dim_ = set.dim();
    pool.source_hash_ = meta.source_hash;
    if (!meta.normalized) {
        for (int i = 0; i < pool.count(); ++i) {
            normalize_row(pool.data_.data() + static_cast<std::size_t>(i) * pool.dim_, pool.dim_,
                          pool.ids_[i]);
        }
    }
    return pool;
}

SwapResult find_swap(std::span<const double> query, const IdentityPool& pool, double min_dist,
                     const std::string& query_id) {
    if (pool.count() == 0) throw DomainError("find_swap: empty pool");
    if (static_cast<int>(query.size()) != pool.dim()) {
        throw ContractViolation("find_swap: query dimension " + std::to_string(query.size()) +
                                " does not match pool dimension " + std::to_string(pool.dim()));
    }
    if (!(min_dist >= 0.0)) throw DomainError("find_swap: min_dist must be >= 0");

    double qnorm2 = 0.0;
    for (double v : query) qnorm2 += v * v;
    if (!(qnorm2 > 0.0)) throw DomainError("find_swap: zero query vector");
    const double qinv = 1.0 / std::sqrt(qnorm2);

    int best = -1;
    double best_dist = 0.0;
    for (int i = 0; i < pool.count(); ++i) {
        const auto row = pool.row(i);
        double dot = 0.0;
        for (int d = 0; d < pool.dim(); ++d) dot += query[d] * qinv * row[d];
        // distance between unit vectors; clamp the radicand against rounding
        const double dist = std::sqrt(std::max(0.0, 2.0 - 2.0 * dot));
        if (dist < min_dist) continue;
        if (best < 0 || dist < best_dist ||
            (dist == best_dist && pool.ids()[i] < pool.ids()[best])) {
            best = i;
            best_dist = dist;
        }
    }
    if (best < 0) {
        throw NoCandidateError("find_swap: no pool member at distance >= " +
                               std::to_string(min_dist));
    }
    return SwapResult{query_id, pool.ids()[best], best_dist};
}

std::vector<std::vector<double>> assemble_conditioning(std::span<const double> original_embed,
                                                       std::span<const double> swapped_embed) {
    if (original_embed.empty() || swapped_embed.empty() ||
        original_embed.size() != swapped_embed.size()) {
        throw ContractViolation("assemble_conditioning: embeddings must share a nonzero size");
    }
    return {std::vector<double>(original_embed.begin(), original_embed.end()),
            std::vector<double>(swapped_embed.begin(), swapped_embed.end())};
}

}  // namespace veil

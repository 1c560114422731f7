#include "veil/embedding_set.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "veil/errors.hpp"

namespace veil {

EmbeddingSet::EmbeddingSet(std::vector<std::string> ids, std::vector<double> row_major, int dim,
                           std::string provider)
    : ids_(std::move(ids)), data_(std::move(row_major)), dim_(dim), provider_(std::move(provider)) {
    if (ids_.empty()) throw DomainError("EmbeddingSet: empty");
    if (dim_ <= 0) throw DomainError("EmbeddingSet: dimension must be positive");
    if (data_.size() != ids_.size() * static_cast<std::size_t>(dim_)) {
        throw DomainError("EmbeddingSet: data size does not match count * dim");
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : ids_) {
        if (!seen.insert(id).second) throw DomainError("EmbeddingSet: duplicate id '" + id + "'");
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw DomainError("EmbeddingSet: non-finite entry");
    }
}

int EmbeddingSet::find(const std::string& id) const {
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (ids_[i] == id) return static_cast<int>(i);
    }
    return -1;
}

namespace {
constexpr char kMagic[4] = {'V', 'E', 'M', 'B'};
}

void save_embedding_file(const std::filesystem::path& path, const EmbeddingSet& set,
                         const EmbeddingFileMeta& meta) {
    nlohmann::json header{
        {"container", meta.container}, {"version", 1},       {"count", set.count()},
        {"dim", set.dim()},            {"ids", set.ids()},   {"provider", set.provider()},
        {"dtype", "float32"},          {"normalized", meta.normalized},
        {"source_hash", meta.source_hash},
    };
    const std::string header_text = header.dump();

    const auto tmp = path.string() + ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kMagic, 4);
    const std::uint32_t len = static_cast<std::uint32_t>(header_text.size());
    std::uint8_t len_le[4] = {static_cast<std::uint8_t>(len & 0xff),
                              static_cast<std::uint8_t>((len >> 8) & 0xff),
                              static_cast<std::uint8_t>((len >> 16) & 0xff),
                              static_cast<std::uint8_t>((len >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(len_le), 4);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    std::vector<float> raw(set.data().size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(set.data()[i]);
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
    out.close();
    if (!out) throw IoError("short write: " + path.string());
    std::filesystem::rename(tmp, path);
}

EmbeddingSet load_embedding_file(const std::filesystem::path& path, EmbeddingFileMeta* meta_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("not an embedding container: " + path.string());
    }
    std::uint8_t len_le[4];
    in.read(reinterpret_cast<char*>(len_le), 4);
    if (in.gcount() != 4) throw IoError("truncated header: " + path.string());
    const std::uint32_t len = static_cast<std::uint32_t>(len_le[0]) |
                              (static_cast<std::uint32_t>(len_le[1]) << 8) |
                              (static_cast<std::uint32_t>(len_le[2]) << 16) |
                              (static_cast<std::uint32_t>(len_le[3]) << 24);
    std::string header_text(len, '\0');
    in.read(header_text.data(), len);
    if (static_cast<std::uint32_t>(in.gcount()) != len) {
        throw IoError("truncated header: " + path.string());
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad container header: ") + e.what());
    }
    if (header.value("version", 0) != 1 || header.value("dtype", "") != "float32") {
        throw IoError("unsupported container version in " + path.string());
    }
    const int count = header.value("count", 0);
    const int dim = header.value("dim", 0);
    auto ids = header.value("ids", std::vector<std::string>{});
    if (count <= 0 || dim <= 0 || static_cast<int>(ids.size()) != count) {
        throw IoError("inconsistent container header in " + path.string());
    }
    std::vector<float> raw(static_cast<std::size_t>(count) * dim);
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != raw.size() * sizeof(float)) {
        throw IoError("truncated embedding data in " + path.string());
    }
    std::vector<double> data(raw.begin(), raw.end());
    if (meta_out != nullptr) {
        meta_out->container = header.value("container", "embedding_set");
        meta_out->normalized = header.value("normalized", false);
        meta_out->source_hash = header.value("source_hash", "");
    }
    return EmbeddingSet(std::move(ids), std::move(data), dim, header.value("provider", ""));
}

}  // namespace veil

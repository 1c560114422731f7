#include "veil/annotators.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "veil/errors.hpp"
#include "veil/hashing.hpp"
#include "veil/rng.hpp"

namespace veil {

const ControlParams& ControlConfig::params_for(ControlKind kind) const {
    switch (kind) {
        case ControlKind::depth: return depth;
        case ControlKind::normal: return normal;
        case ControlKind::segmentation: return segmentation;
        case ControlKind::pose: return pose;
        case ControlKind::lineart: return lineart;
        default:
            throw DomainError(std::string("ControlConfig: no parameters for kind ") +
                              to_string(kind));
    }
}

std::vector<ControlSignal> extract_controls(
    const Image& image, const std::vector<std::shared_ptr<ExtractorAdapter>>& registry,
    const ControlConfig& config) {
    static constexpr ControlKind kOrder[] = {ControlKind::depth, ControlKind::normal,
                                             ControlKind::segmentation, ControlKind::pose,
                                             ControlKind::lineart};
    std::map<ControlKind, const ExtractorAdapter*> by_kind;
    for (const auto& adapter : registry) {
        if (!by_kind.emplace(adapter->kind(), adapter.get()).second) {
            throw ConfigError(std::string("extract_controls: duplicate extractor for kind ") +
                              to_string(adapter->kind()));
        }
    }
    std::vector<ControlSignal> out;
    for (ControlKind kind : kOrder) {
        auto it = by_kind.find(kind);
        if (it == by_kind.end()) continue;
        const ControlParams& p = config.params_for(kind);
        out.emplace_back(kind, it->second->extract(image), p.weight, p.cutoff_fraction);
    }
    return out;
}

std::vector<ControlSignal> extract_controls_cached(
    const Image& image, const std::vector<std::shared_ptr<ExtractorAdapter>>& registry,
    const ControlConfig& config, const AnnotationCache* cache, std::uint64_t content_hash) {
    if (cache == nullptr) return extract_controls(image, registry, config);

    static constexpr ControlKind kOrder[] = {ControlKind::depth, ControlKind::normal,
                                             ControlKind::segmentation, ControlKind::pose,
                                             ControlKind::lineart};
    std::map<ControlKind, const ExtractorAdapter*> by_kind;
    for (const auto& adapter : registry) {
        if (!by_kind.emplace(adapter->kind(), adapter.get()).second) {
            throw ConfigError(std::string("extract_controls: duplicate extractor for kind ") +
                              to_string(adapter->kind()));
        }
    }
    std::vector<ControlSignal> out;
    for (ControlKind kind : kOrder) {
        auto it = by_kind.find(kind);
        if (it == by_kind.end()) continue;
        const ExtractorAdapter& extractor = *it->second;
        auto cached = cache->load(content_hash, kind, extractor.version());
        if (!cached.has_value()) {
            cache->store(content_hash, kind, extractor.version(), extractor.extract(image));
            cached = cache->load(content_hash, kind, extractor.version());
            if (!cached.has_value()) {
                throw IoError("annotation cache: store/load round trip failed");
            }
        }
        const ControlParams& p = config.params_for(kind);
        out.emplace_back(kind, std::move(*cached), p.weight, p.cutoff_fraction);
    }
    return out;
}

ControlSignal identity_control(const Latent& latent) {
    return ControlSignal(ControlKind::identity_latent, latent.tensor(), 1.0, 1.0);
}

CaptionResult extract_caption(const Image& image, const CaptionerAdapter& captioner,
                              const TextEmbedderAdapter& embedder, std::string* warning) {
    std::string text;
    try {
        text = captioner.caption(image);
    } catch (const std::exception& e) {
        if (warning != nullptr) *warning = std::string("captioner failed: ") + e.what();
        text.clear();
    }
    return CaptionResult{text, embedder.embed(text, Polarity::positive)};
}

// --- toy extractors ---------------------------------------------------------

namespace {

class ToyDepth final : public ExtractorAdapter {
public:
    ControlKind kind() const override { return ControlKind::depth; }
    std::string version() const override { return "toy-1"; }
    Tensor extract(const Image& image) const override {
        const Image gray = image.grayscale();
        Tensor out(1, gray.height(), gray.width());
        for (int y = 0; y < gray.height(); ++y)
            for (int x = 0; x < gray.width(); ++x) out.at(0, y, x) = gray.at(0, y, x) / 255.0;
        return out;
    }
};

class ToyNormal final : public ExtractorAdapter {
public:
    ControlKind kind() const override { return ControlKind::normal; }
    std::string version() const override { return "toy-1"; }
    Tensor extract(const Image& image) const override {
        // Flat surface facing the camera: (0.5, 0.5, 1) in map units.
        Tensor out(3, image.height(), image.width());
        for (int y = 0; y < image.height(); ++y) {
            for (int x = 0; x < image.width(); ++x) {
                out.at(0, y, x) = 0.5;
                out.at(1, y, x) = 0.5;
                out.at(2, y, x) = 1.0;
            }
        }
        return out;
    }
};

class ToySegmentation final : public ExtractorAdapter {
public:
    ControlKind kind() const override { return ControlKind::segmentation; }
    std::string version() const override { return "toy-1"; }
    Tensor extract(const Image& image) const override {
        const Image gray = image.grayscale();
        Tensor out(1, gray.height(), gray.width());
        for (int y = 0; y < gray.height(); ++y) {
            for (int x = 0; x < gray.width(); ++x) {
                int band = static_cast<int>(gray.at(0, y, x) / 32.0);
                if (band > 7) band = 7;
                out.at(0, y, x) = band / 7.0;
            }
        }
        return out;
    }
};

class ToyPose final : public ExtractorAdapter {
public:
    ControlKind kind() const override { return ControlKind::pose; }
    std::string version() const override { return "toy-1"; }
    Tensor extract(const Image& image) const override {
        return Tensor(1, image.height(), image.width(), 0.0);
    }
};

class ToyLineart final : public ExtractorAdapter {
public:
    ControlKind kind() const override { return ControlKind::lineart; }
    std::string version() const override { return "toy-1"; }
    Tensor extract(const Image& image) const override {
        const Image gray = image.grayscale();
        const int h = gray.height();
        const int w = gray.width();
        Tensor out(1, h, w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double gx = (x + 1 < w ? gray.at(0, y, x + 1) : gray.at(0, y, x)) -
                                  gray.at(0, y, x);
                const double gy = (y + 1 < h ? gray.at(0, y + 1, x) : gray.at(0, y, x)) -
                                  gray.at(0, y, x);
                out.at(0, y, x) = std::min(1.0, std::hypot(gx, gy) / 255.0);
            }
        }
        return out;
    }
};

class ToyCaptioner final : public CaptionerAdapter {
public:
    std::string caption(const Image&) const override { return "a photo of a person"; }
};

class ToyTextEmbedder final : public TextEmbedderAdapter {
public:
    explicit ToyTextEmbedder(std::uint64_t seed) : seed_(seed) {}

    PromptEmbedding embed(const std::string& text, Polarity polarity) const override {
        std::vector<std::vector<double>> tokens;
        std::istringstream words(text);
        std::string word;
        while (words >> word) {
            Rng rng(splitmix64(seed_ ^ fnv1a64(word)));
            std::vector<double> v(kDim);
            for (double& e : v) e = rng.uniform(-1.0, 1.0);
            tokens.push_back(std::move(v));
        }
        if (tokens.empty()) {
            tokens.emplace_back(kDim, 0.0);  // empty template: one zero token
        }
        return PromptEmbedding(std::move(tokens), polarity);
    }

private:
    static constexpr int kDim = 16;
    std::uint64_t seed_;
};

}  // namespace

std::vector<std::shared_ptr<ExtractorAdapter>> toy_extractors() {
    return {std::make_shared<ToyDepth>(), std::make_shared<ToyNormal>(),
            std::make_shared<ToySegmentation>(), std::make_shared<ToyPose>(),
            std::make_shared<ToyLineart>()};
}

std::shared_ptr<CaptionerAdapter> make_toy_captioner() {
    return std::make_shared<ToyCaptioner>();
}

std::shared_ptr<TextEmbedderAdapter> make_toy_text_embedder(std::uint64_t seed) {
    return std::make_shared<ToyTextEmbedder>(seed);
}

// --- annotation cache --------------------------------------------------------

AnnotationCache::AnnotationCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path AnnotationCache::entry_base(std::uint64_t content_hash,
                                                  ControlKind kind) const {
    return dir_ / (to_hex(content_hash) + "_" + to_string(kind));
}

std::optional<Tensor> AnnotationCache::load(std::uint64_t content_hash, ControlKind kind,
                                            const std::string& version) const {
    const auto base = entry_base(content_hash, kind);
    const auto meta_path = base.string() + ".json";
    const auto blob_path = base.string() + ".bin";
    std::ifstream meta_in(meta_path);
    if (!meta_in) return std::nullopt;
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    if (meta.value("version", "") != version || meta.value("dtype", "") != "float32") {
        return std::nullopt;
    }
    const auto shape = meta.value("shape", std::vector<int>{});
    if (shape.size() != 3) return std::nullopt;

    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) return std::nullopt;
    Tensor t(shape[0], shape[1], shape[2]);
    std::vector<float> raw(t.size());
    blob.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (static_cast<std::size_t>(blob.gcount()) != raw.size() * sizeof(float)) return std::nullopt;
    for (std::size_t i = 0; i < raw.size(); ++i) t.data()[i] = raw[i];
    return t;
}

void AnnotationCache::store(std::uint64_t content_hash, ControlKind kind,
                            const std::string& version, const Tensor& tensor) const {
    const auto base = entry_base(content_hash, kind);
    nlohmann::json meta{{"kind", to_string(kind)},
                        {"shape", {tensor.channels(), tensor.height(), tensor.width()}},
                        {"version", version},
                        {"dtype", "float32"}};
    std::vector<float> raw(tensor.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(tensor.data()[i]);

    const auto blob_tmp = base.string() + ".bin.tmp";
    std::ofstream blob(blob_tmp, std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("AnnotationCache: cannot write " + blob_tmp);
    blob.write(reinterpret_cast<const char*>(raw.data()),
               static_cast<std::streamsize>(raw.size() * sizeof(float)));
    blob.close();
    std::filesystem::rename(blob_tmp, base.string() + ".bin");

    const auto meta_tmp = base.string() + ".json.tmp";
    std::ofstream meta_out(meta_tmp, std::ios::trunc);
    if (!meta_out) throw IoError("AnnotationCache: cannot write " + meta_tmp);
    meta_out << meta.dump(2) << "\n";
    meta_out.close();
    std::filesystem::rename(meta_tmp, base.string() + ".json");
}

}  // namespace veil

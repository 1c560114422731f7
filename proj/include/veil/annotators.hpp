#ifndef VEIL_ANNOTATORS_HPP
#define VEIL_ANNOTATORS_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "veil/diffusion.hpp"
#include "veil/guidance.hpp"
#include "veil/image.hpp"

namespace veil {

// Produces one spatial conditioning map from an image. Real annotators
// (depth nets, pose estimators, ...) plug in here; the toy extractors below
// are deterministic fixtures, not approximations of the real models.
class ExtractorAdapter {
public:
    virtual ~ExtractorAdapter() = default;
    virtual ControlKind kind() const = 0;
    virtual Tensor extract(const Image& image) const = 0;
    virtual std::string version() const = 0;  // cache key component
    virtual bool shareable() const { return true; }
};

class CaptionerAdapter {
public:
    virtual ~CaptionerAdapter() = default;
    virtual std::string caption(const Image& image) const = 0;
    virtual bool shareable() const { return true; }
};

class TextEmbedderAdapter {
public:
    virtual ~TextEmbedderAdapter() = default;
    virtual PromptEmbedding embed(const std::string& text, Polarity polarity) const = 0;
    virtual bool shareable() const { return true; }
};

// Per-kind weight and cutoff configuration for extract_controls.
struct ControlParams {
    double weight = 1.0;
    double cutoff_fraction = 1.0;
};

struct ControlConfig {
    ControlParams depth{0.5, 1.0};
    ControlParams normal{0.3, 1.0};
    ControlParams segmentation{0.3, 1.0};
    ControlParams pose{0.4, 1.0};
    ControlParams lineart{0.5, 0.5};

    const ControlParams& params_for(ControlKind kind) const;
};

// Runs every registered extractor and attaches the configured weights and
// cutoffs. Output order is fixed: depth, normal, segmentation, pose,
// lineart. At most one adapter per kind; duplicates throw ConfigError.
std::vector<ControlSignal> extract_controls(const Image& image,
                                            const std::vector<std::shared_ptr<ExtractorAdapter>>& registry,
                                            const ControlConfig& config);

class AnnotationCache;

// Cache-aware variant keyed by the caller's content hash. Tensors pass
// through the cache's float32 storage on both the cold and warm path, so
// runs agree bit-for-bit regardless of cache state. cache == nullptr falls
// back to plain extraction.
std::vector<ControlSignal> extract_controls_cached(
    const Image& image, const std::vector<std::shared_ptr<ExtractorAdapter>>& registry,
    const ControlConfig& config, const AnnotationCache* cache, std::uint64_t content_hash);

// Wraps the source latent as the identity (IDF) control. Weight 1 and no
// cutoff: its influence is modulated only through the anonymization scale.
ControlSignal identity_control(const Latent& latent);

struct CaptionResult {
    std::string text;
    PromptEmbedding embedding;  // positive polarity, at least one token
};

// Captions the image and embeds the text. A captioner failure falls back
// to the empty template and reports it through `warning`.
CaptionResult extract_caption(const Image& image, const CaptionerAdapter& captioner,
                              const TextEmbedderAdapter& embedder,
                              std::string* warning = nullptr);

// --- deterministic toy adapters -------------------------------------------

// depth: grayscale / 255. normal: constant 3-channel field. segmentation:
// intensity quantized into 8 bands. pose: zero map. lineart: normalized
// finite-difference edge magnitude.
std::vector<std::shared_ptr<ExtractorAdapter>> toy_extractors();

// Always "a photo of a person".
std::shared_ptr<CaptionerAdapter> make_toy_captioner();

// Seeded per-word hash vectors, dimension 16. Empty text embeds to a
// single zero token.
std::shared_ptr<TextEmbedderAdapter> make_toy_text_embedder(std::uint64_t seed);

// --- annotation cache ------------------------------------------------------

// Stores control tensors as float32 blobs keyed by image content hash,
// control kind and extractor version, with a JSON sidecar describing the
// entry. Loading returns values at float32 precision.
class AnnotationCache {
public:
    explicit AnnotationCache(std::filesystem::path dir);

    std::optional<Tensor> load(std::uint64_t content_hash, ControlKind kind,
                               const std::string& version) const;
    void store(std::uint64_t content_hash, ControlKind kind, const std::string& version,
               const Tensor& tensor) const;

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path entry_base(std::uint64_t content_hash, ControlKind kind) const;
    std::filesystem::path dir_;
};

}  // namespace veil

#endif  // VEIL_ANNOTATORS_HPP

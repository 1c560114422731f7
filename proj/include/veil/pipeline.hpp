#ifndef VEIL_PIPELINE_HPP
#define VEIL_PIPELINE_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "veil/annotators.hpp"
#include "veil/attributes.hpp"
#include "veil/config.hpp"
#include "veil/diffusion.hpp"
#include "veil/evaluation.hpp"
#include "veil/identity_pool.hpp"
#include "veil/toy_backend.hpp"

namespace veil {

// Everything pluggable the pipeline touches. Adapters declare their own
// shareability; the toy set is stateless and shared across workers.
struct AdapterSet {
    std::shared_ptr<DenoiserAdapter> denoiser;
    std::shared_ptr<AutoencoderAdapter> autoencoder;
    std::vector<std::shared_ptr<ExtractorAdapter>> extractors;
    std::shared_ptr<CaptionerAdapter> captioner;
    std::shared_ptr<TextEmbedderAdapter> text_embedder;
    std::shared_ptr<FaceDetectorAdapter> face_detector;
    std::shared_ptr<IdentityPool> pool;  // light variant only
};

AdapterSet make_toy_adapters(std::uint64_t seed);

struct SwapEntry {
    int face_index = 0;
    std::string chosen_id;
    double distance = 0.0;
    bool fallback = false;
};

struct ImageRecord {
    std::string id;
    std::string input_path;
    std::string input_hash;
    std::uint64_t seed = 0;
    std::string output;  // relative to the run output directory
    std::string status = "ok";
    std::string error;
    std::vector<std::string> warnings;
    std::optional<double> timing_ms;
    std::optional<std::array<double, 3>> guidance_weights;  // base
    std::optional<int> n_faces;                             // light
    std::vector<SwapEntry> swaps;                           // light
};

struct RunManifest {
    int schema_version = 1;
    std::string variant;
    std::string config_hash;
    std::uint64_t run_seed = 0;
    int n_inputs = 0;
    int n_ok = 0;
    int n_failed = 0;
    std::vector<ImageRecord> images;  // sorted by id, one per input

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
};

struct AnonymizeResult {
    Image image;
    ImageRecord record;
};

// Base flow: resize/pad to the working resolution, encode, extract the
// five spatial controls plus caption, attach the identity control and run
// the guided sampler at the configured anonymization scale.
AnonymizeResult anonymize_base(const Image& input, const PipelineConfig& config,
                               const AdapterSet& adapters, std::uint64_t image_seed,
                               StepTrace* trace = nullptr);

// Light flow: detect faces, build the 41-channel attribute map, swap each
// face identity against the pool and condition on the [original, swapped]
// token pairs. Captions are not used; guidance reduces to standard CFG.
AnonymizeResult anonymize_light(const Image& input, const PipelineConfig& config,
                                const AdapterSet& adapters, std::uint64_t image_seed,
                                StepTrace* trace = nullptr);

// Processes every input with bounded worker parallelism, writes images
// under out_dir/images and the manifest to out_dir/manifest.json
// (atomically). Per-image seeds derive from (run seed, content hash), so
// results do not depend on batch order or worker count.
RunManifest run_batch(const std::vector<std::filesystem::path>& inputs,
                      const PipelineConfig& config, const AdapterSet& adapters,
                      const std::filesystem::path& out_dir);

// Shared helpers (exposed for tests).
Image preprocess_to_resolution(const Image& input, int resolution);
Image restore_from_resolution(const Image& generated, int original_height, int original_width);

}  // namespace veil

#endif  // VEIL_PIPELINE_HPP

#ifndef VEIL_CONFIG_HPP
#define VEIL_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "veil/annotators.hpp"

namespace veil {

enum class Variant { base, light };
enum class SwapFallback { error, farthest };
enum class DualConditioning { pair, average };
enum class FailurePolicy { skip, abort };

// Full run configuration. Defaults depend on the variant: base runs 16
// steps at noise 0.9, light runs 30 steps at noise 0.6, both at 768.
// The canonical serialization below backs the config hash recorded in run
// manifests, so any field change is visible there.
struct PipelineConfig {
    int config_version = 1;
    Variant variant = Variant::base;

    double anonymization_scale = 1.0;  // base presets: 1.0 or 1.25
    double guidance_scale = 7.5;
    int steps = 16;
    double noise_strength = 0.9;
    int resolution = 768;

    double rho = 7.0;
    double sigma_min = 0.0292;
    double sigma_max = 14.6146;

    ControlConfig controls;
    double attribute_map_weight = 1.0;
    double attribute_map_cutoff = 1.0;

    std::string pool_path;
    double min_swap_distance = 1.0;
    SwapFallback swap_fallback = SwapFallback::error;
    DualConditioning dual_conditioning = DualConditioning::pair;

    std::string negative_prompt = "low quality, distorted, artifacts";

    std::uint64_t seed = 0;
    int workers = 1;
    FailurePolicy failure_policy = FailurePolicy::skip;
    std::string cache_dir;
    bool use_cache = false;
    bool record_timings = false;

    static PipelineConfig defaults_for(Variant variant);

    void validate() const;

    // Sorted key=value text covering every field; equal configs serialize
    // to equal text.
    std::string canonical() const;
    std::string hash() const;
};

const char* to_string(Variant v);
const char* to_string(SwapFallback v);
const char* to_string(DualConditioning v);
const char* to_string(FailurePolicy v);

// `key = value` lines, '#' comments. The variant key is applied first so
// the remaining keys override variant defaults. Unknown keys or malformed
// values throw ConfigError naming the offending line.
PipelineConfig parse_config_file(const std::filesystem::path& path);
PipelineConfig parse_config_text(const std::string& text);

// Applies one key/value pair; shared by the file parser and CLI overrides.
void apply_config_entry(PipelineConfig& config, const std::string& key, const std::string& value);

}  // namespace veil

#endif  // VEIL_CONFIG_HPP

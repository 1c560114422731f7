#include "veil/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "veil/errors.hpp"
#include "veil/hashing.hpp"

namespace veil {

const char* to_string(Variant v) { return v == Variant::base ? "base" : "light"; }
const char* to_string(SwapFallback v) {
    return v == SwapFallback::error ? "error" : "farthest";
}
const char* to_string(DualConditioning v) {
    return v == DualConditioning::pair ? "pair" : "average";
}
const char* to_string(FailurePolicy v) { return v == FailurePolicy::skip ? "skip" : "abort"; }

PipelineConfig PipelineConfig::defaults_for(Variant variant) {
    PipelineConfig c;
    c.variant = variant;
    if (variant == Variant::light) {
        c.steps = 30;
        c.noise_strength = 0.6;
        c.anonymization_scale = 1.0;  // light has no identity control branch
    }
    return c;
}

void PipelineConfig::validate() const {
    if (config_version != 1) throw ConfigError("config: unsupported config_version");
    if (anonymization_scale < 0.0) throw ConfigError("config: anonymization_scale must be >= 0");
    if (guidance_scale <= 0.0) throw ConfigError("config: guidance_scale must be > 0");
    if (steps < 1) throw ConfigError("config: steps must be >= 1");
    if (!(noise_strength > 0.0 && noise_strength <= 1.0)) {
        throw ConfigError("config: noise_strength must be in (0, 1]");
    }
    if (resolution < 8 || resolution % 8 != 0) {
        throw ConfigError("config: resolution must be a positive multiple of 8");
    }
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min) || !(rho > 0.0)) {
        throw ConfigError("config: sigma schedule parameters out of range");
    }
    if (min_swap_distance < 0.0) throw ConfigError("config: min_swap_distance must be >= 0");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    auto check_params = [](const char* name, const ControlParams& p) {
        if (!(p.weight >= 0.0 && p.weight <= 1.0)) {
            throw ConfigError(std::string("config: control.") + name + ".weight outside [0, 1]");
        }
        if (!(p.cutoff_fraction > 0.0 && p.cutoff_fraction <= 1.0)) {
            throw ConfigError(std::string("config: control.") + name + ".cutoff outside (0, 1]");
        }
    };
    check_params("depth", controls.depth);
    check_params("normal", controls.normal);
    check_params("segmentation", controls.segmentation);
    check_params("pose", controls.pose);
    check_params("lineart", controls.lineart);
    check_params("attribute_map", ControlParams{attribute_map_weight, attribute_map_cutoff});
    if (variant == Variant::light && pool_path.empty()) {
        throw ConfigError("config: light variant requires pool_path");
    }
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string PipelineConfig::canonical() const {
    // std::map keeps the output key-sorted.
    std::map<std::string, std::string> kv;
    kv["config_version"] = std::to_string(config_version);
    kv["variant"] = to_string(variant);
    kv["anonymization_scale"] = fmt_double(anonymization_scale);
    kv["guidance_scale"] = fmt_double(guidance_scale);
    kv["steps"] = std::to_string(steps);
    kv["noise_strength"] = fmt_double(noise_strength);
    kv["resolution"] = std::to_string(resolution);
    kv["rho"] = fmt_double(rho);
    kv["sigma_min"] = fmt_double(sigma_min);
    kv["sigma_max"] = fmt_double(sigma_max);
    kv["control.depth.weight"] = fmt_double(controls.depth.weight);
    kv["control.depth.cutoff"] = fmt_double(controls.depth.cutoff_fraction);
    kv["control.normal.weight"] = fmt_double(controls.normal.weight);
    kv["control.normal.cutoff"] = fmt_double(controls.normal.cutoff_fraction);
    kv["control.segmentation.weight"] = fmt_double(controls.segmentation.weight);
    kv["control.segmentation.cutoff"] = fmt_double(controls.segmentation.cutoff_fraction);
    kv["control.pose.weight"] = fmt_double(controls.pose.weight);
    kv["control.pose.cutoff"] = fmt_double(controls.pose.cutoff_fraction);
    kv["control.lineart.weight"] = fmt_double(controls.lineart.weight);
    kv["control.lineart.cutoff"] = fmt_double(controls.lineart.cutoff_fraction);
    kv["control.attribute_map.weight"] = fmt_double(attribute_map_weight);
    kv["control.attribute_map.cutoff"] = fmt_double(attribute_map_cutoff);
    kv["pool_path"] = pool_path;
    kv["min_swap_distance"] = fmt_double(min_swap_distance);
    kv["swap_fallback"] = to_string(swap_fallback);
    kv["dual_conditioning"] = to_string(dual_conditioning);
    kv["negative_prompt"] = negative_prompt;
    kv["seed"] = std::to_string(seed);
    kv["workers"] = std::to_string(workers);
    kv["failure_policy"] = to_string(failure_policy);
    kv["cache_dir"] = cache_dir;
    kv["use_cache"] = use_cache ? "true" : "false";
    kv["record_timings"] = record_timings ? "true" : "false";

    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += "=";
        out += v;
        out += "\n";
    }
    return out;
}

std::string PipelineConfig::hash() const { return to_hex(fnv1a64(canonical())); }

namespace {

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config: key '" + key + "' expects true/false, got '" + value + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

ControlParams* control_slot(PipelineConfig& c, const std::string& name) {
    if (name == "depth") return &c.controls.depth;
    if (name == "normal") return &c.controls.normal;
    if (name == "segmentation") return &c.controls.segmentation;
    if (name == "pose") return &c.controls.pose;
    if (name == "lineart") return &c.controls.lineart;
    return nullptr;
}

}  // namespace

void apply_config_entry(PipelineConfig& c, const std::string& key, const std::string& value) {
    if (key == "config_version") {
        c.config_version = static_cast<int>(parse_int(key, value));
    } else if (key == "variant") {
        if (value == "base") {
            c.variant = Variant::base;
        } else if (value == "light") {
            c.variant = Variant::light;
        } else {
            throw ConfigError("config: variant must be 'base' or 'light', got '" + value + "'");
        }
    } else if (key == "anonymization_scale") {
        c.anonymization_scale = parse_double(key, value);
    } else if (key == "guidance_scale") {
        c.guidance_scale = parse_double(key, value);
    } else if (key == "steps") {
        c.steps = static_cast<int>(parse_int(key, value));
    } else if (key == "noise_strength") {
        c.noise_strength = parse_double(key, value);
    } else if (key == "resolution") {
        c.resolution = static_cast<int>(parse_int(key, value));
    } else if (key == "rho") {
        c.rho = parse_double(key, value);
    } else if (key == "sigma_min") {
        c.sigma_min = parse_double(key, value);
    } else if (key == "sigma_max") {
        c.sigma_max = parse_double(key, value);
    } else if (key == "pool_path") {
        c.pool_path = value;
    } else if (key == "min_swap_distance") {
        c.min_swap_distance = parse_double(key, value);
    } else if (key == "swap_fallback") {
        if (value == "error") {
            c.swap_fallback = SwapFallback::error;
        } else if (value == "farthest") {
            c.swap_fallback = SwapFallback::farthest;
        } else {
            throw ConfigError("config: swap_fallback must be 'error' or 'farthest'");
        }
    } else if (key == "dual_conditioning") {
        if (value == "pair") {
            c.dual_conditioning = DualConditioning::pair;
        } else if (value == "average") {
            c.dual_conditioning = DualConditioning::average;
        } else {
            throw ConfigError("config: dual_conditioning must be 'pair' or 'average'");
        }
    } else if (key == "negative_prompt") {
        c.negative_prompt = value;
    } else if (key == "seed") {
        c.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "workers") {
        c.workers = static_cast<int>(parse_int(key, value));
    } else if (key == "failure_policy") {
        if (value == "skip") {
            c.failure_policy = FailurePolicy::skip;
        } else if (value == "abort") {
            c.failure_policy = FailurePolicy::abort;
        } else {
            throw ConfigError("config: failure_policy must be 'skip' or 'abort'");
        }
    } else if (key == "cache_dir") {
        c.cache_dir = value;
    } else if (key == "use_cache") {
        c.use_cache = parse_bool(key, value);
    } else if (key == "record_timings") {
        c.record_timings = parse_bool(key, value);
    } else if (key.starts_with("control.")) {
        const auto rest = key.substr(8);
        const auto dot = rest.find('.');
        if (dot == std::string::npos) throw ConfigError("config: unknown key '" + key + "'");
        const std::string name = rest.substr(0, dot);
        const std::string field = rest.substr(dot + 1);
        if (name == "attribute_map") {
            if (field == "weight") {
                c.attribute_map_weight = parse_double(key, value);
            } else if (field == "cutoff") {
                c.attribute_map_cutoff = parse_double(key, value);
            } else {
                throw ConfigError("config: unknown key '" + key + "'");
            }
            return;
        }
        ControlParams* slot = control_slot(c, name);
        if (slot == nullptr) throw ConfigError("config: unknown control kind in key '" + key + "'");
        if (field == "weight") {
            slot->weight = parse_double(key, value);
        } else if (field == "cutoff") {
            slot->cutoff_fraction = parse_double(key, value);
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

PipelineConfig parse_config_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(line_no) +
                              " is not a 'key = value' entry");
        }
        entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }

    // Variant first: it selects the defaults the other keys override.
    Variant variant = Variant::base;
    for (const auto& [k, v] : entries) {
        if (k == "variant") {
            PipelineConfig probe;
            apply_config_entry(probe, k, v);
            variant = probe.variant;
        }
    }
    PipelineConfig config = PipelineConfig::defaults_for(variant);
    for (const auto& [k, v] : entries) {
        apply_config_entry(config, k, v);
    }
    return config;
}

PipelineConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str());
}

}  // namespace veil

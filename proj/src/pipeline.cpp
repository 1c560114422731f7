#include "veil/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "veil/errors.hpp"
#include "veil/hashing.hpp"

namespace veil {

AdapterSet make_toy_adapters(std::uint64_t seed) {
    AdapterSet set;
    set.denoiser = make_toy_denoiser(seed);
    set.autoencoder = make_toy_autoencoder();
    set.extractors = toy_extractors();
    set.captioner = make_toy_captioner();
    set.text_embedder = make_toy_text_embedder(seed);
    set.face_detector = make_toy_face_detector();
    return set;
}

Image preprocess_to_resolution(const Image& input, int resolution) {
    Image rgb = input.to_rgb();
    if (rgb.height() == resolution && rgb.width() == resolution) return rgb;
    const int side = std::min(rgb.height(), rgb.width());
    const int new_h = static_cast<int>(std::lround(static_cast<double>(rgb.height()) * resolution / side));
    const int new_w = static_cast<int>(std::lround(static_cast<double>(rgb.width()) * resolution / side));
    return center_crop(resize_bilinear(rgb, std::max(new_h, resolution), std::max(new_w, resolution)),
                       resolution, resolution);
}

Image restore_from_resolution(const Image& generated, int original_height, int original_width) {
    const int side = std::min(original_height, original_width);
    if (generated.height() == side && generated.width() == side) return generated;
    return resize_bilinear(generated, side, side);
}

namespace {

Latent encode_checked(const AutoencoderAdapter& autoencoder, const Image& prepared,
                      int resolution) {
    Latent latent = autoencoder.encode(prepared);
    if (latent.height() != resolution / kLatentDownsample ||
        latent.width() != resolution / kLatentDownsample) {
        throw ContractViolation("pipeline: latent dimensions must equal resolution/8");
    }
    return latent;
}

std::vector<ControlSignal> pipeline_controls(const Image& prepared, const PipelineConfig& config,
                                             const AdapterSet& adapters) {
    if (!config.use_cache || config.cache_dir.empty()) {
        return extract_controls(prepared, adapters.extractors, config.controls);
    }
    AnnotationCache cache{std::filesystem::path(config.cache_dir)};
    const auto& raw = prepared.tensor().data();
    const std::uint64_t content_hash = fnv1a64(raw.data(), raw.size() * sizeof(double));
    return extract_controls_cached(prepared, adapters.extractors, config.controls, &cache,
                                   content_hash);
}

}  // namespace

AnonymizeResult anonymize_base(const Image& input, const PipelineConfig& config,
                               const AdapterSet& adapters, std::uint64_t image_seed,
                               StepTrace* trace) {
    if (config.variant != Variant::base) {
        throw ContractViolation("anonymize_base: config.variant must be base");
    }
    ImageRecord record;
    record.seed = image_seed;

    const Image prepared = preprocess_to_resolution(input, config.resolution);
    const Latent latent = encode_checked(*adapters.autoencoder, prepared, config.resolution);

    std::vector<ControlSignal> controls = pipeline_controls(prepared, config, adapters);
    controls.push_back(identity_control(latent));

    std::string caption_warning;
    const CaptionResult caption =
        extract_caption(prepared, *adapters.captioner, *adapters.text_embedder, &caption_warning);
    if (!caption_warning.empty()) record.warnings.push_back(caption_warning);
    PromptPair prompts{caption.embedding,
                       adapters.text_embedder->embed(config.negative_prompt, Polarity::negative)};

    const GuidanceWeights weights =
        compute_guidance_weights(config.anonymization_scale, config.guidance_scale);
    record.guidance_weights = {{weights.w0, weights.w1, weights.w2}};

    const SigmaSchedule schedule =
        karras_sigma_schedule(config.steps, config.sigma_min, config.sigma_max, config.rho);
    const Img2ImgInit init = img2img_init(latent, config.noise_strength, schedule, image_seed);

    const Latent final_latent = sample(*adapters.denoiser, init.x_start, init.start_step, schedule,
                                       controls, prompts, weights, EulerStepper{}, trace);

    Image out = restore_from_resolution(adapters.autoencoder->decode(final_latent), input.height(),
                                        input.width());
    return AnonymizeResult{std::move(out), std::move(record)};
}

AnonymizeResult anonymize_light(const Image& input, const PipelineConfig& config,
                                const AdapterSet& adapters, std::uint64_t image_seed,
                                StepTrace* trace) {
    if (config.variant != Variant::light) {
        throw ContractViolation("anonymize_light: config.variant must be light");
    }
    if (adapters.pool == nullptr) {
        throw ContractViolation("anonymize_light: identity pool not loaded");
    }
    ImageRecord record;
    record.seed = image_seed;

    const Image prepared = preprocess_to_resolution(input, config.resolution);
    const Latent latent = encode_checked(*adapters.autoencoder, prepared, config.resolution);

    std::string detector_warning;
    const std::vector<FaceRecord> faces =
        detect_faces(prepared, *adapters.face_detector, &detector_warning);
    if (!detector_warning.empty()) record.warnings.push_back(detector_warning);
    if (faces.empty()) record.warnings.push_back("no faces detected; swap skipped");
    record.n_faces = static_cast<int>(faces.size());

    const int map_h = config.resolution / kLatentDownsample;
    const int map_w = map_h;
    AttributeMap attr_map =
        encode_attribute_map(faces, config.resolution, config.resolution, map_h, map_w);
    std::vector<ControlSignal> controls;
    controls.emplace_back(ControlKind::attribute_map, std::move(attr_map.data),
                          config.attribute_map_weight, config.attribute_map_cutoff);

    std::vector<std::vector<double>> tokens;
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const FaceRecord& face = faces[i];
        SwapEntry entry;
        entry.face_index = static_cast<int>(i);
        std::span<const double> swapped;
        try {
            const SwapResult swap =
                find_swap(face.identity_embedding, *adapters.pool, config.min_swap_distance);
            entry.chosen_id = swap.chosen_id;
            entry.distance = swap.distance;
            swapped = adapters.pool->row(adapters.pool->find_index(swap.chosen_id));
        } catch (const NoCandidateError&) {
            if (config.swap_fallback == SwapFallback::error) throw;
            // farthest-member substitute
            int best = 0;
            double best_dist = -1.0;
            double qnorm = 0.0;
            for (double v : face.identity_embedding) qnorm += v * v;
            const double qinv = 1.0 / std::sqrt(qnorm);
            for (int r = 0; r < adapters.pool->count(); ++r) {
                auto row = adapters.pool->row(r);
                double dot = 0.0;
                for (int d = 0; d < adapters.pool->dim(); ++d)
                    dot += face.identity_embedding[d] * qinv * row[d];
                const double dist = std::sqrt(std::max(0.0, 2.0 - 2.0 * dot));
                if (dist > best_dist) {
                    best_dist = dist;
                    best = r;
                }
            }
            entry.chosen_id = adapters.pool->ids()[best];
            entry.distance = best_dist;
            entry.fallback = true;
            record.warnings.push_back("swap fallback to farthest member for face " +
                                      std::to_string(i));
            swapped = adapters.pool->row(best);
        }
        record.swaps.push_back(entry);

        auto pair = assemble_conditioning(face.identity_embedding, swapped);
        if (config.dual_conditioning == DualConditioning::average) {
            std::vector<double> avg(pair[0].size());
            for (std::size_t d = 0; d < avg.size(); ++d) avg[d] = 0.5 * (pair[0][d] + pair[1][d]);
            tokens.push_back(std::move(avg));
        } else {
            tokens.push_back(std::move(pair[0]));
            tokens.push_back(std::move(pair[1]));
        }
    }
    PromptPair prompts{PromptEmbedding(std::move(tokens), Polarity::positive),
                       PromptEmbedding{}};  // unconditional negative slot

    // No identity control branch in the light variant: a_s pins to 1 and the
    // combination reduces to standard classifier-free guidance.
    const GuidanceWeights weights = compute_guidance_weights(1.0, config.guidance_scale);
    record.guidance_weights = {{weights.w0, weights.w1, weights.w2}};

    const SigmaSchedule schedule =
        karras_sigma_schedule(config.steps, config.sigma_min, config.sigma_max, config.rho);
    const Img2ImgInit init = img2img_init(latent, config.noise_strength, schedule, image_seed);

    const Latent final_latent = sample(*adapters.denoiser, init.x_start, init.start_step, schedule,
                                       controls, prompts, weights, EulerStepper{}, trace);

    Image out = restore_from_resolution(adapters.autoencoder->decode(final_latent), input.height(),
                                        input.width());
    return AnonymizeResult{std::move(out), std::move(record)};
}

// --- manifest -----------------------------------------------------------------

namespace {

nlohmann::json record_to_json(const ImageRecord& r) {
    nlohmann::json j{
        {"id", r.id},         {"input", r.input_path}, {"input_hash", r.input_hash},
        {"seed", r.seed},     {"output", r.output},    {"status", r.status},
        {"warnings", r.warnings},
    };
    if (!r.error.empty()) j["error"] = r.error;
    if (r.timing_ms.has_value()) j["timing_ms"] = *r.timing_ms;
    if (r.guidance_weights.has_value()) j["guidance_weights"] = *r.guidance_weights;
    if (r.n_faces.has_value()) j["n_faces"] = *r.n_faces;
    if (!r.swaps.empty()) {
        nlohmann::json swaps = nlohmann::json::array();
        for (const SwapEntry& s : r.swaps) {
            swaps.push_back({{"face_index", s.face_index},
                             {"chosen_id", s.chosen_id},
                             {"distance", s.distance},
                             {"fallback", s.fallback}});
        }
        j["swaps"] = swaps;
    }
    return j;
}

ImageRecord record_from_json(const nlohmann::json& j) {
    ImageRecord r;
    r.id = j.at("id").get<std::string>();
    r.input_path = j.value("input", "");
    r.input_hash = j.value("input_hash", "");
    r.seed = j.value("seed", std::uint64_t{0});
    r.output = j.value("output", "");
    r.status = j.value("status", "ok");
    r.error = j.value("error", "");
    r.warnings = j.value("warnings", std::vector<std::string>{});
    if (j.contains("timing_ms")) r.timing_ms = j["timing_ms"].get<double>();
    if (j.contains("guidance_weights")) {
        r.guidance_weights = j["guidance_weights"].get<std::array<double, 3>>();
    }
    if (j.contains("n_faces")) r.n_faces = j["n_faces"].get<int>();
    if (j.contains("swaps")) {
        for (const auto& s : j["swaps"]) {
            r.swaps.push_back(SwapEntry{s.at("face_index").get<int>(),
                                        s.at("chosen_id").get<std::string>(),
                                        s.at("distance").get<double>(),
                                        s.value("fallback", false)});
        }
    }
    return r;
}

}  // namespace

std::string RunManifest::to_json() const {
    nlohmann::json images_json = nlohmann::json::array();
    for (const ImageRecord& r : images) images_json.push_back(record_to_json(r));
    nlohmann::json j{
        {"schema_version", schema_version},
        {"variant", variant},
        {"config_hash", config_hash},
        {"run_seed", run_seed},
        {"n_inputs", n_inputs},
        {"n_ok", n_ok},
        {"n_failed", n_failed},
        {"images", images_json},
    };
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("manifest: invalid JSON: ") + e.what());
    }
    RunManifest m;
    m.schema_version = j.value("schema_version", 1);
    m.variant = j.value("variant", "");
    m.config_hash = j.value("config_hash", "");
    m.run_seed = j.value("run_seed", std::uint64_t{0});
    m.n_inputs = j.value("n_inputs", 0);
    m.n_ok = j.value("n_ok", 0);
    m.n_failed = j.value("n_failed", 0);
    for (const auto& rec : j.value("images", nlohmann::json::array())) {
        m.images.push_back(record_from_json(rec));
    }
    return m;
}

// --- batch runner ----------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

RunManifest run_batch(const std::vector<std::filesystem::path>& inputs,
                      const PipelineConfig& config, const AdapterSet& adapters,
                      const std::filesystem::path& out_dir) {
    config.validate();
    std::vector<std::filesystem::path> sorted_inputs = inputs;
    std::sort(sorted_inputs.begin(), sorted_inputs.end());

    {
        std::set<std::string> stems;
        for (const auto& p : sorted_inputs) {
            if (!stems.insert(p.stem().string()).second) {
                throw ConfigError("run_batch: duplicate input id '" + p.stem().string() + "'");
            }
        }
    }

    std::filesystem::create_directories(out_dir / "images");

    std::vector<ImageRecord> records(sorted_inputs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> aborted{false};
    std::exception_ptr abort_error;
    std::mutex abort_mutex;

    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= sorted_inputs.size() || aborted.load()) break;
            const auto& path = sorted_inputs[i];
            ImageRecord record;
            record.id = path.stem().string();
            record.input_path = path.string();
            const auto started = std::chrono::steady_clock::now();
            try {
                const auto bytes = read_file_bytes(path);
                const std::uint64_t content_hash = fnv1a64(bytes.data(), bytes.size());
                record.input_hash = to_hex(content_hash);
                const std::uint64_t image_seed = derive_image_seed(config.seed, content_hash);
                const Image input = read_ppm(path);

                AnonymizeResult result =
                    config.variant == Variant::base
                        ? anonymize_base(input, config, adapters, image_seed)
                        : anonymize_light(input, config, adapters, image_seed);
                result.record.id = record.id;
                result.record.input_path = record.input_path;
                result.record.input_hash = record.input_hash;

                const std::string rel = "images/" + record.id + ".ppm";
                write_file_atomic(out_dir / rel, encode_ppm(result.image));
                result.record.output = rel;
                record = std::move(result.record);
            } catch (const std::exception& e) {
                record.status = "error";
                record.error = e.what();
                if (config.failure_policy == FailurePolicy::abort) {
                    std::lock_guard<std::mutex> lock(abort_mutex);
                    if (!abort_error) abort_error = std::current_exception();
                    aborted.store(true);
                }
            }
            if (config.record_timings) {
                record.timing_ms = std::chrono::duration<double, std::milli>(
                                       std::chrono::steady_clock::now() - started)
                                       .count();
            }
            records[i] = std::move(record);
        }
    };

    const int n_workers =
        std::max(1, std::min(config.workers, static_cast<int>(sorted_inputs.size())));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (abort_error) std::rethrow_exception(abort_error);

    RunManifest manifest;
    manifest.variant = to_string(config.variant);
    manifest.config_hash = config.hash();
    manifest.run_seed = config.seed;
    manifest.n_inputs = static_cast<int>(records.size());
    std::sort(records.begin(), records.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
    for (ImageRecord& r : records) {
        if (r.status == "ok") {
            ++manifest.n_ok;
        } else {
            ++manifest.n_failed;
        }
        manifest.images.push_back(std::move(r));
    }

    const std::string manifest_text = manifest.to_json();
    write_file_atomic(out_dir / "manifest.json",
                      std::vector<std::uint8_t>(manifest_text.begin(), manifest_text.end()));
    return manifest;
}

}  // namespace veil

// veil command-line interface: anonymization runs, pool building,
// annotation extraction and evaluation. Exit codes: 0 success, 1 hard
// errors during a run, 2 bad configuration or usage.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "veil/attributes.hpp"
#include "veil/errors.hpp"
#include "veil/hashing.hpp"
#include "veil/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunError = 1;
constexpr int kExitConfig = 2;

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw veil::ConfigError("not a directory: " + dir.string());
    }
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".ppm" || ext == ".pgm") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// CLI overrides applied on top of the config file.
struct Overrides {
    std::string variant;
    double anonymization_scale = -1.0;
    double guidance_scale = -1.0;
    int steps = -1;
    double noise_strength = -1.0;
    int resolution = -1;
    std::string pool;
    long long seed = -1;
    int workers = -1;
    std::string cache_dir;
};

veil::PipelineConfig resolve_config(const std::string& config_path, const Overrides& o) {
    veil::PipelineConfig config;
    if (!config_path.empty()) {
        config = veil::parse_config_file(config_path);
    } else if (!o.variant.empty()) {
        veil::PipelineConfig probe;
        veil::apply_config_entry(probe, "variant", o.variant);
        config = veil::PipelineConfig::defaults_for(probe.variant);
    }
    if (!o.variant.empty()) veil::apply_config_entry(config, "variant", o.variant);
    if (o.anonymization_scale >= 0.0) config.anonymization_scale = o.anonymization_scale;
    if (o.guidance_scale >= 0.0) config.guidance_scale = o.guidance_scale;
    if (o.steps >= 0) config.steps = o.steps;
    if (o.noise_strength >= 0.0) config.noise_strength = o.noise_strength;
    if (o.resolution >= 0) config.resolution = o.resolution;
    if (!o.pool.empty()) config.pool_path = o.pool;
    if (o.seed >= 0) config.seed = static_cast<std::uint64_t>(o.seed);
    if (o.workers >= 0) config.workers = o.workers;
    if (!o.cache_dir.empty()) {
        config.cache_dir = o.cache_dir;
        config.use_cache = true;
    }
    // Environment override is supported for the cache directory only.
    if (const char* env = std::getenv("VEIL_CACHE_DIR"); env != nullptr && *env != '\0') {
        config.cache_dir = env;
        config.use_cache = true;
    }
    config.validate();
    return config;
}

veil::AdapterSet resolve_adapters(const veil::PipelineConfig& config) {
    // Toy adapters are the only built-in backend; their seed derives from
    // the run seed so --seed governs the whole run.
    veil::AdapterSet adapters = veil::make_toy_adapters(veil::splitmix64(config.seed ^ 0x616461ULL));
    if (!config.pool_path.empty()) {
        adapters.pool = std::make_shared<veil::IdentityPool>(veil::load_pool(config.pool_path));
    }
    return adapters;
}

int cmd_anonymize(const std::string& config_path, const Overrides& overrides,
                  const std::string& in_dir, const std::string& out_dir, bool dry_run) {
    veil::PipelineConfig config = resolve_config(config_path, overrides);
    const auto inputs = list_images(in_dir);
    if (inputs.empty()) {
        throw veil::ConfigError("no .ppm/.pgm inputs in " + in_dir);
    }
    if (dry_run) {
        std::cout << "dry run: config ok (hash " << config.hash() << "), " << inputs.size()
                  << " inputs, nothing processed\n";
        return kExitOk;
    }
    const auto started = std::chrono::steady_clock::now();
    veil::RunManifest manifest = veil::run_batch(inputs, config, resolve_adapters(config), out_dir);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::cout << "processed " << manifest.n_ok << ", skipped " << manifest.n_failed << ", "
              << (manifest.n_inputs > 0 ? seconds / manifest.n_inputs : 0.0)
              << " s/image mean\n";
    std::cout << "manifest: " << (fs::path(out_dir) / "manifest.json").string() << "\n";
    return manifest.n_failed == 0 ? kExitOk : kExitRunError;
}

int cmd_build_pool(const std::string& in_path, const std::string& out_path) {
    const fs::path src(in_path);
    if (!fs::exists(src)) throw veil::ConfigError("embedding source not found: " + in_path);

    std::unique_ptr<veil::EmbeddingSet> set;
    if (src.extension() == ".jsonl") {
        std::ifstream in(src);
        if (!in) throw veil::ConfigError("cannot read " + in_path);
        std::vector<std::string> ids;
        std::vector<double> rows;
        int dim = 0;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            veil::FaceLine face;
            try {
                face = veil::face_line_from_json(line);
            } catch (const std::exception& e) {
                throw veil::ConfigError("record at line " + std::to_string(line_no) + ": " +
                                        e.what());
            }
            if (dim == 0) dim = static_cast<int>(face.face.identity_embedding.size());
            ids.push_back(face.image_id);
            rows.insert(rows.end(), face.face.identity_embedding.begin(),
                        face.face.identity_embedding.end());
        }
        if (ids.empty()) throw veil::ConfigError("no records in " + in_path);
        try {
            set = std::make_unique<veil::EmbeddingSet>(std::move(ids), std::move(rows), dim,
                                                       "jsonl");
        } catch (const std::exception& e) {
            throw veil::ConfigError(std::string("embedding source invalid: ") + e.what());
        }
    } else {
        set = std::make_unique<veil::EmbeddingSet>(veil::load_embedding_file(src));
    }

    veil::IdentityPool pool;
    try {
        pool = veil::build_pool(*set);
    } catch (const std::exception& e) {
        throw veil::ConfigError(std::string("cannot build pool: ") + e.what());
    }
    veil::save_pool(out_path, pool);
    std::cout << "pool: " << pool.count() << " identities, dimension " << pool.dim() << "\n";
    return kExitOk;
}

int cmd_extract(const std::string& config_path, const Overrides& overrides,
                const std::string& in_dir, const std::string& cache_dir,
                const std::string& faces_path) {
    veil::PipelineConfig config = resolve_config(config_path, overrides);
    const auto inputs = list_images(in_dir);
    if (inputs.empty()) throw veil::ConfigError("no .ppm/.pgm inputs in " + in_dir);

    const veil::AdapterSet adapters = resolve_adapters(config);
    const veil::AnnotationCache cache{fs::path(cache_dir)};
    std::vector<veil::FaceLine> face_lines;
    for (const auto& path : inputs) {
        const veil::Image image = veil::read_ppm(path);
        const veil::Image prepared = veil::preprocess_to_resolution(image, config.resolution);
        const auto& raw = prepared.tensor().data();
        const std::uint64_t content_hash = veil::fnv1a64(raw.data(), raw.size() * sizeof(double));
        veil::extract_controls_cached(prepared, adapters.extractors, config.controls, &cache,
                                      content_hash);
        if (!faces_path.empty()) {
            for (const veil::FaceRecord& face :
                 veil::detect_faces(image, *adapters.face_detector)) {
                face_lines.push_back(veil::FaceLine{path.stem().string(), face});
            }
        }
    }
    if (!faces_path.empty()) {
        veil::write_face_lines(faces_path, face_lines);
        std::cout << "faces: " << face_lines.size() << " records -> " << faces_path << "\n";
    }
    std::cout << "annotations cached for " << inputs.size() << " images in " << cache_dir << "\n";
    return kExitOk;
}

// --- evaluate ----------------------------------------------------------------

struct PairedDirs {
    std::vector<veil::EvalPair> pairs;
    std::vector<std::string> unpaired;
};

PairedDirs load_pairs(const std::string& real_dir, const std::string& anon_dir) {
    PairedDirs out;
    std::map<std::string, fs::path> real_by_id;
    for (const auto& p : list_images(real_dir)) real_by_id[p.stem().string()] = p;
    std::map<std::string, fs::path> anon_by_id;
    for (const auto& p : list_images(anon_dir)) anon_by_id[p.stem().string()] = p;

    for (const auto& [id, real_path] : real_by_id) {
        auto it = anon_by_id.find(id);
        if (it == anon_by_id.end()) {
            out.unpaired.push_back(id);
            continue;
        }
        out.pairs.push_back(
            veil::EvalPair{id, veil::read_ppm(real_path), veil::read_ppm(it->second)});
    }
    for (const auto& [id, path] : anon_by_id) {
        if (real_by_id.find(id) == real_by_id.end()) out.unpaired.push_back(id);
    }
    return out;
}

void report_unpaired(const PairedDirs& paired, bool unpaired_error) {
    if (paired.unpaired.empty()) return;
    for (const auto& id : paired.unpaired) {
        std::cerr << "unpaired id excluded: " << id << "\n";
    }
    if (unpaired_error) {
        throw veil::ConfigError(std::to_string(paired.unpaired.size()) + " unpaired ids");
    }
}

void write_report(const std::string& out_path, const std::string& json_text) {
    if (out_path.empty()) return;
    const fs::path parent = fs::path(out_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw veil::IoError("cannot write " + out_path);
    out << json_text << "\n";
    std::cout << "report: " << out_path << "\n";
}

int cmd_evaluate_reid(const std::string& real, const std::string& anon,
                      const std::string& protocol, bool unpaired_error,
                      const std::string& out_path) {
    std::vector<veil::ReIDReport> reports;
    if (fs::path(real).extension() == ".veb") {
        const veil::EmbeddingSet gallery = veil::load_embedding_file(real);
        const veil::EmbeddingSet queries = veil::load_embedding_file(anon);
        const auto proto = protocol == "face" ? veil::ReIDProtocol::face_level
                                              : veil::ReIDProtocol::image_level;
        reports.push_back(veil::reid_from_embeddings(queries, gallery, proto));
    } else {
        PairedDirs paired = load_pairs(real, anon);
        report_unpaired(paired, unpaired_error);
        if (paired.pairs.empty()) throw veil::ConfigError("no paired images to evaluate");
        const auto embedder = veil::make_toy_image_embedder();
        if (protocol == "face" || protocol == "both") {
            const auto detector = veil::make_toy_face_detector();
            reports.push_back(veil::face_level_protocol(paired.pairs, *detector, *embedder));
        }
        if (protocol == "image" || protocol == "both") {
            reports.push_back(veil::image_level_protocol(paired.pairs, *embedder));
        }
    }

    std::cout << veil::render_reid_table(reports);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) j.push_back(nlohmann::json::parse(veil::reid_report_to_json(r)));
    write_report(out_path, nlohmann::json{{"type", "reid"}, {"reports", j}}.dump(2));
    return kExitOk;
}

std::vector<std::vector<double>> dir_features(const std::string& path) {
    if (fs::path(path).extension() == ".veb") {
        const veil::EmbeddingSet set = veil::load_embedding_file(path);
        std::vector<std::vector<double>> feats;
        feats.reserve(set.count());
        for (int i = 0; i < set.count(); ++i) {
            feats.emplace_back(set.row(i).begin(), set.row(i).end());
        }
        return feats;
    }
    const auto embedder = veil::make_toy_image_embedder();
    std::vector<std::vector<double>> feats;
    for (const auto& p : list_images(path)) feats.push_back(embedder->embed(veil::read_ppm(p)));
    if (feats.empty()) throw veil::ConfigError("no features in " + path);
    return feats;
}

int cmd_evaluate_fid(const std::string& real, const std::string& anon,
                     const std::string& out_path) {
    const double value = veil::fid(dir_features(real), dir_features(anon));
    std::cout << "fid: " << value << "\n";
    write_report(out_path, nlohmann::json{{"type", "fid"}, {"fid", value}}.dump(2));
    return kExitOk;
}

int cmd_evaluate_dna(const std::string& real, const std::string& anon, int bins,
                     bool unpaired_error, const std::string& out_path) {
    PairedDirs paired = load_pairs(real, anon);
    report_unpaired(paired, unpaired_error);
    if (paired.pairs.empty()) throw veil::ConfigError("no paired images to evaluate");
    const auto provider = veil::make_toy_activation_provider();
    std::vector<double> distances;
    distances.reserve(paired.pairs.size());
    for (const auto& pair : paired.pairs) {
        distances.push_back(veil::visual_dna_image_pair(pair.real, pair.anon, *provider, bins));
    }
    const veil::DnaReport report = veil::dataset_dna_report(distances);
    std::cout << "visual dna: mean " << report.mean << " +- " << report.stddev << " over "
              << report.n_pairs << " pairs\n";
    write_report(out_path, nlohmann::json{{"type", "dna"},
                                          {"mean", report.mean},
                                          {"stddev", report.stddev},
                                          {"n_pairs", report.n_pairs}}
                               .dump(2));
    return kExitOk;
}

std::vector<double> read_number_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw veil::ConfigError("cannot read " + path);
    std::vector<double> out;
    double v;
    while (in >> v) out.push_back(v);
    return out;
}

int cmd_evaluate_auc(const std::string& scores_path, const std::string& labels_path,
                     const std::string& out_path) {
    const auto scores = read_number_lines(scores_path);
    const auto label_values = read_number_lines(labels_path);
    std::vector<int> labels;
    labels.reserve(label_values.size());
    for (double v : label_values) labels.push_back(static_cast<int>(v));
    const double value = veil::downstream_auc(scores, labels);
    std::cout << "auc: " << value << "\n";
    write_report(out_path, nlohmann::json{{"type", "auc"}, {"auc", value}}.dump(2));
    return kExitOk;
}

int cmd_report(const std::string& input) {
    std::ifstream in(input);
    if (!in) throw veil::ConfigError("cannot read " + input);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw veil::ConfigError(std::string("invalid report JSON: ") + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "reid") {
        std::vector<veil::ReIDReport> reports;
        for (const auto& rj : j.value("reports", nlohmann::json::array())) {
            veil::ReIDReport r;
            r.protocol = rj.value("protocol", "") == "face_level"
                             ? veil::ReIDProtocol::face_level
                             : veil::ReIDProtocol::image_level;
            r.reid_at[1] = rj.at("reid_at").at("1").get<double>();
            r.reid_at[5] = rj.at("reid_at").at("5").get<double>();
            r.reid_at[10] = rj.at("reid_at").at("10").get<double>();
            r.map_score = rj.at("map").get<double>();
            r.n_queries = rj.value("n_queries", 0);
            r.n_excluded = rj.value("n_excluded", 0);
            reports.push_back(r);
        }
        std::cout << veil::render_reid_table(reports);
    } else if (type == "fid") {
        std::cout << "fid: " << j.at("fid").get<double>() << "\n";
    } else if (type == "dna") {
        std::cout << "visual dna: mean " << j.at("mean").get<double>() << " +- "
                  << j.at("stddev").get<double>() << " over " << j.value("n_pairs", 0)
                  << " pairs\n";
    } else if (type == "auc") {
        std::cout << "auc: " << j.at("auc").get<double>() << "\n";
    } else {
        throw veil::ConfigError("unknown report type '" + type + "'");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"veil: latent-diffusion image anonymization and evaluation"};
    app.require_subcommand(1);

    std::string config_path, in_dir, out_dir, pool_in, pool_out, cache_dir, faces_path;
    std::string real_path, anon_path, protocol = "both", scores_path, labels_path, report_out;
    std::string report_in;
    Overrides overrides;
    bool dry_run = false;
    bool unpaired_error = false;
    int dna_bins = 64;

    auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (key = value lines)");
        cmd->add_option("--variant", overrides.variant, "base or light")
            ->check(CLI::IsMember({"base", "light"}));
        cmd->add_option("--as", overrides.anonymization_scale, "anonymization scale");
        cmd->add_option("--omega", overrides.guidance_scale, "guidance scale");
        cmd->add_option("--steps", overrides.steps, "sampling steps");
        cmd->add_option("--noise", overrides.noise_strength, "img2img noise strength");
        cmd->add_option("--resolution", overrides.resolution, "working resolution (multiple of 8)");
        cmd->add_option("--pool", overrides.pool, "identity pool file");
        cmd->add_option("--seed", overrides.seed, "run seed");
        cmd->add_option("--workers", overrides.workers, "worker threads");
    };

    CLI::App* anonymize = app.add_subcommand("anonymize", "anonymize a directory of images");
    add_config_flags(anonymize);
    anonymize->add_option("--in", in_dir, "input directory")->required();
    anonymize->add_option("--out", out_dir, "output directory")->required();
    anonymize->add_option("--cache", overrides.cache_dir, "annotation cache directory");
    anonymize->add_flag("--dry-run", dry_run, "validate config and inputs, process nothing");

    CLI::App* build_pool = app.add_subcommand("build-pool", "build an identity pool");
    build_pool->add_option("--in", pool_in, "embedding source (.jsonl or .veb)")->required();
    build_pool->add_option("--out", pool_out, "pool output file")->required();

    CLI::App* extract = app.add_subcommand("extract", "populate the annotation cache");
    add_config_flags(extract);
    extract->add_option("--in", in_dir, "input directory")->required();
    extract->add_option("--cache", cache_dir, "cache directory")->required();
    extract->add_option("--faces", faces_path, "also write face records (JSON lines)");

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluation metrics");
    evaluate->require_subcommand(1);
    CLI::App* ev_reid = evaluate->add_subcommand("reid", "re-identification protocols");
    ev_reid->add_option("--real", real_path, "real images dir or .veb")->required();
    ev_reid->add_option("--anon", anon_path, "anonymized images dir or .veb")->required();
    ev_reid->add_option("--protocol", protocol, "face, image or both")
        ->check(CLI::IsMember({"face", "image", "both"}));
    ev_reid->add_flag("--unpaired-error", unpaired_error, "fail when ids do not pair up");
    ev_reid->add_option("--out", report_out, "write report JSON here");

    CLI::App* ev_fid = evaluate->add_subcommand("fid", "Frechet distance between feature sets");
    ev_fid->add_option("--real", real_path, "real images dir or .veb")->required();
    ev_fid->add_option("--anon", anon_path, "anonymized images dir or .veb")->required();
    ev_fid->add_option("--out", report_out, "write report JSON here");

    CLI::App* ev_dna = evaluate->add_subcommand("dna", "per-pair activation histogram distance");
    ev_dna->add_option("--real", real_path, "real images dir")->required();
    ev_dna->add_option("--anon", anon_path, "anonymized images dir")->required();
    ev_dna->add_option("--bins", dna_bins, "histogram bins per layer");
    ev_dna->add_flag("--unpaired-error", unpaired_error, "fail when ids do not pair up");
    ev_dna->add_option("--out", report_out, "write report JSON here");

    CLI::App* ev_auc = evaluate->add_subcommand("auc", "rank AUC from score/label files");
    ev_auc->add_option("--scores", scores_path, "one score per line")->required();
    ev_auc->add_option("--labels", labels_path, "one 0/1 label per line")->required();
    ev_auc->add_option("--out", report_out, "write report JSON here");

    CLI::App* report = app.add_subcommand("report", "render a report JSON as a table");
    report->add_option("--input", report_in, "report JSON file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (anonymize->parsed()) {
            return cmd_anonymize(config_path, overrides, in_dir, out_dir, dry_run);
        }
        if (build_pool->parsed()) return cmd_build_pool(pool_in, pool_out);
        if (extract->parsed()) {
            return cmd_extract(config_path, overrides, in_dir, cache_dir, faces_path);
        }
        if (evaluate->parsed()) {
            if (ev_reid->parsed()) {
                return cmd_evaluate_reid(real_path, anon_path, protocol, unpaired_error,
                                         report_out);
            }
            if (ev_fid->parsed()) return cmd_evaluate_fid(real_path, anon_path, report_out);
            if (ev_dna->parsed()) {
                return cmd_evaluate_dna(real_path, anon_path, dna_bins, unpaired_error,
                                        report_out);
            }
            if (ev_auc->parsed()) return cmd_evaluate_auc(scores_path, labels_path, report_out);
        }
        if (report->parsed()) return cmd_report(report_in);
    } catch (const veil::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRunError;
    }
    return kExitConfig;
}

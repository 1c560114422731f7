#include "veil/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "veil/errors.hpp"
#include "veil/hashing.hpp"
#include "veil/rng.hpp"

namespace veil {

namespace {

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw DomainError("cosine_distance: zero vector");
    }
    return 1.0 - dot / std::sqrt(na * nb);
}

}  // namespace

int knn_rank(std::span<const double> query, const EmbeddingSet& gallery,
             const std::string& true_id) {
    const int t = gallery.find(true_id);
    if (t < 0) throw ProtocolError("knn_rank: id '" + true_id + "' not in gallery");
    if (static_cast<int>(query.size()) != gallery.dim()) {
        throw ContractViolation("knn_rank: query dimension mismatch");
    }
    const double d_true = cosine_distance(query, gallery.row(t));
    int rank = 1;
    for (int i = 0; i < gallery.count(); ++i) {
        if (i == t) continue;
        const double d = cosine_distance(query, gallery.row(i));
        if (d < d_true || (d == d_true && gallery.ids()[i] < true_id)) ++rank;
    }
    return rank;
}

void ReIDReport::validate() const {
    double prev = 0.0;
    for (const auto& [k, rate] : reid_at) {
        if (rate < prev - 1e-12 || rate < 0.0 || rate > 1.0) {
            throw ContractViolation("ReIDReport: Re-ID@K must be non-decreasing in K");
        }
        prev = rate;
    }
    if (!reid_at.empty() && n_queries > 0) {
        const double at_max = reid_at.rbegin()->second;
        // ranks beyond the largest K contribute at most 1/(K+1) each
        const double bound = at_max + (1.0 - at_max) / (reid_at.rbegin()->first + 1);
        if (map_score > bound + 1e-12) {
            throw ContractViolation("ReIDReport: mAP exceeds the rank bound");
        }
    }
}

ReIDReport reid_report(const std::vector<int>& ranks, ReIDProtocol protocol, int n_excluded) {
    if (ranks.empty()) throw DomainError("reid_report: no ranks");
    ReIDReport report;
    report.protocol = protocol;
    report.n_queries = static_cast<int>(ranks.size());
    report.n_excluded = n_excluded;
    double mrr = 0.0;
    for (int k : {1, 5, 10}) {
        const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; });
        report.reid_at[k] = static_cast<double>(hits) / ranks.size();
    }
    for (int r : ranks) {
        if (r < 1) throw DomainError("reid_report: ranks are 1-based");
        mrr += 1.0 / r;
    }
    report.map_score = mrr / ranks.size();
    report.validate();
    return report;
}

ReIDReport reid_from_embeddings(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                                ReIDProtocol protocol, int n_excluded) {
    std::vector<int> ranks;
    ranks.reserve(queries.count());
    for (int i = 0; i < queries.count(); ++i) {
        ranks.push_back(knn_rank(queries.row(i), gallery, queries.ids()[i]));
    }
    return reid_report(ranks, protocol, n_excluded);
}

namespace {

class ToyImageEmbedder final : public ImageEmbedderAdapter {
public:
    std::string provider() const override { return "toy-image-embedder-1"; }
    std::vector<double> embed(const Image& image) const override {
        const auto& d = image.tensor().data();
        Rng rng(splitmix64(fnv1a64(d.data(), d.size() * sizeof(double))));
        std::vector<double> v(kFaceEmbeddingDim);
        double norm2 = 0.0;
        for (double& e : v) {
            e = rng.normal();
            norm2 += e * e;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& e : v) e *= inv;
        return v;
    }
};

Image crop_bbox(const Image& img, const FaceRecord& face) {
    const int x0 = static_cast<int>(face.x0);
    const int y0 = static_cast<int>(face.y0);
    const int x1 = static_cast<int>(std::ceil(face.x1));
    const int y1 = static_cast<int>(std::ceil(face.y1));
    Image out(img.channels(), y1 - y0, x1 - x0);
    for (int c = 0; c < img.channels(); ++c)
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) out.at(c, y - y0, x - x0) = img.at(c, y, x);
    return out;
}

struct EmbeddingRows {
    std::vector<std::string> ids;
    std::vector<double> rows;
    int dim = 0;

    void push(const std::string& id, const std::vector<double>& v) {
        if (dim == 0) dim = static_cast<int>(v.size());
        ids.push_back(id);
        rows.insert(rows.end(), v.begin(), v.end());
    }
};

}  // namespace

std::shared_ptr<ImageEmbedderAdapter> make_toy_image_embedder() {
    return std::make_shared<ToyImageEmbedder>();
}

ReIDReport face_level_protocol(const std::vector<EvalPair>& pairs,
                               const FaceDetectorAdapter& detector,
                               const ImageEmbedderAdapter& embedder) {
    EmbeddingRows gallery;
    EmbeddingRows queries;
    int excluded = 0;
    for (const EvalPair& pair : pairs) {
        const auto real_faces = detect_faces(pair.real, detector);
        const auto anon_faces = detect_faces(pair.anon, detector);
        if (real_faces.empty() || anon_faces.empty()) {
            ++excluded;
            continue;
        }
        // detect_faces sorts area-descending, so front() is the largest crop
        gallery.push(pair.id, embedder.embed(crop_bbox(pair.real, real_faces.front())));
        queries.push(pair.id, embedder.embed(crop_bbox(pair.anon, anon_faces.front())));
    }
    if (queries.ids.empty()) {
        throw ProtocolError("face_level_protocol: every pair was excluded");
    }
    EmbeddingSet gallery_set(gallery.ids, gallery.rows, gallery.dim, embedder.provider());
    EmbeddingSet query_set(queries.ids, queries.rows, queries.dim, embedder.provider());
    return reid_from_embeddings(query_set, gallery_set, ReIDProtocol::face_level, excluded);
}

ReIDReport image_level_protocol(const std::vector<EvalPair>& pairs,
                                const ImageEmbedderAdapter& embedder) {
    if (pairs.empty()) throw DomainError("image_level_protocol: no pairs");
    EmbeddingRows gallery;
    EmbeddingRows queries;
    for (const EvalPair& pair : pairs) {
        gallery.push(pair.id, embedder.embed(pair.real));
        queries.push(pair.id, embedder.embed(pair.anon));
    }
    EmbeddingSet gallery_set(gallery.ids, gallery.rows, gallery.dim, embedder.provider());
    EmbeddingSet query_set(queries.ids, queries.rows, queries.dim, embedder.provider());
    return reid_from_embeddings(query_set, gallery_set, ReIDProtocol::image_level, 0);
}

// --- FID -----------------------------------------------------------------------

namespace {

constexpr double kCovRegularizer = 1e-6;

void gaussian_fit(const std::vector<std::vector<double>>& feats, Eigen::VectorXd& mu,
                  Eigen::MatrixXd& cov) {
    const int n = static_cast<int>(feats.size());
    const int d = static_cast<int>(feats.front().size());
    mu = Eigen::VectorXd::Zero(d);
    for (const auto& f : feats) {
        if (static_cast<int>(f.size()) != d) throw DomainError("fid: ragged feature rows");
        mu += Eigen::Map<const Eigen::VectorXd>(f.data(), d);
    }
    mu /= n;
    cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& f : feats) {
        const Eigen::VectorXd centered = Eigen::Map<const Eigen::VectorXd>(f.data(), d) - mu;
        cov.noalias() += centered * centered.transpose();
    }
    if (n > 1) cov /= (n - 1);  // unbiased; single-sample sets fall back to the regularizer
    cov.diagonal().array() += kCovRegularizer;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const std::vector<std::vector<double>>& real_features,
           const std::vector<std::vector<double>>& anon_features) {
    if (real_features.empty() || anon_features.empty()) {
        throw DomainError("fid: empty feature set");
    }
    if (real_features.front().size() != anon_features.front().size()) {
        throw DomainError("fid: feature dimensions differ");
    }
    Eigen::VectorXd mu1, mu2;
    Eigen::MatrixXd cov1, cov2;
    gaussian_fit(real_features, mu1, cov1);
    gaussian_fit(anon_features, mu2, cov2);

    const Eigen::MatrixXd sq1 = psd_sqrt(cov1);
    Eigen::MatrixXd inner = sq1 * cov2 * sq1;
    inner = 0.5 * (inner + inner.transpose());  // re-symmetrize rounding
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double value =
        (mu1 - mu2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, value);
}

// --- Visual DNA ------------------------------------------------------------------

double emd_1d(std::span<const double> counts_a, std::span<const double> counts_b,
              std::span<const double> edges) {
    if (counts_a.size() != counts_b.size() || edges.size() != counts_a.size() + 1) {
        throw ProtocolError("emd_1d: histogram structure mismatch");
    }
    double total_a = 0.0, total_b = 0.0;
    for (double v : counts_a) {
        if (v < 0.0) throw DomainError("emd_1d: negative count");
        total_a += v;
    }
    for (double v : counts_b) {
        if (v < 0.0) throw DomainError("emd_1d: negative count");
        total_b += v;
    }
    if (!(total_a > 0.0) || !(total_b > 0.0)) {
        throw DomainError("emd_1d: histogram has no mass");
    }
    double cdf_a = 0.0, cdf_b = 0.0, emd = 0.0;
    for (std::size_t i = 0; i < counts_a.size(); ++i) {
        cdf_a += counts_a[i] / total_a;
        cdf_b += counts_b[i] / total_b;
        emd += std::fabs(cdf_a - cdf_b) * (edges[i + 1] - edges[i]);
    }
    return emd;
}

double visual_dna_pair(const ActivationHistogramSet& real_hist,
                       const ActivationHistogramSet& anon_hist) {
    if (real_hist.layers.size() != anon_hist.layers.size() || real_hist.layers.empty()) {
        throw ProtocolError("visual_dna_pair: layer structure mismatch");
    }
    double layer_sum = 0.0;
    for (std::size_t l = 0; l < real_hist.layers.size(); ++l) {
        const LayerHistograms& a = real_hist.layers[l];
        const LayerHistograms& b = anon_hist.layers[l];
        if (a.bin_edges != b.bin_edges || a.neuron_counts.size() != b.neuron_counts.size() ||
            a.neuron_counts.empty()) {
            throw ProtocolError("visual_dna_pair: histogram structure mismatch in layer '" +
                                a.name + "'");
        }
        double neuron_sum = 0.0;
        for (std::size_t j = 0; j < a.neuron_counts.size(); ++j) {
            neuron_sum += emd_1d(a.neuron_counts[j], b.neuron_counts[j], a.bin_edges);
        }
        layer_sum += neuron_sum / a.neuron_counts.size();
    }
    return layer_sum / real_hist.layers.size();
}

DnaReport dataset_dna_report(const std::vector<double>& pair_distances) {
    if (pair_distances.empty()) throw DomainError("dataset_dna_report: no pairs");
    DnaReport r;
    r.n_pairs = static_cast<int>(pair_distances.size());
    r.mean = std::accumulate(pair_distances.begin(), pair_distances.end(), 0.0) / r.n_pairs;
    double var = 0.0;
    for (double d : pair_distances) var += (d - r.mean) * (d - r.mean);
    r.stddev = std::sqrt(var / r.n_pairs);
    return r;
}

namespace {

class ToyActivationProvider final : public ActivationProviderAdapter {
public:
    std::vector<LayerActivations> activations(const Image& image) const override {
        const Image rgb = image.to_rgb();
        const Image gray = image.grayscale();
        std::vector<LayerActivations> out;

        LayerActivations input{"input", {}};
        for (int c = 0; c < 3; ++c) {
            std::vector<double> samples;
            samples.reserve(static_cast<std::size_t>(rgb.height()) * rgb.width());
            for (int y = 0; y < rgb.height(); ++y)
                for (int x = 0; x < rgb.width(); ++x) samples.push_back(rgb.at(c, y, x) / 255.0);
            input.neurons.push_back(std::move(samples));
        }
        out.push_back(std::move(input));

        LayerActivations rows{"row_means", {}};
        for (int c = 0; c < 3; ++c) {
            std::vector<double> samples;
            samples.reserve(rgb.height());
            for (int y = 0; y < rgb.height(); ++y) {
                double s = 0.0;
                for (int x = 0; x < rgb.width(); ++x) s += rgb.at(c, y, x);
                samples.push_back(s / rgb.width() / 255.0);
            }
            rows.neurons.push_back(std::move(samples));
        }
        out.push_back(std::move(rows));

        LayerActivations edges{"edges", {}};
        std::vector<double> gx, gy;
        for (int y = 0; y + 1 < gray.height(); ++y)
            for (int x = 0; x + 1 < gray.width(); ++x) {
                gx.push_back(std::fabs(gray.at(0, y, x + 1) - gray.at(0, y, x)) / 255.0);
                gy.push_back(std::fabs(gray.at(0, y + 1, x) - gray.at(0, y, x)) / 255.0);
            }
        if (gx.empty()) {  // 1-pixel images still need samples
            gx.push_back(0.0);
            gy.push_back(0.0);
        }
        edges.neurons.push_back(std::move(gx));
        edges.neurons.push_back(std::move(gy));
        out.push_back(std::move(edges));
        return out;
    }
};

}  // namespace

std::shared_ptr<ActivationProviderAdapter> make_toy_activation_provider() {
    return std::make_shared<ToyActivationProvider>();
}

std::vector<double> joint_layer_edges(const LayerActivations& a, const LayerActivations& b,
                                      int bins) {
    if (bins < 1) throw DomainError("joint_layer_edges: bins must be >= 1");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto* layer : {&a, &b}) {
        for (const auto& neuron : layer->neurons) {
            for (double v : neuron) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    if (!(lo <= hi)) throw DomainError("joint_layer_edges: no samples");
    if (lo == hi) hi = lo + 1.0;  // degenerate range: single occupied bin
    std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) {
        edges[i] = lo + (hi - lo) * static_cast<double>(i) / bins;
    }
    return edges;
}

ActivationHistogramSet build_histogram_set(
    const std::vector<LayerActivations>& activations,
    const std::vector<std::vector<double>>& per_layer_edges) {
    if (activations.size() != per_layer_edges.size()) {
        throw ProtocolError("build_histogram_set: one edge vector per layer required");
    }
    ActivationHistogramSet out;
    for (std::size_t l = 0; l < activations.size(); ++l) {
        const auto& edges = per_layer_edges[l];
        const int bins = static_cast<int>(edges.size()) - 1;
        LayerHistograms layer{activations[l].name, edges, {}};
        for (const auto& neuron : activations[l].neurons) {
            std::vector<double> counts(bins, 0.0);
            for (double v : neuron) {
                int b = static_cast<int>((v - edges.front()) / (edges.back() - edges.front()) * bins);
                b = std::clamp(b, 0, bins - 1);
                counts[b] += 1.0;
            }
            layer.neuron_counts.push_back(std::move(counts));
        }
        out.layers.push_back(std::move(layer));
    }
    return out;
}

double visual_dna_image_pair(const Image& real, const Image& anon,
                             const ActivationProviderAdapter& provider, int bins) {
    const auto acts_real = provider.activations(real);
    const auto acts_anon = provider.activations(anon);
    if (acts_real.size() != acts_anon.size()) {
        throw ProtocolError("visual_dna_image_pair: provider layer counts differ");
    }
    std::vector<std::vector<double>> edges;
    edges.reserve(acts_real.size());
    for (std::size_t l = 0; l < acts_real.size(); ++l) {
        edges.push_back(joint_layer_edges(acts_real[l], acts_anon[l], bins));
    }
    return visual_dna_pair(build_histogram_set(acts_real, edges),
                           build_histogram_set(acts_anon, edges));
}

// --- AUC -------------------------------------------------------------------------

double downstream_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw DomainError("downstream_auc: scores and labels must pair up");
    }
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 1) {
            pos.push_back(scores[i]);
        } else if (labels[i] == 0) {
            neg.push_back(scores[i]);
        } else {
            throw DomainError("downstream_auc: labels must be 0 or 1");
        }
    }
    if (pos.empty() || neg.empty()) {
        throw ProtocolError("downstream_auc: both classes required");
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    // count (wins, ties) against the sorted negatives with two pointers
    std::uint64_t wins = 0, ties = 0;
    std::size_t below = 0, equal_end = 0;
    for (double p : pos) {
        while (below < neg.size() && neg[below] < p) ++below;
        if (equal_end < below) equal_end = below;
        while (equal_end < neg.size() && neg[equal_end] == p) ++equal_end;
        wins += below;
        ties += equal_end - below;
    }
    return (2.0 * wins + ties) / (2.0 * static_cast<double>(pos.size()) * neg.size());
}

// --- reports -----------------------------------------------------------------------

const char* to_string(ReIDProtocol protocol) {
    return protocol == ReIDProtocol::face_level ? "face_level" : "image_level";
}

std::string reid_report_to_json(const ReIDReport& report) {
    nlohmann::json j{
        {"protocol", to_string(report.protocol)},
        {"reid_at", {{"1", report.reid_at.at(1)}, {"5", report.reid_at.at(5)},
                     {"10", report.reid_at.at(10)}}},
        {"map", report.map_score},
        {"n_queries", report.n_queries},
        {"n_excluded", report.n_excluded},
    };
    return j.dump(2);
}

std::string render_reid_table(const std::vector<ReIDReport>& reports) {
    std::ostringstream out;
    out << "protocol      Re-ID@1   Re-ID@5   Re-ID@10  mAP       queries  excluded\n";
    out << "-----------   -------   -------   --------  ------    -------  --------\n";
    char line[160];
    for (const ReIDReport& r : reports) {
        std::snprintf(line, sizeof(line), "%-13s %-9.4f %-9.4f %-9.4f %-9.5f %-8d %d\n",
                      to_string(r.protocol), r.reid_at.at(1), r.reid_at.at(5), r.reid_at.at(10),
                      r.map_score, r.n_queries, r.n_excluded);
        out << line;
    }
    return out.str();
}

}  // namespace veil

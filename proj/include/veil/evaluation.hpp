#ifndef VEIL_EVALUATION_HPP
#define VEIL_EVALUATION_HPP

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "veil/attributes.hpp"
#include "veil/embedding_set.hpp"
#include "veil/image.hpp"

namespace veil {

// --- retrieval ---------------------------------------------------------------

// 1-based rank of true_id in the gallery under cosine distance from the
// query; equal distances order by id. Throws ProtocolError if true_id is
// not in the gallery.
int knn_rank(std::span<const double> query, const EmbeddingSet& gallery,
             const std::string& true_id);

enum class ReIDProtocol { face_level, image_level };

struct ReIDReport {
    std::map<int, double> reid_at;  // K in {1, 5, 10} -> rate
    double map_score = 0.0;         // mean reciprocal rank (one relevant item per query)
    ReIDProtocol protocol = ReIDProtocol::image_level;
    int n_queries = 0;
    int n_excluded = 0;

    void validate() const;  // monotone in K, mAP within the rank-10 bound
};

ReIDReport reid_report(const std::vector<int>& ranks, ReIDProtocol protocol, int n_excluded = 0);

// Whole-image embedding provider for the image-level protocol and pair
// embedding generally.
class ImageEmbedderAdapter {
public:
    virtual ~ImageEmbedderAdapter() = default;
    virtual std::vector<double> embed(const Image& image) const = 0;
    virtual std::string provider() const = 0;
    virtual bool shareable() const { return true; }
};

// Content-hash seeded 512-dim unit vector; identical pixels embed
// identically, anything else is effectively orthogonal.
std::shared_ptr<ImageEmbedderAdapter> make_toy_image_embedder();

struct EvalPair {
    std::string id;
    Image real;
    Image anon;
};

// Ranks each query embedding against the gallery (ids must pair up) and
// aggregates. Exposed so protocols and tests can run on raw embeddings.
ReIDReport reid_from_embeddings(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                                ReIDProtocol protocol, int n_excluded = 0);

// Largest-face-crop protocol: detect, crop, embed, rank anonymized crops
// against the real-crop gallery. Pairs where detection fails on either
// side are excluded and counted.
ReIDReport face_level_protocol(const std::vector<EvalPair>& pairs,
                               const FaceDetectorAdapter& detector,
                               const ImageEmbedderAdapter& embedder);

// Whole-image protocol, no detection step.
ReIDReport image_level_protocol(const std::vector<EvalPair>& pairs,
                                const ImageEmbedderAdapter& embedder);

// --- distribution distances ---------------------------------------------------

// Frechet distance between Gaussian fits of two feature sets:
// |mu1-mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)). Unbiased covariance with a
// 1e-6 diagonal regularizer; matrix square roots via symmetric
// eigendecomposition with negative eigenvalues clamped to zero.
double fid(const std::vector<std::vector<double>>& real_features,
           const std::vector<std::vector<double>>& anon_features);

// --- Visual DNA ----------------------------------------------------------------

struct LayerHistograms {
    std::string name;
    std::vector<double> bin_edges;                   // shared within the layer
    std::vector<std::vector<double>> neuron_counts;  // one histogram per neuron
};

struct ActivationHistogramSet {
    std::vector<LayerHistograms> layers;
};

// 1-D EMD between two normalized histograms over shared edges:
// sum_i |CDF1_i - CDF2_i| * (edges[i+1] - edges[i]).
double emd_1d(std::span<const double> counts_a, std::span<const double> counts_b,
              std::span<const double> edges);

// Mean EMD over neurons, then over layers. Histogram structures must match.
double visual_dna_pair(const ActivationHistogramSet& real_hist,
                       const ActivationHistogramSet& anon_hist);

struct DnaReport {
    double mean = 0.0;
    double stddev = 0.0;  // population
    int n_pairs = 0;
};
DnaReport dataset_dna_report(const std::vector<double>& pair_distances);

// Per-layer neuron activation samples for one image.
struct LayerActivations {
    std::string name;
    std::vector<std::vector<double>> neurons;
};

class ActivationProviderAdapter {
public:
    virtual ~ActivationProviderAdapter() = default;
    virtual std::vector<LayerActivations> activations(const Image& image) const = 0;
    virtual bool shareable() const { return true; }
};

std::shared_ptr<ActivationProviderAdapter> make_toy_activation_provider();

// Uniform bin edges covering both activation sets of one layer.
std::vector<double> joint_layer_edges(const LayerActivations& a, const LayerActivations& b,
                                      int bins);

ActivationHistogramSet build_histogram_set(const std::vector<LayerActivations>& activations,
                                           const std::vector<std::vector<double>>& per_layer_edges);

// Distance between one real/anon image pair through an activation provider.
double visual_dna_image_pair(const Image& real, const Image& anon,
                             const ActivationProviderAdapter& provider, int bins = 64);

// --- downstream ----------------------------------------------------------------

// Rank-based AUC: probability a random positive outranks a random
// negative, ties counted half. Exact (integer win/tie counting). Throws
// ProtocolError when only one class is present.
double downstream_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// --- reports -------------------------------------------------------------------

const char* to_string(ReIDProtocol protocol);

std::string reid_report_to_json(const ReIDReport& report);
// Fixed-width table, one row per report, columns Re-ID@1/5/10, mAP, N, excluded.
std::string render_reid_table(const std::vector<ReIDReport>& reports);

}  // namespace veil

#endif  // VEIL_EVALUATION_HPP

#ifndef VEIL_GUIDANCE_HPP
#define VEIL_GUIDANCE_HPP

#include <string>
#include <vector>

#include "veil/tensor.hpp"

namespace veil {

// The three-term guidance weight triple. The combination steers sampling
// between faithful reconstruction (anonymization_scale = 0), standard
// prompt guidance (= 1) and active repulsion from the source image (> 1):
//
//   eps_hat = w0 * eps_identity + w1 * eps_negative + w2 * eps_positive
//
//   w0 = 1 - a_s
//   w1 = min(a_s, 1) * (1 - omega)
//   w2 = a_s * omega           for 0 <= a_s < 1
//        a_s - 1 + omega       for a_s >= 1
//
// w0 + w1 + w2 == 1 on both branches; the sampler relies on this to keep
// the combined prediction on the denoiser's output scale.
struct GuidanceWeights {
    double anonymization_scale = 1.0;
    double guidance_scale = 7.5;
    double w0 = 0.0;  // identity-control term
    double w1 = 0.0;  // negative-prompt term
    double w2 = 0.0;  // positive-prompt term
};

// Throws DomainError when anonymization_scale < 0 or guidance_scale <= 0.
GuidanceWeights compute_guidance_weights(double anonymization_scale, double guidance_scale);

// Weighted sum of the three slot predictions. All tensors must share one
// shape; mismatch throws ContractViolation.
Tensor combine_noise_predictions(const GuidanceWeights& weights, const Tensor& eps_identity,
                                 const Tensor& eps_negative, const Tensor& eps_positive);

enum class ControlKind {
    depth,
    normal,
    segmentation,
    pose,
    lineart,
    identity_latent,
    attribute_map,
};

const char* to_string(ControlKind kind);
ControlKind control_kind_from_string(const std::string& name);

// One spatial conditioning channel. Immutable after construction; the
// per-step scalar is obtained through effective_control_weight.
class ControlSignal {
public:
    ControlSignal(ControlKind kind, Tensor tensor, double weight, double cutoff_fraction);

    ControlKind kind() const { return kind_; }
    const Tensor& tensor() const { return tensor_; }
    double weight() const { return weight_; }
    double cutoff_fraction() const { return cutoff_fraction_; }

private:
    ControlKind kind_;
    Tensor tensor_;
    double weight_;
    double cutoff_fraction_;
};

// A control is active for step indices strictly below
// floor(cutoff_fraction * total_steps), zero afterwards. step_index is the
// absolute index into the sigma schedule (img2img runs that skip early
// steps still measure the cutoff against the full schedule).
double effective_control_weight(const ControlSignal& control, int step_index, int total_steps);

enum class Polarity { positive, negative };

// Token sequence for a prompt slot. Tokens may be text-encoder outputs or
// image embeddings; all share one dimension. An empty sequence means
// unconditional.
class PromptEmbedding {
public:
    PromptEmbedding() : polarity_(Polarity::positive) {}
    PromptEmbedding(std::vector<std::vector<double>> tokens, Polarity polarity);

    const std::vector<std::vector<double>>& tokens() const { return tokens_; }
    Polarity polarity() const { return polarity_; }
    int dim() const { return tokens_.empty() ? 0 : static_cast<int>(tokens_.front().size()); }
    bool empty() const { return tokens_.empty(); }

private:
    std::vector<std::vector<double>> tokens_;
    Polarity polarity_;
};

}  // namespace veil

#endif  // VEIL_GUIDANCE_HPP

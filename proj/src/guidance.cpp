#include "veil/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "veil/errors.hpp"

namespace veil {

GuidanceWeights compute_guidance_weights(double anonymization_scale, double guidance_scale) {
    if (!(anonymization_scale >= 0.0)) {
        throw DomainError("compute_guidance_weights: anonymization scale must be >= 0, got " +
                          std::to_string(anonymization_scale));
    }
    if (!(guidance_scale > 0.0)) {
        throw DomainError("compute_guidance_weights: guidance scale must be > 0, got " +
                          std::to_string(guidance_scale));
    }
    GuidanceWeights w;
    w.anonymization_scale = anonymization_scale;
    w.guidance_scale = guidance_scale;
    w.w0 = 1.0 - anonymization_scale;
    w.w1 = std::min(anonymization_scale, 1.0) * (1.0 - guidance_scale);
    // The a_s < 1 branch extends continuously to a_s = 0 (w2 = 0), which is
    // what makes the triple collapse to pure identity reconstruction there.
    w.w2 = anonymization_scale < 1.0 ? anonymization_scale * guidance_scale
                                     : anonymization_scale - 1.0 + guidance_scale;
    return w;
}

Tensor combine_noise_predictions(const GuidanceWeights& weights, const Tensor& eps_identity,
                                 const Tensor& eps_negative, const Tensor& eps_positive) {
    if (!eps_identity.same_shape(eps_negative) || !eps_identity.same_shape(eps_positive)) {
        throw ContractViolation("combine_noise_predictions: slot tensors disagree on shape");
    }
    Tensor out = Tensor::zeros_like(eps_identity);
    out.axpy(weights.w0, eps_identity);
    out.axpy(weights.w1, eps_negative);
    out.axpy(weights.w2, eps_positive);
    return out;
}

const char* to_string(ControlKind kind) {
    switch (kind) {
        case ControlKind::depth: return "depth";
        case ControlKind::normal: return "normal";
        case ControlKind::segmentation: return "segmentation";
        case ControlKind::pose: return "pose";
        case ControlKind::lineart: return "lineart";
        case ControlKind::identity_latent: return "identity_latent";
        case ControlKind::attribute_map: return "attribute_map";
    }
    return "unknown";
}

ControlKind control_kind_from_string(const std::string& name) {
    for (ControlKind k : {ControlKind::depth, ControlKind::normal, ControlKind::segmentation,
                          ControlKind::pose, ControlKind::lineart, ControlKind::identity_latent,
                          ControlKind::attribute_map}) {
        if (name == to_string(k)) return k;
    }
    throw DomainError("unknown control kind: " + name);
}

ControlSignal::ControlSignal(ControlKind kind, Tensor tensor, double weight, double cutoff_fraction)
    : kind_(kind), tensor_(std::move(tensor)), weight_(weight), cutoff_fraction_(cutoff_fraction) {
    if (!(weight >= 0.0 && weight <= 1.0)) {
        throw DomainError("ControlSignal: weight must be in [0, 1], got " + std::to_string(weight));
    }
    if (!(cutoff_fraction > 0.0 && cutoff_fraction <= 1.0)) {
        throw DomainError("ControlSignal: cutoff_fraction must be in (0, 1], got " +
                          std::to_string(cutoff_fraction));
    }
    if (tensor_.empty()) {
        throw DomainError("ControlSignal: empty tensor");
    }
}

double effective_control_weight(const ControlSignal& control, int step_index, int total_steps) {
    if (total_steps <= 0) {
        throw ContractViolation("effective_control_weight: total_steps must be positive");
    }
    if (step_index < 0 || step_index >= total_steps) {
        throw ContractViolation("effective_control_weight: step_index " +
                                std::to_string(step_index) + " outside [0, " +
                                std::to_string(total_steps) + ")");
    }
    const int cutoff_step =
        static_cast<int>(std::floor(control.cutoff_fraction() * total_steps));
    return step_index < cutoff_step ? control.weight() : 0.0;
}

PromptEmbedding::PromptEmbedding(std::vector<std::vector<double>> tokens, Polarity polarity)
    : tokens_(std::move(tokens)), polarity_(polarity) {
    for (const auto& t : tokens_) {
        if (t.size() != tokens_.front().size()) {
            throw DomainError("PromptEmbedding: token vectors disagree on dimension");
        }
    }
}

}  // namespace veil

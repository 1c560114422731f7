#include "veil/diffusion.hpp"

#include <cmath>
#include <string>

#include "veil/errors.hpp"
#include "veil/rng.hpp"

namespace veil {

Latent::Latent(Tensor data) : data_(std::move(data)) {
    if (data_.channels() != kLatentChannels) {
        throw DomainError("Latent: expected " + std::to_string(kLatentChannels) +
                          " channels, got " + std::to_string(data_.channels()));
    }
    if (!data_.all_finite()) {
        throw DomainError("Latent: non-finite entries");
    }
}

Tensor EulerStepper::step(const Tensor& x, const Tensor& eps_hat, double sigma,
                          double sigma_next) const {
    if (!x.same_shape(eps_hat)) {
        throw ContractViolation("EulerStepper: eps_hat shape differs from latent");
    }
    Tensor out = x;
    out.axpy((sigma_next - sigma) / sigma, eps_hat);
    return out;
}

Img2ImgInit img2img_init(const Latent& latent, double strength, const SigmaSchedule& schedule,
                         std::uint64_t seed) {
    if (!(strength > 0.0 && strength <= 1.0)) {
        throw DomainError("img2img_init: strength must be in (0, 1], got " +
                          std::to_string(strength));
    }
    const int n = schedule.steps();
    const int start_step = n - static_cast<int>(std::floor(strength * n));
    Tensor x = latent.tensor();
    const double sigma = schedule.sigmas()[start_step];
    if (sigma > 0.0) {
        Rng rng(seed);
        for (double& v : x.data()) v += sigma * rng.normal();
    }
    return Img2ImgInit{Latent(std::move(x)), start_step};
}

namespace {

Tensor query_slot(const DenoiserAdapter& denoiser, const Tensor& x, double sigma,
                  const std::vector<ControlRef>& controls, const PromptEmbedding& prompt) {
    Tensor eps = denoiser.denoise(x, sigma, controls, prompt);
    if (!eps.same_shape(x)) {
        throw ContractViolation("sample: denoiser output shape differs from latent");
    }
    return eps;
}

}  // namespace

Latent sample(const DenoiserAdapter& denoiser, const Latent& x_start, int start_step,
              const SigmaSchedule& schedule, const std::vector<ControlSignal>& controls,
              const PromptPair& prompts, const GuidanceWeights& weights, const Stepper& stepper,
              StepTrace* trace) {
    const int n = schedule.steps();
    if (start_step < 0 || start_step > n) {
        throw ContractViolation("sample: start_step " + std::to_string(start_step) +
                                " outside [0, " + std::to_string(n) + "]");
    }

    const ControlSignal* identity = nullptr;
    std::vector<const ControlSignal*> spatial;
    for (const ControlSignal& c : controls) {
        if (c.kind() == ControlKind::identity_latent) {
            if (identity != nullptr) {
                throw ContractViolation("sample: more than one identity_latent control");
            }
            identity = &c;
        } else {
            spatial.push_back(&c);
        }
    }
    if (weights.w0 != 0.0 && identity == nullptr) {
        throw ContractViolation("sample: identity control required when w0 != 0");
    }

    Tensor x = x_start.tensor();
    for (int i = start_step; i < n; ++i) {
        const double sigma = schedule.sigmas()[i];
        const double sigma_next = schedule.sigmas()[i + 1];

        std::vector<ControlRef> active;
        StepRecord record;
        record.step_index = i;
        record.sigma = sigma;
        record.weights = weights;
        for (const ControlSignal* c : spatial) {
            const double w = effective_control_weight(*c, i, n);
            if (w != 0.0) {
                active.push_back(ControlRef{c, w});
                record.active_controls.emplace_back(c->kind(), w);
            }
        }

        Tensor eps_identity = Tensor::zeros_like(x);
        Tensor eps_negative = Tensor::zeros_like(x);
        Tensor eps_positive = Tensor::zeros_like(x);
        if (weights.w0 != 0.0) {
            const double w_id = effective_control_weight(*identity, i, n);
            std::vector<ControlRef> id_slot{ControlRef{identity, w_id}};
            eps_identity = query_slot(denoiser, x, sigma, id_slot, prompts.positive);
            record.identity_slot_queried = true;
        }
        if (weights.w1 != 0.0) {
            eps_negative = query_slot(denoiser, x, sigma, active, prompts.negative);
            record.negative_slot_queried = true;
        }
        if (weights.w2 != 0.0) {
            eps_positive = query_slot(denoiser, x, sigma, active, prompts.positive);
            record.positive_slot_queried = true;
        }

        const Tensor eps_hat =
            combine_noise_predictions(weights, eps_identity, eps_negative, eps_positive);
        x = stepper.step(x, eps_hat, sigma, sigma_next);
        if (trace != nullptr) trace->steps.push_back(std::move(record));
    }
    return Latent(std::move(x));
}

}  // namespace veil

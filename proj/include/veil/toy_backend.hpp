#ifndef VEIL_TOY_BACKEND_HPP
#define VEIL_TOY_BACKEND_HPP

#include <cstdint>
#include <memory>

#include "veil/diffusion.hpp"

namespace veil {

// Affine test denoiser: eps(x, sigma, controls, prompt) = x - target, where
// target is a seed-derived linear image of the conditioning:
//
//   target = sum_k w_k * B_k(control_k) + C(prompt)
//
// B_k pools a control to latent resolution and mixes its channels with
// seeded gains; C maps the mean prompt token through a seeded projection.
// When an identity_latent control is present the call is the identity
// (IDF) slot and the prediction is exactly x - z for that latent z,
// modelling a control branch that reconstructs its input faithfully. With
// the Euler stepper the sampling recursion then telescopes:
//
//   x_{i+1} - target = (sigma_{i+1} / sigma_i) * (x_i - target)
//
// so the final latent lands on the combined target exactly, which is what
// lets the guidance algebra be checked in closed form through the loop.
class ToyDenoiser final : public DenoiserAdapter {
public:
    explicit ToyDenoiser(std::uint64_t seed) : seed_(seed) {}

    Tensor denoise(const Tensor& latent, double sigma, const std::vector<ControlRef>& controls,
                   const PromptEmbedding& prompt) const override;

    // The fixed point the sampler converges to for a given slot conditioning.
    Tensor slot_target(const Tensor& latent_shape_ref, const std::vector<ControlRef>& controls,
                       const PromptEmbedding& prompt) const;

private:
    double gain(std::uint64_t tag_a, std::uint64_t tag_b, std::uint64_t tag_c) const;
    Tensor control_contribution(const Tensor& ref, const ControlSignal& control) const;
    Tensor prompt_contribution(const Tensor& ref, const PromptEmbedding& prompt) const;

    std::uint64_t seed_;
};

// 8x downsampling autoencoder: encode takes per-channel 8x8 block means
// and mixes image channels into the 4 latent channels with an orthonormal
// matrix; decode applies the transpose and broadcasts each latent cell
// over its block. decode(encode(img)) is exactly the blockwise-mean image.
class ToyAutoencoder final : public AutoencoderAdapter {
public:
    Latent encode(const Image& image) const override;
    Image decode(const Latent& latent) const override;
};

std::shared_ptr<DenoiserAdapter> make_toy_denoiser(std::uint64_t seed);
std::shared_ptr<AutoencoderAdapter> make_toy_autoencoder();

}  // namespace veil

#endif  // VEIL_TOY_BACKEND_HPP

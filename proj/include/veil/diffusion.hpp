#ifndef VEIL_DIFFUSION_HPP
#define VEIL_DIFFUSION_HPP

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "veil/guidance.hpp"
#include "veil/image.hpp"
#include "veil/schedule.hpp"
#include "veil/tensor.hpp"

namespace veil {

inline constexpr int kLatentChannels = 4;
inline constexpr int kLatentDownsample = 8;

// 4-channel latent at 1/8 of the source image resolution.
class Latent {
public:
    Latent() = default;
    explicit Latent(Tensor data);

    const Tensor& tensor() const { return data_; }
    Tensor& tensor() { return data_; }
    int height() const { return data_.height(); }
    int width() const { return data_.width(); }

private:
    Tensor data_;
};

// One control handed to the denoiser for a single step, with its effective
// (cutoff-adjusted) weight.
struct ControlRef {
    const ControlSignal* signal = nullptr;
    double effective_weight = 0.0;
};

// Denoiser contract. Returns the noise content of x (x minus the model's
// denoised estimate); the stepper divides by sigma to get the step
// direction. Output must match the latent shape, and identical inputs must
// produce identical outputs.
class DenoiserAdapter {
public:
    virtual ~DenoiserAdapter() = default;
    virtual Tensor denoise(const Tensor& latent, double sigma,
                           const std::vector<ControlRef>& controls,
                           const PromptEmbedding& prompt) const = 0;
    // Whether one instance may serve concurrent sample() calls.
    virtual bool shareable() const { return true; }
};

class AutoencoderAdapter {
public:
    virtual ~AutoencoderAdapter() = default;
    virtual Latent encode(const Image& image) const = 0;
    virtual Image decode(const Latent& latent) const = 0;
    virtual bool shareable() const { return true; }
};

// Advances the latent across one sigma interval given the combined noise
// prediction. Strategy slot: the reference EulerStepper is deterministic
// and exactly integrable for affine toy denoisers; stochastic integrators
// plug in behind the same interface.
class Stepper {
public:
    virtual ~Stepper() = default;
    virtual Tensor step(const Tensor& x, const Tensor& eps_hat, double sigma,
                        double sigma_next) const = 0;
};

// x_{i+1} = x_i + (sigma_{i+1} - sigma_i) * eps_hat / sigma_i
class EulerStepper final : public Stepper {
public:
    Tensor step(const Tensor& x, const Tensor& eps_hat, double sigma,
                double sigma_next) const override;
};

// Noised starting latent for img2img plus the schedule index to start from:
// start_step = n - floor(strength * n). Noise is unit Gaussian from seed,
// scaled by sigmas[start_step]; identical inputs give bit-identical output.
struct Img2ImgInit {
    Latent x_start;
    int start_step = 0;
};
Img2ImgInit img2img_init(const Latent& latent, double strength, const SigmaSchedule& schedule,
                         std::uint64_t seed);

// Per-step record of what the sampler handed to the denoiser.
struct StepRecord {
    int step_index = 0;
    double sigma = 0.0;
    bool identity_slot_queried = false;
    bool negative_slot_queried = false;
    bool positive_slot_queried = false;
    std::vector<std::pair<ControlKind, double>> active_controls;  // spatial slots only
    GuidanceWeights weights;
};

struct StepTrace {
    std::vector<StepRecord> steps;
};

struct PromptPair {
    PromptEmbedding positive;
    PromptEmbedding negative;
};

// Runs the guided denoising loop from start_step to the end of the
// schedule. Per step the denoiser is queried once per slot with a nonzero
// weight: the identity slot (the identity_latent control with the positive
// prompt), the negative slot and the positive slot (spatial controls with
// the respective prompt). Controls whose effective weight is zero at a
// step are not passed to the adapter. start_step == steps() is a no-op.
Latent sample(const DenoiserAdapter& denoiser, const Latent& x_start, int start_step,
              const SigmaSchedule& schedule, const std::vector<ControlSignal>& controls,
              const PromptPair& prompts, const GuidanceWeights& weights, const Stepper& stepper,
              StepTrace* trace = nullptr);

}  // namespace veil

#endif  // VEIL_DIFFUSION_HPP

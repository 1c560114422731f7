#include "veil/toy_backend.hpp"

#include <cmath>
#include <string>

#include "veil/errors.hpp"
#include "veil/hashing.hpp"

namespace veil {

namespace {

// Deterministic value in [-1, 1] from a hash chain.
double signed_unit(std::uint64_t h) {
    return static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace

double ToyDenoiser::gain(std::uint64_t tag_a, std::uint64_t tag_b, std::uint64_t tag_c) const {
    std::uint64_t h = splitmix64(seed_ ^ 0x746f79646e7a72ULL);
    h = splitmix64(h ^ tag_a);
    h = splitmix64(h ^ tag_b);
    h = splitmix64(h ^ tag_c);
    return signed_unit(h);
}

Tensor ToyDenoiser::control_contribution(const Tensor& ref, const ControlSignal& control) const {
    const Tensor& ct = control.tensor();
    const int lh = ref.height();
    const int lw = ref.width();
    int pool = 0;
    if (ct.height() == lh && ct.width() == lw) {
        pool = 1;
    } else if (ct.height() == lh * kLatentDownsample && ct.width() == lw * kLatentDownsample) {
        pool = kLatentDownsample;
    } else {
        throw ContractViolation(std::string("ToyDenoiser: control '") + to_string(control.kind()) +
                                "' spatial dims must match the latent or be 8x larger");
    }

    Tensor out = Tensor::zeros_like(ref);
    const std::uint64_t kind_tag = static_cast<std::uint64_t>(control.kind());
    for (int j = 0; j < ref.channels(); ++j) {
        for (int c = 0; c < ct.channels(); ++c) {
            const double g = gain(kind_tag, static_cast<std::uint64_t>(j),
                                  static_cast<std::uint64_t>(c));
            for (int y = 0; y < lh; ++y) {
                for (int x = 0; x < lw; ++x) {
                    double v = 0.0;
                    for (int dy = 0; dy < pool; ++dy)
                        for (int dx = 0; dx < pool; ++dx)
                            v += ct.at(c, y * pool + dy, x * pool + dx);
                    out.at(j, y, x) += g * v / (pool * pool);
                }
            }
        }
    }
    return out;
}

Tensor ToyDenoiser::prompt_contribution(const Tensor& ref, const PromptEmbedding& prompt) const {
    Tensor out = Tensor::zeros_like(ref);
    if (prompt.empty()) return out;
    const int dim = prompt.dim();
    std::vector<double> mean(dim, 0.0);
    for (const auto& tok : prompt.tokens())
        for (int d = 0; d < dim; ++d) mean[d] += tok[d];
    for (double& v : mean) v /= static_cast<double>(prompt.tokens().size());

    const std::uint64_t prompt_tag = 0x70726d70ULL;
    for (int j = 0; j < ref.channels(); ++j) {
        double cj = 0.0;
        for (int d = 0; d < dim; ++d) {
            cj += gain(prompt_tag, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(d)) *
                  mean[d];
        }
        cj /= static_cast<double>(dim);
        for (int y = 0; y < ref.height(); ++y)
            for (int x = 0; x < ref.width(); ++x) out.at(j, y, x) = cj;
    }
    return out;
}

Tensor ToyDenoiser::slot_target(const Tensor& ref, const std::vector<ControlRef>& controls,
                                const PromptEmbedding& prompt) const {
    for (const ControlRef& c : controls) {
        if (c.signal->kind() == ControlKind::identity_latent) {
            if (!c.signal->tensor().same_shape(ref)) {
                throw ContractViolation("ToyDenoiser: identity latent shape differs from x");
            }
            return c.signal->tensor();
        }
    }
    Tensor target = prompt_contribution(ref, prompt);
    for (const ControlRef& c : controls) {
        target.axpy(c.effective_weight, control_contribution(ref, *c.signal));
    }
    return target;
}

Tensor ToyDenoiser::denoise(const Tensor& latent, double /*sigma*/,
                            const std::vector<ControlRef>& controls,
                            const PromptEmbedding& prompt) const {
    Tensor eps = latent;
    eps.axpy(-1.0, slot_target(latent, controls, prompt));
    return eps;
}

namespace {

// Orthonormal columns of the scaled 4x4 Hadamard matrix. Entries are exact
// in binary, so the encode/decode round trip cancels without rounding.
constexpr double kMix[4][4] = {
    {0.5, 0.5, 0.5, 0.5},
    {0.5, -0.5, 0.5, -0.5},
    {0.5, 0.5, -0.5, -0.5},
    {0.5, -0.5, -0.5, 0.5},
};

}  // namespace

Latent ToyAutoencoder::encode(const Image& image) const {
    if (image.channels() != 1 && image.channels() != 3) {
        throw DomainError("ToyAutoencoder::encode: expected 1 or 3 channels");
    }
    if (image.height() % kLatentDownsample != 0 || image.width() % kLatentDownsample != 0) {
        throw DomainError("ToyAutoencoder::encode: dimensions must be divisible by " +
                          std::to_string(kLatentDownsample) + ", got " +
                          std::to_string(image.height()) + "x" + std::to_string(image.width()));
    }
    const Image rgb = image.to_rgb();
    const int lh = rgb.height() / kLatentDownsample;
    const int lw = rgb.width() / kLatentDownsample;
    Tensor z(kLatentChannels, lh, lw);
    for (int y = 0; y < lh; ++y) {
        for (int x = 0; x < lw; ++x) {
            double mean[3] = {0.0, 0.0, 0.0};
            for (int ic = 0; ic < 3; ++ic) {
                double s = 0.0;
                for (int dy = 0; dy < kLatentDownsample; ++dy)
                    for (int dx = 0; dx < kLatentDownsample; ++dx)
                        s += rgb.at(ic, y * kLatentDownsample + dy, x * kLatentDownsample + dx);
                mean[ic] = s / (kLatentDownsample * kLatentDownsample);
            }
            for (int j = 0; j < kLatentChannels; ++j) {
                double v = 0.0;
                for (int ic = 0; ic < 3; ++ic) v += kMix[j][ic] * mean[ic];
                z.at(j, y, x) = v;
            }
        }
    }
    return Latent(std::move(z));
}

Image ToyAutoencoder::decode(const Latent& latent) const {
    const Tensor& z = latent.tensor();
    const int h = z.height() * kLatentDownsample;
    const int w = z.width() * kLatentDownsample;
    Image img(3, h, w);
    for (int y = 0; y < z.height(); ++y) {
        for (int x = 0; x < z.width(); ++x) {
            for (int ic = 0; ic < 3; ++ic) {
                double v = 0.0;
                for (int j = 0; j < kLatentChannels; ++j) v += kMix[j][ic] * z.at(j, y, x);
                for (int dy = 0; dy < kLatentDownsample; ++dy)
                    for (int dx = 0; dx < kLatentDownsample; ++dx)
                        img.at(ic, y * kLatentDownsample + dy, x * kLatentDownsample + dx) = v;
            }
        }
    }
    return img;
}

std::shared_ptr<DenoiserAdapter> make_toy_denoiser(std::uint64_t seed) {
    return std::make_shared<ToyDenoiser>(seed);
}

std::shared_ptr<AutoencoderAdapter> make_toy_autoencoder() {
    return std::make_shared<ToyAutoencoder>();
}

}  // namespace veil

#ifndef VEIL_WIRE_HPP
#define VEIL_WIRE_HPP

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "veil/diffusion.hpp"

namespace veil {

// Request/response payloads for driving an out-of-process denoiser: a JSON
// header naming shapes and slots followed by little-endian float32 arrays
// (latent, then each control, then prompt tokens). Values cross the wire
// at float32 precision.

struct WireControl {
    ControlKind kind;
    double weight;
    Tensor tensor;
};

struct DenoiseRequest {
    Tensor latent;
    double sigma = 0.0;
    std::vector<WireControl> controls;
    PromptEmbedding prompt;
};

std::string encode_denoise_request(const Tensor& latent, double sigma,
                                   const std::vector<ControlRef>& controls,
                                   const PromptEmbedding& prompt);
DenoiseRequest decode_denoise_request(std::string_view payload);

std::string encode_denoise_response(const Tensor& eps);
Tensor decode_denoise_response(std::string_view payload);

// Denoiser adapter speaking the payload format over a caller-supplied
// transport (an HTTP round trip, a pipe, an in-process loopback in tests).
class RemoteDenoiser final : public DenoiserAdapter {
public:
    using Transport = std::function<std::string(const std::string& request_payload)>;

    explicit RemoteDenoiser(Transport transport) : transport_(std::move(transport)) {}

    Tensor denoise(const Tensor& latent, double sigma, const std::vector<ControlRef>& controls,
                   const PromptEmbedding& prompt) const override;
    bool shareable() const override { return false; }  // transport re-entrancy is unknown

private:
    Transport transport_;
};

}  // namespace veil

#endif  // VEIL_WIRE_HPP

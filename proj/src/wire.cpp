#include "veil/wire.hpp"

#include <cstring>

#include <json.hpp>

#include "veil/errors.hpp"

namespace veil {

namespace {

void append_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void append_f32(std::string& out, const std::vector<double>& values) {
    const std::size_t base = out.size();
    out.resize(base + values.size() * sizeof(float));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float f = static_cast<float>(values[i]);
        std::memcpy(out.data() + base + i * sizeof(float), &f, sizeof(float));
    }
}

struct Reader {
    std::string_view data;
    std::size_t pos = 0;

    void expect_magic(const char* magic) {
        if (data.size() < pos + 4 || data.compare(pos, 4, magic) != 0) {
            throw IoError("wire: bad magic");
        }
        pos += 4;
    }
    std::uint32_t read_u32() {
        if (data.size() < pos + 4) throw IoError("wire: truncated length");
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data[pos + i]);
        pos += 4;
        return v;
    }
    std::string read_bytes(std::size_t n) {
        if (data.size() < pos + n) throw IoError("wire: truncated payload");
        std::string out(data.substr(pos, n));
        pos += n;
        return out;
    }
    std::vector<double> read_f32(std::size_t count) {
        if (data.size() < pos + count * sizeof(float)) throw IoError("wire: truncated floats");
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i) {
            float f;
            std::memcpy(&f, data.data() + pos + i * sizeof(float), sizeof(float));
            out[i] = f;
        }
        pos += count * sizeof(float);
        return out;
    }
};

nlohmann::json shape_of(const Tensor& t) {
    return nlohmann::json{t.channels(), t.height(), t.width()};
}

Tensor tensor_from(const nlohmann::json& shape, std::vector<double> values) {
    if (shape.size() != 3) throw IoError("wire: shape must have 3 entries");
    Tensor t(shape.at(0).get<int>(), shape.at(1).get<int>(), shape.at(2).get<int>());
    if (t.size() != values.size()) throw IoError("wire: data size does not match shape");
    t.data() = std::move(values);
    return t;
}

}  // namespace

std::string encode_denoise_request(const Tensor& latent, double sigma,
                                   const std::vector<ControlRef>& controls,
                                   const PromptEmbedding& prompt) {
    nlohmann::json controls_json = nlohmann::json::array();
    for (const ControlRef& c : controls) {
        controls_json.push_back({{"kind", to_string(c.signal->kind())},
                                 {"weight", c.effective_weight},
                                 {"shape", shape_of(c.signal->tensor())}});
    }
    nlohmann::json header{
        {"version", 1},
        {"sigma", sigma},
        {"latent_shape", shape_of(latent)},
        {"controls", controls_json},
        {"prompt",
         {{"polarity", prompt.polarity() == Polarity::negative ? "negative" : "positive"},
          {"tokens", prompt.tokens().size()},
          {"dim", prompt.dim()}}},
    };
    const std::string header_text = header.dump();

    std::string out = "VDRQ";
    append_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    append_f32(out, latent.data());
    for (const ControlRef& c : controls) append_f32(out, c.signal->tensor().data());
    for (const auto& tok : prompt.tokens()) append_f32(out, tok);
    return out;
}

DenoiseRequest decode_denoise_request(std::string_view payload) {
    Reader r{payload};
    r.expect_magic("VDRQ");
    const auto header_len = r.read_u32();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.read_bytes(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("wire: bad request header: ") + e.what());
    }
    if (header.value("version", 0) != 1) throw IoError("wire: unsupported request version");

    DenoiseRequest req;
    req.sigma = header.at("sigma").get<double>();
    const auto& lshape = header.at("latent_shape");
    req.latent = tensor_from(lshape, r.read_f32(static_cast<std::size_t>(lshape.at(0).get<int>()) *
                                                lshape.at(1).get<int>() * lshape.at(2).get<int>()));
    for (const auto& cj : header.value("controls", nlohmann::json::array())) {
        const auto& cshape = cj.at("shape");
        const auto count = static_cast<std::size_t>(cshape.at(0).get<int>()) *
                           cshape.at(1).get<int>() * cshape.at(2).get<int>();
        req.controls.push_back(WireControl{control_kind_from_string(cj.at("kind").get<std::string>()),
                                           cj.at("weight").get<double>(),
                                           tensor_from(cshape, r.read_f32(count))});
    }
    const auto& pj = header.at("prompt");
    const auto n_tokens = pj.at("tokens").get<std::size_t>();
    const auto dim = pj.at("dim").get<std::size_t>();
    std::vector<std::vector<double>> tokens;
    for (std::size_t i = 0; i < n_tokens; ++i) tokens.push_back(r.read_f32(dim));
    req.prompt = PromptEmbedding(std::move(tokens),
                                 pj.at("polarity").get<std::string>() == "negative"
                                     ? Polarity::negative
                                     : Polarity::positive);
    return req;
}

std::string encode_denoise_response(const Tensor& eps) {
    nlohmann::json header{{"version", 1}, {"shape", shape_of(eps)}};
    const std::string header_text = header.dump();
    std::string out = "VDRS";
    append_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    append_f32(out, eps.data());
    return out;
}

Tensor decode_denoise_response(std::string_view payload) {
    Reader r{payload};
    r.expect_magic("VDRS");
    const auto header_len = r.read_u32();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.read_bytes(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("wire: bad response header: ") + e.what());
    }
    if (header.value("version", 0) != 1) throw IoError("wire: unsupported response version");
    const auto& shape = header.at("shape");
    const auto count = static_cast<std::size_t>(shape.at(0).get<int>()) *
                       shape.at(1).get<int>() * shape.at(2).get<int>();
    return tensor_from(shape, r.read_f32(count));
}

Tensor RemoteDenoiser::denoise(const Tensor& latent, double sigma,
                               const std::vector<ControlRef>& controls,
                               const PromptEmbedding& prompt) const {
    const std::string response =
        transport_(encode_denoise_request(latent, sigma, controls, prompt));
    return decode_denoise_response(response);
}

}  // namespace veil

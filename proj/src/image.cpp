#include "veil/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "veil/errors.hpp"

namespace veil {

Image Image::to_rgb() const {
    if (channels() == 3) return *this;
    if (channels() != 1) {
        throw DomainError("Image::to_rgb: expected 1 or 3 channels, got " +
                          std::to_string(channels()));
    }
    Image out(3, height(), width());
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height(); ++y)
            for (int x = 0; x < width(); ++x) out.at(c, y, x) = at(0, y, x);
    return out;
}

Image Image::grayscale() const {
    Image out(1, height(), width());
    for (int y = 0; y < height(); ++y) {
        for (int x = 0; x < width(); ++x) {
            double s = 0.0;
            for (int c = 0; c < channels(); ++c) s += at(c, y, x);
            out.at(0, y, x) = s / channels();
        }
    }
    return out;
}

namespace {

std::uint8_t quantize(double v) {
    double r = std::nearbyint(v);
    if (r < 0.0) r = 0.0;
    if (r > 255.0) r = 255.0;
    return static_cast<std::uint8_t>(r);
}

int read_pnm_token(std::istream& in) {
    // Skips whitespace and '#' comments per the PNM header grammar.
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        }
        c = in.get();
    }
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw IoError("PNM: malformed header");
    return value;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());
    char magic[2] = {0, 0};
    in.read(magic, 2);
    int channels;
    if (magic[0] == 'P' && magic[1] == '6') {
        channels = 3;
    } else if (magic[0] == 'P' && magic[1] == '5') {
        channels = 1;
    } else {
        throw IoError("unsupported image format (want P5/P6): " + path.string());
    }
    const int width = read_pnm_token(in);
    const int height = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (width <= 0 || height <= 0 || maxval != 255) {
        throw IoError("PNM: unsupported dimensions or maxval in " + path.string());
    }
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw IoError("PNM: truncated pixel data in " + path.string());
    }
    Image img(channels, height, width);
    std::size_t i = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) img.at(c, y, x) = raw[i++];
    return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw DomainError("encode_ppm: expected 1 or 3 channels");
    }
    const bool color = img.channels() == 3;
    std::string header = std::string(color ? "P6" : "P5") + "\n" + std::to_string(img.width()) +
                         " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + static_cast<std::size_t>(img.width()) * img.height() * img.channels());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) out.push_back(quantize(img.at(c, y, x)));
    return out;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
    const auto bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write image: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + path.string());
}

Image resize_bilinear(const Image& img, int out_height, int out_width) {
    if (out_height <= 0 || out_width <= 0) {
        throw DomainError("resize_bilinear: output dimensions must be positive");
    }
    if (out_height == img.height() && out_width == img.width()) return img;
    Image out(img.channels(), out_height, out_width);
    const double sy = static_cast<double>(img.height()) / out_height;
    const double sx = static_cast<double>(img.width()) / out_width;
    for (int y = 0; y < out_height; ++y) {
        const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
        const int y0 = std::min(static_cast<int>(fy), img.height() - 1);
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_width; ++x) {
            const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
            const int x0 = std::min(static_cast<int>(fx), img.width() - 1);
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < img.channels(); ++c) {
                const double top = img.at(c, y0, x0) * (1.0 - wx) + img.at(c, y0, x1) * wx;
                const double bot = img.at(c, y1, x0) * (1.0 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Image center_crop(const Image& img, int crop_height, int crop_width) {
    if (crop_height > img.height() || crop_width > img.width()) {
        throw DomainError("center_crop: crop larger than image");
    }
    const int oy = (img.height() - crop_height) / 2;
    const int ox = (img.width() - crop_width) / 2;
    Image out(img.channels(), crop_height, crop_width);
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < crop_height; ++y)
            for (int x = 0; x < crop_width; ++x) out.at(c, y, x) = img.at(c, oy + y, ox + x);
    return out;
}

}  // namespace veil

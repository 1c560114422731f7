#ifndef VEIL_IMAGE_HPP
#define VEIL_IMAGE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "veil/tensor.hpp"

namespace veil {

// Planar (C,H,W) image with pixel values on the 0..255 scale, stored as
// doubles so the pipeline keeps full precision until files are written.
class Image {
public:
    Image() = default;
    Image(int channels, int height, int width, double fill = 0.0)
        : pixels_(channels, height, width, fill) {}
    explicit Image(Tensor t) : pixels_(std::move(t)) {}

    int channels() const { return pixels_.channels(); }
    int height() const { return pixels_.height(); }
    int width() const { return pixels_.width(); }
    bool empty() const { return pixels_.empty(); }

    double& at(int c, int y, int x) { return pixels_.at(c, y, x); }
    double at(int c, int y, int x) const { return pixels_.at(c, y, x); }

    Tensor& tensor() { return pixels_; }
    const Tensor& tensor() const { return pixels_; }

    Image to_rgb() const;        // replicates a single channel 3x; no-op on RGB
    Image grayscale() const;     // mean over channels, 1xHxW

    double max_abs_diff(const Image& o) const { return pixels_.max_abs_diff(o.pixels_); }

private:
    Tensor pixels_;
};

// Binary PPM (P6, RGB) and PGM (P5, gray) with maxval 255. Writing rounds
// to nearest and clamps to [0, 255]; identical pixel data always produces
// identical bytes.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);
std::vector<std::uint8_t> encode_ppm(const Image& img);

// Bilinear resize of each channel.
Image resize_bilinear(const Image& img, int out_height, int out_width);

Image center_crop(const Image& img, int crop_height, int crop_width);

}  // namespace veil

#endif  // VEIL_IMAGE_HPP

#ifndef VEIL_TEST_SUPPORT_HPP
#define VEIL_TEST_SUPPORT_HPP

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "veil/image.hpp"
#include "veil/rng.hpp"
#include "veil/tensor.hpp"

namespace veil::test {

// Unique scratch directory, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        path_ = base / ("veil_test_" + tag + "_" + std::to_string(rd()) + "_" +
                        std::to_string(::getpid()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Image constant_image(double value, int h = 64, int w = 64, int channels = 3) {
    return Image(channels, h, w, value);
}

// Smooth gradient that stays below the toy face detector's threshold.
inline Image gradient_image(int h = 64, int w = 64) {
    Image img(3, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(0, y, x) = 40.0 + 120.0 * x / std::max(1, w - 1);
            img.at(1, y, x) = 40.0 + 120.0 * y / std::max(1, h - 1);
            img.at(2, y, x) = 90.0;
        }
    }
    return img;
}

struct Rect {
    int x0, y0, x1, y1;
};

// Gray background with bright rectangles the toy detector reports as faces.
inline Image face_image(const std::vector<Rect>& rects, int h = 64, int w = 64) {
    Image img(3, h, w, 90.0);
    for (const Rect& r : rects) {
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x)
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = 230.0;
    }
    return img;
}

inline Image noise_image(std::uint64_t seed, int h = 64, int w = 64) {
    Image img(3, h, w);
    Rng rng(seed);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img.at(c, y, x) = 40.0 + 120.0 * rng.uniform();
    return img;
}

inline Tensor random_tensor(Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
    Tensor t(c, h, w);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline std::vector<double> random_unit_vector(Rng& rng, int dim) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (double& e : v) {
        e = rng.normal();
        norm2 += e * e;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& e : v) e *= inv;
    return v;
}

}  // namespace veil::test

#endif  // VEIL_TEST_SUPPORT_HPP

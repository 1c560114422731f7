#ifndef VEIL_TENSOR_HPP
#define VEIL_TENSOR_HPP

#include <cstddef>
#include <vector>

#include "veil/errors.hpp"

namespace veil {

// Dense channels-first (C,H,W) tensor of doubles. Value type: copy is a
// deep copy, comparisons are element-wise.
class Tensor {
public:
    Tensor() = default;
    Tensor(int channels, int height, int width, double fill = 0.0);

    static Tensor zeros_like(const Tensor& t) {
        return Tensor(t.channels_, t.height_, t.width_);
    }

    int channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    bool same_shape(const Tensor& o) const {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }

    double& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }
    double at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;
    double max_abs_diff(const Tensor& o) const;

    // this += s * o (shapes must match)
    void axpy(double s, const Tensor& o);
    void scale(double s);

    bool operator==(const Tensor& o) const {
        return same_shape(o) && data_ == o.data_;
    }

private:
    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

}  // namespace veil

#endif  // VEIL_TENSOR_HPP

#include "veil/tensor.hpp"

#include <cmath>
#include <string>

namespace veil {

Tensor::Tensor(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
    if (channels <= 0 || height <= 0 || width <= 0) {
        throw DomainError("Tensor: dimensions must be positive, got " + std::to_string(channels) +
                          "x" + std::to_string(height) + "x" + std::to_string(width));
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::max_abs_diff(const Tensor& o) const {
    if (!same_shape(o)) {
        throw ContractViolation("Tensor::max_abs_diff: shape mismatch");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        m = std::max(m, std::fabs(data_[i] - o.data_[i]));
    }
    return m;
}

void Tensor::axpy(double s, const Tensor& o) {
    if (!same_shape(o)) {
        throw ContractViolation("Tensor::axpy: shape mismatch");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += s * o.data_[i];
    }
}

void Tensor::scale(double s) {
    for (double& v : data_) v *= s;
}

}  // namespace veil

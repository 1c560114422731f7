#ifndef VEIL_SCHEDULE_HPP
#define VEIL_SCHEDULE_HPP

#include <vector>

namespace veil {

// Noise schedule for the sampler: n strictly decreasing positive sigmas
// followed by an appended 0, so sigmas() has n+1 entries and step i moves
// from sigmas()[i] to sigmas()[i+1].
class SigmaSchedule {
public:
    explicit SigmaSchedule(std::vector<double> sigmas_with_terminal_zero);

    const std::vector<double>& sigmas() const { return sigmas_; }
    int steps() const { return static_cast<int>(sigmas_.size()) - 1; }
    double sigma_max() const { return sigmas_.front(); }
    double sigma_min() const { return sigmas_[sigmas_.size() - 2]; }

private:
    std::vector<double> sigmas_;
};

// Karras-style power interpolation between sigma_max and sigma_min:
//   sigma_i = (smax^(1/rho) + i/(n-1) * (smin^(1/rho) - smax^(1/rho)))^rho
// for i in 0..n-1, then a terminal 0. n = 1 degenerates to [sigma_max, 0].
SigmaSchedule karras_sigma_schedule(int n, double sigma_min, double sigma_max, double rho = 7.0);

}  // namespace veil

#endif  // VEIL_SCHEDULE_HPP

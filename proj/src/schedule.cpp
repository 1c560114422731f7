#include "veil/schedule.hpp"

#include <cmath>
#include <string>

#include "veil/errors.hpp"

namespace veil {

SigmaSchedule::SigmaSchedule(std::vector<double> sigmas_with_terminal_zero)
    : sigmas_(std::move(sigmas_with_terminal_zero)) {
    if (sigmas_.size() < 2) {
        throw DomainError("SigmaSchedule: need at least one step plus terminal zero");
    }
    if (sigmas_.back() != 0.0) {
        throw DomainError("SigmaSchedule: last entry must be 0");
    }
    for (std::size_t i = 0; i + 2 < sigmas_.size(); ++i) {
        if (!(sigmas_[i] > sigmas_[i + 1])) {
            throw DomainError("SigmaSchedule: sigmas must be strictly decreasing");
        }
    }
    if (!(sigmas_[sigmas_.size() - 2] > 0.0)) {
        throw DomainError("SigmaSchedule: sigmas must be positive before the terminal zero");
    }
}

SigmaSchedule karras_sigma_schedule(int n, double sigma_min, double sigma_max, double rho) {
    if (n < 1) throw DomainError("karras_sigma_schedule: n must be >= 1");
    if (!(sigma_min > 0.0)) throw DomainError("karras_sigma_schedule: sigma_min must be > 0");
    if (!(sigma_max > sigma_min)) {
        throw DomainError("karras_sigma_schedule: sigma_max must exceed sigma_min");
    }
    if (!(rho > 0.0)) throw DomainError("karras_sigma_schedule: rho must be > 0");

    std::vector<double> sigmas;
    sigmas.reserve(static_cast<std::size_t>(n) + 1);
    if (n == 1) {
        sigmas.push_back(sigma_max);
    } else {
        const double min_inv_rho = std::pow(sigma_min, 1.0 / rho);
        const double max_inv_rho = std::pow(sigma_max, 1.0 / rho);
        for (int i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / (n - 1);
            sigmas.push_back(std::pow(max_inv_rho + t * (min_inv_rho - max_inv_rho), rho));
        }
        // Pin the endpoints exactly; pow round-trips can drift in the last ulp.
        sigmas.front() = sigma_max;
        sigmas.back() = sigma_min;
    }
    sigmas.push_back(0.0);
    return SigmaSchedule(std::move(sigmas));
}

}  // namespace veil

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmtb/errors.hpp"

namespace dmtb {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfLight = 299'792'458.0;

constexpr double deg_to_rad(double deg) noexcept { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) noexcept { return rad * 180.0 / kPi; }

/// Wraps an angle into (-pi, pi].
inline double wrap_pi(double a) noexcept {
    double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
    if (r <= -kPi) r += 2.0 * kPi;
    return r;
}

/// Wraps degrees into (-180, 180].
inline double wrap_deg(double d) noexcept {
    double r = std::remainder(d, 360.0);
    if (r <= -180.0) r += 360.0;
    return r;
}

/// N x M complex gains between transmit elements (columns) and receivers (rows).
class ChannelMatrix {
public:
    ChannelMatrix() = default;
    explicit ChannelMatrix(CMatrix entries) : entries_(std::move(entries)) { validate(); }

    std::size_t receivers() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
    std::size_t elements() const noexcept { return static_cast<std::size_t>(entries_.cols()); }
    const CMatrix& entries() const noexcept { return entries_; }
    Complex operator()(std::size_t n, std::size_t m) const {
        return entries_(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    }

private:
    void validate() const {
        if (entries_.rows() < 1 || entries_.cols() < 2)
            throw InvalidArgument("channel matrix needs N >= 1 receivers and M >= 2 elements");
        if (!entries_.allFinite()) throw InvalidArgument("channel matrix has non-finite entries");
    }

    CMatrix entries_;
};

/// Per-symbol M-element excitation vectors.
struct WeightStream {
    std::vector<CVector> weights;
    double symbol_duration = 0.0;  // seconds
    double scale = 1.0;            // global target scalar applied before the solve

    std::size_t symbols() const noexcept { return weights.size(); }
    std::size_t elements() const noexcept {
        return weights.empty() ? 0 : static_cast<std::size_t>(weights.front().size());
    }
};

}  // namespace dmtb

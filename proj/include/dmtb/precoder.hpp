#pragma once

// Transmit weights from desired per-receiver values via the Moore-Penrose
// pseudoinverse of the channel matrix.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/SVD>

#include "dmtb/errors.hpp"
#include "dmtb/types.hpp"

namespace dmtb {

inline constexpr double kSingularValueCutoff = 1e-12;
inline constexpr double kRankResidualTolerance = 1e-6;

/// SVD-backed pseudoinverse of H, computed once and applied to many targets.
class Pseudoinverse {
public:
    explicit Pseudoinverse(const ChannelMatrix& h) : h_(h.entries()) {
        Eigen::JacobiSVD<CMatrix> svd(h_, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        const double cutoff = sv.size() > 0 ? kSingularValueCutoff * sv(0) : 0.0;
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
        rank_ = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i) {
            if (sv(i) > cutoff) {
                inv(i) = 1.0 / sv(i);
                ++rank_;
            }
        }
        pinv_ = svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
    }

    std::size_t rank() const noexcept { return rank_; }
    bool full_rank() const noexcept {
        return rank_ == static_cast<std::size_t>(std::min(h_.rows(), h_.cols()));
    }
    const CMatrix& matrix() const noexcept { return pinv_; }

    /// Minimum-norm (or least-squares) solution of H w = r.
    CVector solve(const CVector& r) const {
        if (r.size() != h_.rows()) throw DimensionMismatch("target length does not match channel receivers");
        CVector w = pinv_ * r;
        if (!full_rank()) {
            const double residual = (h_ * w - r).norm();
            if (residual > kRankResidualTolerance * r.norm())
                throw RankDeficient("targets are inconsistent with a rank-deficient channel estimate");
        }
        return w;
    }

private:
    CMatrix h_;
    CMatrix pinv_;
    std::size_t rank_ = 0;
};

inline CVector pinv_weights(const ChannelMatrix& h, const CVector& r) { return Pseudoinverse(h).solve(r); }

/// One weight vector per symbol so that receiver n sees s * exp(j phi_n(k)).
///
/// The scalar s is chosen once for the whole stream so that the largest
/// element magnitude over all symbols is exactly 1.
inline WeightStream build_weight_stream(const ChannelMatrix& h,
                                        std::span<const std::vector<double>> receiver_phases,
                                        double symbol_duration) {
    if (receiver_phases.size() != h.receivers())
        throw DimensionMismatch("need one phase sequence per receiver");
    if (!(symbol_duration > 0.0)) throw InvalidArgument("symbol duration must be positive");
    const std::size_t symbols = receiver_phases.front().size();
    for (const auto& p : receiver_phases)
        if (p.size() != symbols) throw DimensionMismatch("receiver phase sequences must have equal length");

    const Pseudoinverse pinv(h);
    const auto N = static_cast<Eigen::Index>(h.receivers());
    auto target = [&](std::size_t k) {
        CVector r(N);
        for (Eigen::Index n = 0; n < N; ++n)
            r(n) = std::polar(1.0, receiver_phases[static_cast<std::size_t>(n)][k]);
        return r;
    };

    double peak = 0.0;
    for (std::size_t k = 0; k < symbols; ++k) peak = std::max(peak, pinv.solve(target(k)).cwiseAbs().maxCoeff());

    WeightStream ws;
    ws.symbol_duration = symbol_duration;
    ws.scale = peak > 0.0 ? 1.0 / peak : 1.0;
    ws.weights.reserve(symbols);
    for (std::size_t k = 0; k < symbols; ++k) ws.weights.push_back(pinv.solve(ws.scale * target(k)));
    return ws;
}

}  // namespace dmtb

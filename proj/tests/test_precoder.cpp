#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "dmtb/precoder.hpp"
#include "oracles.hpp"

using namespace dmtb;

namespace {

CVector vec(std::initializer_list<Complex> v) {
    CVector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (auto x : v) out(i++) = x;
    return out;
}

const Complex j(0.0, 1.0);

}  // namespace

TEST(PinvWeights, IdentityChannel) {
    const auto w = pinv_weights(ChannelMatrix(CMatrix::Identity(2, 2)), vec({1.0, j}));
    EXPECT_NEAR((w - vec({1.0, j})).norm(), 0.0, 1e-15);
}

TEST(PinvWeights, SumDifferenceChannel) {
    CMatrix h(2, 2);
    h << 1, 1, 1, -1;
    EXPECT_NEAR((pinv_weights(ChannelMatrix(h), vec({2.0, 0.0})) - vec({1.0, 1.0})).norm(), 0.0, 1e-14);
}

TEST(PinvWeights, SingleReceiverMinimumNorm) {
    CMatrix h(1, 2);
    h << 1, 1;
    EXPECT_NEAR((pinv_weights(ChannelMatrix(h), vec({1.0})) - vec({0.5, 0.5})).norm(), 0.0, 1e-15);
}

TEST(PinvWeights, MatchesClosedFormOnRandomShapes) {
    std::mt19937_64 rng(31);
    for (auto [rows, cols] : {std::pair{1, 2}, {2, 2}, {2, 3}, {3, 2}, {2, 4}}) {
        for (int trial = 0; trial < 100; ++trial) {
            const CMatrix h = oracle::random_channel(rng, rows, cols);
            const Pseudoinverse p{ChannelMatrix(h)};
            EXPECT_LE((p.matrix() - oracle::closed_form_pinv(h)).cwiseAbs().maxCoeff(), 1e-10);
        }
    }
}

TEST(PinvWeights, ExactSolveResidual) {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 1000; ++trial) {
        const ChannelMatrix h(oracle::random_channel(rng, 2, 2));
        const CVector r = vec({oracle::random_complex(rng, 0.1, 2.0), oracle::random_complex(rng, 0.1, 2.0)});
        EXPECT_LE((h.entries() * pinv_weights(h, r) - r).norm(), 1e-9 * r.norm());
    }
}

TEST(PinvWeights, MinimumNormAgainstBruteForceGrid) {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        const CMatrix h = oracle::random_channel(rng, 1, 2);
        const Complex r = oracle::random_complex(rng, 0.1, 2.0);
        const double best = pinv_weights(ChannelMatrix(h), vec({r})).norm();
        for (int a = 0; a < 100; ++a) {
            for (int b = 0; b < 100; ++b) {
                const Complex w2(-2.0 + 4.0 * a / 99.0, -2.0 + 4.0 * b / 99.0);
                const Complex w1 = (r - h(0, 1) * w2) / h(0, 0);
                EXPECT_LE(best, std::sqrt(std::norm(w1) + std::norm(w2)) + 1e-9);
            }
        }
    }
}

TEST(PinvWeights, RankDeficientChannel) {
    CMatrix h(2, 2);
    h << 1, 1, 1, 1;
    const Pseudoinverse p{ChannelMatrix(h)};
    EXPECT_EQ(p.rank(), 1u);
    EXPECT_FALSE(p.full_rank());
    EXPECT_THROW(p.solve(vec({1.0, -1.0})), RankDeficient);
    EXPECT_NEAR((p.solve(vec({1.0, 1.0})) - vec({0.5, 0.5})).norm(), 0.0, 1e-14);
}

TEST(PinvWeights, DimensionMismatch) {
    EXPECT_THROW(pinv_weights(ChannelMatrix(CMatrix::Identity(2, 2)), vec({1.0, 1.0, 1.0})), DimensionMismatch);
}

TEST(BuildWeightStream, IdentityChannelPhases) {
    const std::vector<std::vector<double>> phases{{0.0, kPi / 2.0}, {0.0, -kPi / 2.0}};
    const auto ws = build_weight_stream(ChannelMatrix(CMatrix::Identity(2, 2)), phases, 1e-3);
    EXPECT_DOUBLE_EQ(ws.scale, 1.0);
    ASSERT_EQ(ws.symbols(), 2u);
    EXPECT_NEAR((ws.weights[0] - vec({1.0, 1.0})).norm(), 0.0, 1e-15);
    EXPECT_NEAR((ws.weights[1] - vec({j, -j})).norm(), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(ws.symbol_duration, 1e-3);
}

TEST(BuildWeightStream, SingleSymbolSumDifference) {
    CMatrix h(2, 2);
    h << 1, 1, 1, -1;
    const std::vector<std::vector<double>> phases{{0.0}, {0.0}};
    const auto ws = build_weight_stream(ChannelMatrix(h), phases, 1e-3);
    EXPECT_NEAR(ws.scale, 1.0, 1e-15);
    EXPECT_NEAR((ws.weights[0] - vec({1.0, 0.0})).norm(), 0.0, 1e-15);
}

TEST(BuildWeightStream, ScalingTargetsScalesWeights) {
    std::mt19937_64 rng(34);
    const ChannelMatrix h(oracle::random_channel(rng, 2, 2));
    const CVector r = vec({oracle::random_complex(rng, 0.5, 1.0), oracle::random_complex(rng, 0.5, 1.0)});
    const Complex s = oracle::random_complex(rng, 0.1, 3.0);
    EXPECT_LE((pinv_weights(h, s * r) - s * pinv_weights(h, r)).norm(), 1e-12 * pinv_weights(h, r).norm());
}

TEST(BuildWeightStream, NormalizedAndPhasePreserving) {
    std::mt19937_64 rng(35);
    std::uniform_real_distribution<double> ph(-kPi, kPi);
    for (int trial = 0; trial < 100; ++trial) {
        const ChannelMatrix h(oracle::random_channel(rng, 2, 2));
        std::vector<std::vector<double>> phases(2, std::vector<double>(20));
        for (auto& p : phases)
            for (auto& x : p) x = ph(rng);
        const auto ws = build_weight_stream(h, phases, 1e-3);
        double peak = 0.0;
        for (const auto& w : ws.weights) peak = std::max(peak, w.cwiseAbs().maxCoeff());
        EXPECT_NEAR(peak, 1.0, 1e-12);
        for (std::size_t k = 0; k < ws.symbols(); ++k) {
            const CVector r = h.entries() * ws.weights[k];
            for (Eigen::Index n = 0; n < 2; ++n) {
                EXPECT_NEAR(wrap_pi(std::arg(r(n)) - phases[static_cast<std::size_t>(n)][k]), 0.0, 1e-9);
                EXPECT_NEAR(std::abs(r(n)), ws.scale, 1e-9 * ws.scale);
            }
        }
    }
}

TEST(BuildWeightStream, RejectsRaggedPhases) {
    const std::vector<std::vector<double>> ragged{{0.0, 1.0}, {0.0}};
    EXPECT_THROW(build_weight_stream(ChannelMatrix(CMatrix::Identity(2, 2)), ragged, 1e-3), DimensionMismatch);
    const std::vector<std::vector<double>> one{{0.0}};
    EXPECT_THROW(build_weight_stream(ChannelMatrix(CMatrix::Identity(2, 2)), one, 1e-3), DimensionMismatch);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dmtb/metrics.hpp"
#include "dmtb/modem.hpp"
#include "oracles.hpp"

using namespace dmtb;

namespace {

Bits random_bits(std::mt19937_64& rng, std::size_t len) {
    std::bernoulli_distribution coin(0.5);
    Bits b(len);
    for (auto& x : b) x = coin(rng);
    return b;
}

}  // namespace

TEST(PositionalBitErrors, Examples) {
    EXPECT_EQ(positional_bit_errors(bits_from_string("0110"), bits_from_string("0110")), 0u);
    EXPECT_EQ(positional_bit_errors(bits_from_string("0110"), bits_from_string("0010")), 1u);
    EXPECT_EQ(positional_bit_errors(bits_from_string("01100110"), bits_from_string("011000110")), 2u);
    EXPECT_EQ(positional_bit_errors(bits_from_string("0110"), bits_from_string("01")), 2u);
    EXPECT_EQ(positional_bit_errors(bits_from_string("0110"), bits_from_string("011011111")), 0u);
}

TEST(ClassifyErrors, Examples) {
    EXPECT_EQ(classify_errors(bits_from_string("01100110"), bits_from_string("011000110")),
              (ErrorBreakdown{1, 0, 0}));
    const Bits tx = bits_from_string("0100100001100101011011000110110001101111");
    Bits rx = tx;
    rx[13] ^= 1u;
    rx[15] ^= 1u;
    EXPECT_EQ(classify_errors(tx, rx), (ErrorBreakdown{0, 0, 2}));
    EXPECT_EQ(positional_bit_errors(tx, rx), 2u);
    EXPECT_EQ(classify_errors(tx, tx), ErrorBreakdown{});
    EXPECT_EQ(classify_errors(tx, Bits{}), (ErrorBreakdown{0, tx.size(), 0}));
    EXPECT_EQ(classify_errors(Bits{}, tx), (ErrorBreakdown{tx.size(), 0, 0}));
}

TEST(ClassifyErrors, TieBreakPrefersSubstitution) {
    // "01" -> "10" costs 2 either as two flips or one insertion plus one deletion.
    EXPECT_EQ(classify_errors(bits_from_string("01"), bits_from_string("10")), (ErrorBreakdown{0, 0, 2}));
}

TEST(ClassifyErrors, DistanceMatchesFullTable) {
    std::mt19937_64 rng(51);
    std::uniform_int_distribution<std::size_t> len(0, 64);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto a = random_bits(rng, len(rng));
        const auto b = random_bits(rng, len(rng));
        const auto br = classify_errors(a, b);
        EXPECT_EQ(br.distance(), oracle::edit_distance(a, b));
        // Lengths must reconcile: rx = tx - deletions + insertions.
        EXPECT_EQ(a.size() + br.insertions, b.size() + br.deletions);
    }
}

TEST(ClassifyErrors, LongStreamsWithManyEdits) {
    std::mt19937_64 rng(52);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_bits(rng, 600);
        auto b = random_bits(rng, 500);
        EXPECT_EQ(classify_errors(a, b).distance(), oracle::edit_distance(a, b));
    }
}

TEST(PositionalBitErrors, InsertionCascade) {
    std::mt19937_64 rng(53);
    const std::size_t length = 800;
    std::uniform_int_distribution<std::size_t> pos(0, length - 1);
    for (int trial = 0; trial < 200; ++trial) {
        const auto tx = random_bits(rng, length);
        const std::size_t p = pos(rng);
        Bits rx = tx;
        rx.insert(rx.begin() + static_cast<std::ptrdiff_t>(p), static_cast<std::uint8_t>(rng() & 1u));
        const double shifted = static_cast<double>(length - p);
        const double mean = shifted / 2.0;
        const double sigma = std::sqrt(shifted) / 2.0;
        const double errors = static_cast<double>(positional_bit_errors(tx, rx));
        EXPECT_LE(std::abs(errors - mean), 5.0 * sigma + 1.0) << "p=" << p;
    }
}

TEST(BerStats, TableValues) {
    struct Row {
        std::uint64_t total, messages;
        const char* percent;
        const char* mean;
    };
    for (const Row& row : {Row{4780, 100, "5.98", "47.80"}, Row{6132, 100, "7.67", "61.32"},
                           Row{1665, 1000, "2.08", "1.67"}, Row{1901, 1000, "2.38", "1.90"}}) {
        std::vector<std::uint64_t> counts(row.messages, row.total / row.messages);
        for (std::uint64_t i = 0; i < row.total % row.messages; ++i) ++counts[i];
        const auto s = ber_stats(counts, 80000, row.messages);
        EXPECT_EQ(s.total_bit_errors, row.total);
        EXPECT_EQ(s.percent_2dp(), row.percent);
        EXPECT_EQ(s.mean_2dp(), row.mean);
        EXPECT_DOUBLE_EQ(s.mean_bit_errors, static_cast<double>(row.total) / static_cast<double>(row.messages));
    }
}

TEST(BerStats, AllZero) {
    const std::vector<std::uint64_t> zeros(10, 0);
    const auto s = ber_stats(zeros, 800, 10);
    EXPECT_EQ(s.total_bit_errors, 0u);
    EXPECT_EQ(s.percent_2dp(), "0.00");
    EXPECT_EQ(s.mean_bit_errors, 0.0);
    EXPECT_EQ(s.std_bit_errors, 0.0);
}

TEST(BerStats, SampleStandardDeviation) {
    const std::vector<std::uint64_t> counts{2, 4, 4, 4, 5, 5, 7, 9};
    const auto s = ber_stats(counts, 1000, counts.size());
    EXPECT_DOUBLE_EQ(s.mean_bit_errors, 5.0);
    EXPECT_NEAR(s.std_bit_errors, std::sqrt(32.0 / 7.0), 1e-12);
    EXPECT_EQ(ber_stats(std::vector<std::uint64_t>{3}, 10, 1).std_bit_errors, 0.0);
}

TEST(BerStats, Preconditions) {
    const std::vector<std::uint64_t> c{1, 2};
    EXPECT_THROW(ber_stats(c, 100, 3), InvalidArgument);
    EXPECT_THROW(ber_stats(c, 0, 2), InvalidArgument);
}

TEST(Fixed2Ratio, RoundsHalvesUp) {
    EXPECT_EQ(fixed2_ratio(1, 8), "0.13");   // 0.125
    EXPECT_EQ(fixed2_ratio(5, 1000), "0.01");  // 0.005
    EXPECT_EQ(fixed2_ratio(4, 1000), "0.00");
    EXPECT_EQ(fixed2_ratio(200, 1), "200.00");
    EXPECT_THROW(fixed2_ratio(1, 0), InvalidArgument);
}

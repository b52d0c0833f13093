#include <gtest/gtest.h>

#include <bit>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dmtb/link.hpp"
#include "dmtb/modem.hpp"
#include "dmtb/phrases.hpp"

using namespace dmtb;

namespace {

std::string random_ascii(std::mt19937_64& rng, std::size_t len) {
    std::uniform_int_distribution<int> c(0, 127);
    std::string s(len, ' ');
    for (auto& ch : s) ch = static_cast<char>(c(rng));
    return s;
}

Bits random_bits(std::mt19937_64& rng, std::size_t len) {
    std::bernoulli_distribution coin(0.5);
    Bits b(len);
    for (auto& x : b) x = coin(rng);
    return b;
}

DpskConfig config(int b) {
    DpskConfig c;
    c.bits_per_symbol = b;
    return c;
}

constexpr std::size_t kSps = 16;

}  // namespace

TEST(EncodeAscii, MostSignificantBitFirst) {
    EXPECT_EQ(bits_to_string(encode_ascii("A").bits), "01000001");
    EXPECT_TRUE(encode_ascii("").bits.empty());
    EXPECT_EQ(encode_ascii(std::string(100, 'x')).size(), 800u);
    EXPECT_THROW(encode_ascii("caf\xc3\xa9"), NonAscii);
}

TEST(PadMessages, PadsWithNul) {
    const std::vector<std::string> a{"ab", "a"};
    EXPECT_EQ(pad_messages(a), (std::vector<std::string>{"ab", std::string("a\0", 2)}));
    const std::vector<std::string> b{"xy", "zw"};
    EXPECT_EQ(pad_messages(b), b);
    const std::vector<std::string> c{"", "xy"};
    EXPECT_EQ(pad_messages(c), (std::vector<std::string>{std::string(2, '\0'), "xy"}));
    EXPECT_THROW(pad_messages(std::vector<std::string>{}), InvalidArgument);
}

TEST(DecodeAscii, ReportsDroppedBitsAndPadding) {
    EXPECT_EQ(decode_ascii(bits_from_string("01000001")).text, "A");
    const auto nine = decode_ascii(bits_from_string("010000011"));
    EXPECT_EQ(nine.text, "A");
    EXPECT_EQ(nine.dropped_bits, 1u);
    const auto padded = decode_ascii(encode_ascii(std::string("ab\0", 3)).bits);
    EXPECT_EQ(padded.text, "ab");
    EXPECT_EQ(padded.padding, 1u);
}

TEST(DpskModulate, OneBitExamples) {
    const auto p = dpsk_modulate(bits_from_string("110"), config(1)).phases;
    ASSERT_EQ(p.size(), 4u);
    EXPECT_DOUBLE_EQ(p[0], 0.0);
    EXPECT_DOUBLE_EQ(p[1], kPi / 2.0);
    EXPECT_DOUBLE_EQ(p[2], kPi);
    EXPECT_DOUBLE_EQ(p[3], kPi / 2.0);
    DpskConfig c = config(1);
    c.initial_phase = 0.3;
    EXPECT_EQ(dpsk_modulate(Bits{}, c).phases, std::vector<double>{0.3});
}

TEST(DpskModulate, TwoBitGrayMap) {
    const std::vector<std::pair<std::string, double>> map{
        {"00", kPi / 4.0}, {"01", 3.0 * kPi / 4.0}, {"11", -3.0 * kPi / 4.0}, {"10", -kPi / 4.0}};
    for (const auto& [bits, inc] : map) {
        const auto p = dpsk_modulate(bits_from_string(bits), config(2)).phases;
        ASSERT_EQ(p.size(), 2u);
        EXPECT_NEAR(p[1] - p[0], inc, 1e-15) << bits;
    }
}

TEST(DpskModulate, PadsPartialGroupWithZeros) {
    const auto s = dpsk_modulate(bits_from_string("10110"), config(3));
    EXPECT_EQ(s.tail_padding, 1u);
    EXPECT_EQ(s.phases.size(), 3u);
}

TEST(Constellation, NonDegenerateBijectiveAndGray) {
    for (int b = 1; b <= 4; ++b) {
        const auto inc = constellation(b);
        const std::size_t count = inc.size();
        ASSERT_EQ(count, std::size_t{1} << b);
        double min_dist = 10.0;
        for (std::size_t u = 0; u < count; ++u) {
            EXPECT_GT(std::abs(inc[u]), 1e-9);
            for (std::size_t v = u + 1; v < count; ++v)
                min_dist = std::min(min_dist, std::abs(wrap_pi(inc[u] - inc[v])));
        }
        EXPECT_NEAR(min_dist, kPi / static_cast<double>(std::size_t{1} << (b - 1)), 1e-12);

        // Sort labels by angle and check neighbours differ in one bit.
        std::vector<unsigned> order(count);
        for (unsigned v = 0; v < count; ++v) order[v] = v;
        std::sort(order.begin(), order.end(), [&](unsigned x, unsigned y) { return inc[x] < inc[y]; });
        if (b > 1) {
            for (std::size_t i = 0; i < count; ++i)
                EXPECT_EQ(std::popcount(order[i] ^ order[(i + 1) % count]), 1) << "B=" << b;
        }
    }
    EXPECT_THROW(constellation(0), InvalidArgument);
    EXPECT_THROW(constellation(5), InvalidArgument);
}

TEST(NearestLabel, TieGoesToSmallerLabel) {
    const auto inc = constellation(1);
    EXPECT_EQ(nearest_label(0.0, inc), 0u);
    EXPECT_EQ(nearest_label(kPi, inc), 0u);
    const auto inc2 = constellation(2);
    // Midway between +pi/4 (label 0) and +3pi/4 (label 1).
    EXPECT_EQ(nearest_label(kPi / 2.0, inc2), 0u);
}

TEST(SyncDetect, RoundTripAllBitsPerSymbol) {
    std::mt19937_64 rng(41);
    for (int b = 1; b <= 4; ++b) {
        for (int trial = 0; trial < 25; ++trial) {
            const std::string text = random_ascii(rng, 1 + trial * 3);
            const auto cfg = config(b);
            const auto bits = encode_ascii(text).bits;
            const auto sym = dpsk_modulate(bits, cfg);
            const auto trace = ideal_trace(sym.phases, kSps, cfg.symbol_rate * kSps);
            auto rx = sync_detect(trace, cfg, uniform_boundaries(sym.phases.size(), kSps));
            rx.resize(rx.size() - sym.tail_padding);
            EXPECT_EQ(decode_ascii(rx).text, text);
        }
    }
}

TEST(SyncDetect, SurvivesPhaseNoiseAtATenthOfTheSpacing) {
    std::mt19937_64 rng(42);
    for (int b = 1; b <= 4; ++b) {
        const auto cfg = config(b);
        const double sigma = kPi / static_cast<double>(std::size_t{1} << (b - 1)) / 10.0;
        std::normal_distribution<double> noise(0.0, sigma);
        for (int trial = 0; trial < 20; ++trial) {
            const auto bits = random_bits(rng, 240);
            const auto sym = dpsk_modulate(bits, cfg);
            auto trace = ideal_trace(sym.phases, kSps, cfg.symbol_rate * kSps);
            for (auto& p : trace.phase) p += noise(rng);
            EXPECT_EQ(sync_detect(trace, cfg, uniform_boundaries(sym.phases.size(), kSps)), bits) << "B=" << b;
        }
    }
}

TEST(SyncDetect, EmptyInterval) {
    PhaseTrace t;
    t.sample_rate = 16000.0;
    t.phase.assign(32, 0.0);
    const std::vector<std::size_t> dup{0, 16, 16};
    EXPECT_THROW(sync_detect(t, config(1), dup), EmptyInterval);
    const std::vector<std::size_t> past{0, 40};
    EXPECT_THROW(sync_detect(t, config(1), past), EmptyInterval);
}

TEST(AsyncDetect, MatchesSyncOnCleanTraces) {
    std::mt19937_64 rng(43);
    for (int b = 1; b <= 4; ++b) {
        const auto cfg = config(b);
        for (int trial = 0; trial < 20; ++trial) {
            const auto bits = random_bits(rng, 120);
            const auto sym = dpsk_modulate(bits, cfg);
            const auto trace = ideal_trace(sym.phases, kSps, cfg.symbol_rate * kSps);
            EXPECT_EQ(async_detect(trace, cfg), sync_detect(trace, cfg, uniform_boundaries(sym.phases.size(), kSps)));
        }
    }
}

TEST(AsyncDetect, InjectedExcursionInsertsOneGroup) {
    const std::size_t sps = 32;
    const auto cfg = config(1);
    const Bits bits = bits_from_string("1011");
    const auto sym = dpsk_modulate(bits, cfg);
    auto trace = ideal_trace(sym.phases, sps, cfg.symbol_rate * sps);
    for (std::size_t i = sps + 16; i < sps + 20; ++i) trace.phase[i] += 1.0;
    const auto rx = async_detect(trace, cfg);
    ASSERT_EQ(rx.size(), bits.size() + 1);
    EXPECT_EQ(bits_to_string(rx), "10011");
}

TEST(AsyncDetect, NoisyTraceWithoutRefractoryInserts) {
    const auto cfg = config(1);
    DetectorConfig det;
    det.refractory = 0.0;
    det.transition_threshold = DetectorConfig::default_threshold(1) / 2.0;
    int longer = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, 0.3);
        const auto bits = random_bits(rng, 100);
        const auto sym = dpsk_modulate(bits, cfg);
        auto trace = ideal_trace(sym.phases, kSps, cfg.symbol_rate * kSps);
        for (auto& p : trace.phase) p += noise(rng);
        longer += async_detect(trace, cfg, det).size() > bits.size();
    }
    EXPECT_GE(longer, 95);
}

TEST(AsyncDetect, InsertionsGrowWithTimingJitter) {
    const Scenario base = default_async_scenario();
    const auto cal = simulate_calibration(base, 1);
    LinkOptions opts;
    opts.detector = DetectorKind::Async;
    double previous = -1.0;
    for (double jitter : {0.0, 0.1, 0.2}) {
        Scenario sc = base;
        sc.noise.timing_jitter = jitter;
        std::size_t insertions = 0;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const std::vector<std::string> msgs{random_printable(40, seed), random_printable(40, seed + 1000)};
            const auto tx = transmit(sc, cal.result.h, msgs, opts, seed, 0.0);
            for (const auto& ch : tx.channels) insertions += ch.breakdown.insertions;
        }
        const double mean = static_cast<double>(insertions) / 50.0;
        EXPECT_GE(mean, previous) << "jitter " << jitter;
        previous = mean;
    }
    EXPECT_GT(previous, 0.0);
}

TEST(DetectorConfig, Validation) {
    DetectorConfig d;
    d.confirmation_window = 0;
    EXPECT_THROW(d.validate(), InvalidArgument);
    d = {};
    d.refractory = 1.0;
    EXPECT_THROW(d.validate(), InvalidArgument);
    EXPECT_DOUBLE_EQ(DetectorConfig::default_threshold(1), kPi / 4.0);
}

TEST(PhaseTrace, UnwrapRemovesJumps) {
    const std::vector<double> wrapped{3.0, -3.0, -2.9, 3.1};
    const auto u = unwrap(wrapped);
    for (std::size_t i = 1; i < u.size(); ++i) EXPECT_LT(std::abs(u[i] - u[i - 1]), kPi);
    EXPECT_NEAR(u[1], 3.0 + (2.0 * kPi - 6.0), 1e-12);
}

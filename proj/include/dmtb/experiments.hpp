#pragma once

// Batch BER experiments: calibrate once, then send many random messages per
// channel and account positional errors and their insertion/flip breakdown.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dmtb/link.hpp"
#include "dmtb/metrics.hpp"
#include "dmtb/phrases.hpp"
#include "dmtb/rng.hpp"
#include "dmtb/scenario.hpp"

namespace dmtb {

struct ExperimentConfig {
    std::size_t num_messages = 100;
    std::size_t chars_per_message = 100;
    LinkOptions link;
    std::uint64_t master_seed = 1;
    unsigned threads = 0;  // 0: hardware concurrency

    void validate() const {
        if (num_messages < 1) throw InvalidArgument("num_messages must be >= 1");
        if (chars_per_message < 1) throw InvalidArgument("chars_per_message must be >= 1");
        link.validate();
    }
};

struct MessageLog {
    std::size_t index = 0;
    std::string text;
    Bits tx_bits;
    Bits rx_bits;  // decoded stream compared against tx_bits
    std::size_t bit_errors = 0;
    ErrorBreakdown breakdown;
    bool fec_framing_lost = false;
};

struct ChannelSummary {
    BerStats stats;
    ErrorBreakdown breakdown;
    std::size_t messages_with_insertions = 0;
};

struct ExperimentResult {
    ExperimentConfig config;
    SimulatedCalibration calibration;
    std::uint64_t scenario_seed = 0;
    std::vector<ChannelSummary> channels;
    std::vector<std::vector<MessageLog>> logs;  // [channel][message]
    std::vector<PhaseTrace> first_message_traces;
    std::size_t bits_per_channel = 0;
};

namespace detail {

/// Runs fn(i) for i in [0, count) on a small worker pool; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

inline std::uint64_t message_text_seed(std::uint64_t master, std::size_t message, std::size_t channel) {
    return derive_seed(master, {message, channel + 1});
}

inline std::uint64_t message_noise_seed(std::uint64_t scenario_seed, std::uint64_t master, std::size_t message) {
    return derive_seed(scenario_seed, {master, message});
}

/// A one-off transmission with seed S is message 0 of a batch with master seed S.
inline std::uint64_t transmission_noise_seed(std::uint64_t scenario_seed, std::uint64_t seed) {
    return message_noise_seed(scenario_seed, seed, 0);
}

inline std::uint64_t calibration_seed(std::uint64_t scenario_seed, std::uint64_t master) {
    return derive_seed(scenario_seed, {master, 0xCA11B8A7EULL});
}

/// Air time of one message, identical for every message of a batch.
inline double message_duration(const ExperimentConfig& cfg, const LinkTiming& timing) {
    std::size_t air = cfg.chars_per_message * 8;
    if (cfg.link.fec) {
        const std::size_t k = cfg.link.fec_length / 2;
        air = (air + k - 1) / k * cfg.link.fec_length;
    }
    return transmission_duration(air, cfg.link.bits_per_symbol, timing);
}

/// Message i depends only on (scenario, config, i): its texts, noise seed and
/// start time are derived from the index, never from execution order.
inline std::vector<MessageLog> run_message(const Scenario& scenario, const ExperimentConfig& cfg,
                                           const SimulatedCalibration& cal, std::size_t i,
                                           std::vector<PhaseTrace>* traces_out = nullptr) {
    const std::size_t channels = scenario.receivers.size();
    std::vector<std::string> texts;
    for (std::size_t n = 0; n < channels; ++n)
        texts.push_back(random_printable(cfg.chars_per_message, message_text_seed(cfg.master_seed, i, n)));
    const double start = cal.completed_at + static_cast<double>(i) * message_duration(cfg, scenario.link);
    auto tx = transmit(scenario, cal.result.h, texts, cfg.link,
                       message_noise_seed(scenario.noise.seed, cfg.master_seed, i), start);
    std::vector<MessageLog> logs;
    for (auto& ch : tx.channels) {
        MessageLog log;
        log.index = i;
        log.text = ch.message;
        log.tx_bits = std::move(ch.tx_bits);
        log.rx_bits = std::move(ch.decoded_bits);
        log.bit_errors = ch.bit_errors;
        log.breakdown = ch.breakdown;
        log.fec_framing_lost = ch.fec_framing_lost;
        logs.push_back(std::move(log));
    }
    if (traces_out) *traces_out = std::move(tx.traces);
    return logs;
}

inline ExperimentResult run_experiment(const Scenario& scenario, const ExperimentConfig& cfg) {
    cfg.validate();
    scenario.validate();
    ExperimentResult res;
    res.config = cfg;
    res.scenario_seed = scenario.noise.seed;
    res.calibration = simulate_calibration(scenario, calibration_seed(scenario.noise.seed, cfg.master_seed));

    const std::size_t channels = scenario.receivers.size();
    std::vector<std::vector<MessageLog>> per_message(cfg.num_messages);
    detail::parallel_for(cfg.num_messages, cfg.threads, [&](std::size_t i) {
        per_message[i] = run_message(scenario, cfg, res.calibration, i, i == 0 ? &res.first_message_traces : nullptr);
    });

    res.bits_per_channel = cfg.num_messages * cfg.chars_per_message * 8;
    res.logs.assign(channels, {});
    for (std::size_t n = 0; n < channels; ++n) {
        ChannelSummary summary;
        std::vector<std::uint64_t> counts;
        counts.reserve(cfg.num_messages);
        for (std::size_t i = 0; i < cfg.num_messages; ++i) {
            auto& log = per_message[i][n];
            counts.push_back(log.bit_errors);
            summary.breakdown += log.breakdown;
            if (log.breakdown.insertions > 0) ++summary.messages_with_insertions;
            res.logs[n].push_back(std::move(log));
        }
        summary.stats = ber_stats(counts, res.bits_per_channel, cfg.num_messages);
        res.channels.push_back(std::move(summary));
    }
    return res;
}

}  // namespace dmtb

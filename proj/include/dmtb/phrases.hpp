#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dmtb/rng.hpp"

namespace dmtb {

inline constexpr std::array<std::string_view, 24> kPhrasePool{
    "The array knows which way to look.",
    "Two beams, one aperture.",
    "Calibrate first, then talk.",
    "Phase is cheaper than power.",
    "Every null has a purpose.",
    "The second receiver hears nothing of this.",
    "Quadrature settles the argument.",
    "Ninety degrees either way.",
    "Spectrum is shared, space is not.",
    "A matrix inverse walks into a lab.",
    "Noise is just unmodeled signal.",
    "The cosine is even, the sine is not.",
    "Small arrays, big ideas.",
    "Endfire on the right.",
    "One symbol at a time.",
    "Keep the weights under one.",
    "The channel drifted while we were talking.",
    "Insertions cascade, flips do not.",
    "Shorter messages, fewer surprises.",
    "Parity checks never sleep.",
    "Four transmissions are enough.",
    "This message was steered, not broadcast.",
    "Directional by design.",
    "Try again after recalibration.",
};

/// Uniform printable ASCII (codes 32..126).
inline std::string random_printable(std::size_t length, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> code(32, 126);
    std::string s(length, ' ');
    for (auto& c : s) c = static_cast<char>(code(rng));
    return s;
}

/// `count` distinct phrases from the built-in pool.
inline std::vector<std::string> generate_phrases(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> idx(kPhrasePool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(kPhrasePool[idx[i % idx.size()]]);
    return out;
}

}  // namespace dmtb

#pragma once

// Scenario files: array geometry, receivers, impairments and link timing.
// Angles are degrees on disk and radians in memory.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>  // nlohmann, vendored

#include "dmtb/array_channel.hpp"
#include "dmtb/calibration.hpp"
#include "dmtb/errors.hpp"
#include "dmtb/types.hpp"

namespace dmtb {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

struct LinkTiming {
    double symbol_rate = 1000.0;
    std::size_t samples_per_symbol = 16;
    double initial_phase = 0.0;  // radians

    double sample_rate() const noexcept { return symbol_rate * static_cast<double>(samples_per_symbol); }
};

struct CalibrationSettings {
    std::size_t samples = 256;  // per calibration transmission
    double floor = kDefaultMeasurementFloor;
};

struct Scenario {
    double carrier_hz = 4.2e9;
    std::vector<double> element_positions_wavelengths{0.0, 0.5};
    std::vector<ReceiverSpec> receivers;
    NoiseConfig noise;
    LinkTiming link;
    CalibrationSettings calibration;

    ArrayGeometry geometry() const { return ArrayGeometry::from_wavelengths(element_positions_wavelengths, carrier_hz); }
    ChannelMatrix channel() const { return synth_channel(geometry(), receivers); }

    void validate() const {
        (void)geometry();
        if (receivers.empty()) throw InvalidArgument("scenario needs at least one receiver");
        for (const auto& r : receivers) r.validate();
        noise.validate();
        if (!(link.symbol_rate > 0.0)) throw InvalidArgument("link.symbol_rate must be positive");
        if (link.samples_per_symbol < 8) throw InvalidArgument("link.samples_per_symbol must be >= 8");
        if (calibration.samples < 8) throw InvalidArgument("calibration.samples must be >= 8");
        if (!(calibration.floor >= 0.0)) throw InvalidArgument("calibration.floor must be >= 0");
    }
};

namespace detail {

template <class T>
T require(const Json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ParseError(where + ": missing field \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(where + ": field \"" + std::string(key) + "\" has the wrong type");
    }
}

template <class T>
T optional_field(const Json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    return require<T>(j, key, where);
}

/// Degrees are written with 12 significant digits so that the
/// degree -> radian -> degree trip lands on the same text.
inline double degrees_for_export(double radians) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, rad_to_deg(radians), std::chars_format::general, 12);
    double out = 0.0;
    std::from_chars(buf, res.ptr, out);
    return out == 0.0 ? 0.0 : out;
}

}  // namespace detail

inline Json scenario_to_json(const Scenario& s) {
    using detail::degrees_for_export;
    Json j;
    j["carrier_hz"] = s.carrier_hz;
    j["element_positions_wavelengths"] = s.element_positions_wavelengths;
    j["receivers"] = Json::array();
    for (const auto& r : s.receivers)
        j["receivers"].push_back({{"angle_deg", degrees_for_export(r.angle)}, {"range_m", r.range}, {"gain", r.gain}});
    j["noise"] = {{"awgn_sigma", s.noise.awgn_sigma},
                  {"phase_noise_sigma_deg", degrees_for_export(s.noise.phase_noise_sigma)},
                  {"timing_jitter", s.noise.timing_jitter},
                  {"drift_deg_per_s", degrees_for_export(s.noise.drift_rate)},
                  {"seed", s.noise.seed}};
    j["link"] = {{"symbol_rate", s.link.symbol_rate},
                 {"samples_per_symbol", s.link.samples_per_symbol},
                 {"initial_phase_deg", degrees_for_export(s.link.initial_phase)}};
    j["calibration"] = {{"samples", s.calibration.samples}, {"floor", s.calibration.floor}};
    return j;
}

inline Scenario scenario_from_json(const Json& j) {
    using detail::optional_field;
    using detail::require;
    if (!j.is_object()) throw ParseError("scenario: top level must be an object");
    Scenario s;
    s.carrier_hz = require<double>(j, "carrier_hz", "scenario");
    s.element_positions_wavelengths = optional_field<std::vector<double>>(
        j, "element_positions_wavelengths", std::vector<double>{0.0, 0.5}, "scenario");
    if (!j.contains("receivers") || !j["receivers"].is_array())
        throw ParseError("scenario: missing field \"receivers\"");
    for (const auto& r : j["receivers"]) {
        ReceiverSpec rx;
        rx.angle = deg_to_rad(require<double>(r, "angle_deg", "receivers[]"));
        rx.range = require<double>(r, "range_m", "receivers[]");
        rx.gain = optional_field<double>(r, "gain", 1.0, "receivers[]");
        s.receivers.push_back(rx);
    }
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        s.noise.awgn_sigma = optional_field<double>(n, "awgn_sigma", 0.0, "noise");
        s.noise.phase_noise_sigma = deg_to_rad(optional_field<double>(n, "phase_noise_sigma_deg", 0.0, "noise"));
        s.noise.timing_jitter = optional_field<double>(n, "timing_jitter", 0.0, "noise");
        s.noise.drift_rate = deg_to_rad(optional_field<double>(n, "drift_deg_per_s", 0.0, "noise"));
        s.noise.seed = optional_field<std::uint64_t>(n, "seed", 0, "noise");
    }
    if (j.contains("link")) {
        const auto& l = j["link"];
        s.link.symbol_rate = optional_field<double>(l, "symbol_rate", s.link.symbol_rate, "link");
        s.link.samples_per_symbol =
            optional_field<std::size_t>(l, "samples_per_symbol", s.link.samples_per_symbol, "link");
        s.link.initial_phase = deg_to_rad(optional_field<double>(l, "initial_phase_deg", 0.0, "link"));
    }
    if (j.contains("calibration")) {
        const auto& c = j["calibration"];
        s.calibration.samples = optional_field<std::size_t>(c, "samples", s.calibration.samples, "calibration");
        s.calibration.floor = optional_field<double>(c, "floor", s.calibration.floor, "calibration");
    }
    try {
        s.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("scenario: ") + e.what());
    }
    return s;
}

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    try {
        return scenario_from_json(read_json_file(path));
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        if (msg.find(path.string()) != std::string::npos) throw;
        throw ParseError(path.string() + ": " + msg);
    }
}

/// Two-element half-wavelength array at 4.2 GHz, receivers at 80 and 165
/// degrees from endfire about four feet away.
inline Scenario testbed_scenario() {
    Scenario s;
    s.receivers = {ReceiverSpec{deg_to_rad(80.0), 1.2192, 1.0}, ReceiverSpec{deg_to_rad(165.0), 1.2192, 1.0}};
    return s;
}

/// Impairments under which the asynchronous detector shows insertion errors.
inline Scenario default_async_scenario() {
    Scenario s = testbed_scenario();
    s.noise.awgn_sigma = 0.02;
    s.noise.phase_noise_sigma = deg_to_rad(3.0);
    s.noise.timing_jitter = 0.1;
    s.noise.seed = 2024;
    return s;
}

}  // namespace dmtb

#pragma once

// Flat-file exports and their parsers. Every format carries a format_version
// and parses back into a value that re-exports to the same bytes.
//
//   weights.csv     # format_version=1 / symbol_index,element_index,re,im
//   phase_{n}.csv   # format_version=1 / time_s,receiver_id,phase_deg
//   bits_*.log      aligned TX/RX rows with mismatch markers
//   calibration     JSON report
//   stats.json      experiment summary

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dmtb/calibration.hpp"
#include "dmtb/errors.hpp"
#include "dmtb/experiments.hpp"
#include "dmtb/link.hpp"
#include "dmtb/metrics.hpp"
#include "dmtb/modem.hpp"
#include "dmtb/scenario.hpp"
#include "dmtb/types.hpp"

namespace dmtb {

/// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
    if (x == 0.0) x = 0.0;  // drop the sign of -0
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(std::string(what) + ": not a number: \"" + std::string(s) + "\"");
    return v;
}

inline std::uint64_t parse_uint(std::string_view s, std::string_view what) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(std::string(what) + ": not an unsigned integer: \"" + std::string(s) + "\"");
    return v;
}

namespace detail {

inline constexpr std::string_view kVersionLine = "# format_version=1";

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == sep) {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::vector<std::string> read_lines(std::istream& is) {
    std::vector<std::string> lines;
    for (std::string line; std::getline(is, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

/// Checks the version comment and header row, returns the data lines.
inline std::vector<std::string> csv_body(std::istream& is, std::string_view header, std::string_view what) {
    auto lines = read_lines(is);
    if (lines.size() < 2 || lines[0] != kVersionLine)
        throw ParseError(std::string(what) + ": missing \"" + std::string(kVersionLine) + "\" line");
    if (lines[1] != header) throw ParseError(std::string(what) + ": expected header \"" + std::string(header) + "\"");
    lines.erase(lines.begin(), lines.begin() + 2);
    return lines;
}

inline void check_version(const Json& j, std::string_view what) {
    if (!j.is_object() || !j.contains("format_version"))
        throw ParseError(std::string(what) + ": missing field \"format_version\"");
    if (j["format_version"] != kFormatVersion)
        throw ParseError(std::string(what) + ": unsupported format_version");
}

template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    fn(os);
    if (!os) throw Error("write failed: " + path.string());
}

}  // namespace detail

// --- weights -------------------------------------------------------------

inline constexpr std::string_view kWeightsHeader = "symbol_index,element_index,re,im";

/// Element indices are 1-based, symbol indices 0-based.
inline void write_weights_csv(std::ostream& os, const WeightStream& ws) {
    os << detail::kVersionLine << '\n' << kWeightsHeader << '\n';
    for (std::size_t k = 0; k < ws.weights.size(); ++k)
        for (Eigen::Index m = 0; m < ws.weights[k].size(); ++m)
            os << k << ',' << (m + 1) << ',' << format_double(ws.weights[k][m].real()) << ','
               << format_double(ws.weights[k][m].imag()) << '\n';
}

/// Rebuilds the weight vectors; symbol duration and scale are not part of the file.
inline WeightStream read_weights_csv(std::istream& is) {
    WeightStream ws;
    std::vector<std::vector<Complex>> rows;
    for (const auto& line : detail::csv_body(is, kWeightsHeader, "weights csv")) {
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 4) throw ParseError("weights csv: expected 4 fields: " + line);
        const auto k = parse_uint(f[0], "symbol_index");
        const auto m = parse_uint(f[1], "element_index");
        if (k != rows.size() && k + 1 != rows.size()) throw ParseError("weights csv: symbols out of order");
        if (k == rows.size()) rows.emplace_back();
        if (m != rows[k].size() + 1) throw ParseError("weights csv: elements out of order");
        rows[k].emplace_back(parse_double(f[2], "re"), parse_double(f[3], "im"));
    }
    for (const auto& r : rows) {
        if (r.size() != rows.front().size()) throw ParseError("weights csv: ragged element count");
        ws.weights.emplace_back(Eigen::Map<const CVector>(r.data(), static_cast<Eigen::Index>(r.size())));
    }
    return ws;
}

// --- phase traces --------------------------------------------------------

inline constexpr std::string_view kPhaseHeader = "time_s,receiver_id,phase_deg";

struct PhaseRow {
    double time_s = 0.0;
    std::size_t receiver_id = 1;
    double phase_deg = 0.0;  // wrapped to (-180, 180]

    bool operator==(const PhaseRow&) const = default;
};

inline double wrapped_degrees(double radians) { return wrap_deg(rad_to_deg(wrap_pi(radians))); }

inline std::vector<PhaseRow> phase_rows(const PhaseTrace& trace, std::size_t receiver_id) {
    std::vector<PhaseRow> rows;
    rows.reserve(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i)
        rows.push_back({trace.time(i), receiver_id, wrapped_degrees(trace.phase[i])});
    return rows;
}

inline void write_phase_csv(std::ostream& os, std::span<const PhaseRow> rows) {
    os << detail::kVersionLine << '\n' << kPhaseHeader << '\n';
    for (const auto& r : rows)
        os << format_double(r.time_s) << ',' << r.receiver_id << ',' << format_double(r.phase_deg) << '\n';
}

inline std::vector<PhaseRow> read_phase_csv(std::istream& is) {
    std::vector<PhaseRow> rows;
    for (const auto& line : detail::csv_body(is, kPhaseHeader, "phase csv")) {
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 3) throw ParseError("phase csv: expected 3 fields: " + line);
        PhaseRow r{parse_double(f[0], "time_s"), parse_uint(f[1], "receiver_id"), parse_double(f[2], "phase_deg")};
        if (!(r.phase_deg > -180.0 && r.phase_deg <= 180.0)) throw ParseError("phase csv: phase_deg out of range");
        rows.push_back(r);
    }
    return rows;
}

// --- bit logs ------------------------------------------------------------

struct BitLog {
    std::size_t channel = 1;  // receiver id
    std::size_t message = 0;
    Bits tx;
    Bits rx;

    bool operator==(const BitLog&) const = default;
};

/// Marker row: '^' under every position that differs (or is missing in RX).
inline std::string mismatch_markers(std::span<const std::uint8_t> tx, std::span<const std::uint8_t> rx) {
    std::string m(std::max(tx.size(), rx.size()), ' ');
    for (std::size_t i = 0; i < m.size(); ++i)
        if (i >= tx.size() || i >= rx.size() || tx[i] != rx[i]) m[i] = '^';
    while (!m.empty() && m.back() == ' ') m.pop_back();
    return m;
}

inline void write_bit_log(std::ostream& os, const BitLog& log) {
    const auto b = classify_errors(log.tx, log.rx);
    os << detail::kVersionLine << '\n'
       << "channel " << log.channel << " message " << log.message << '\n'
       << "tx_bits " << log.tx.size() << " rx_bits " << log.rx.size() << " positional_errors "
       << positional_bit_errors(log.tx, log.rx) << '\n'
       << "insertions " << b.insertions << " deletions " << b.deletions << " substitutions " << b.substitutions
       << '\n'
       << "TX " << bits_to_string(log.tx) << '\n'
       << "RX " << bits_to_string(log.rx) << '\n'
       << "   " << mismatch_markers(log.tx, log.rx) << '\n';
}

inline BitLog read_bit_log(std::istream& is) {
    const auto lines = detail::read_lines(is);
    if (lines.size() < 6 || lines[0] != detail::kVersionLine) throw ParseError("bit log: missing version line");
    BitLog log;
    const auto head = detail::split(lines[1], ' ');
    if (head.size() != 4 || head[0] != "channel" || head[2] != "message")
        throw ParseError("bit log: bad channel line");
    log.channel = parse_uint(head[1], "channel");
    log.message = parse_uint(head[3], "message");
    auto row = [&](const std::string& line, std::string_view tag) {
        if (line.rfind(tag, 0) != 0) throw ParseError("bit log: expected row starting with \"" + std::string(tag) + "\"");
        try {
            return bits_from_string(std::string_view(line).substr(tag.size()));
        } catch (const InvalidArgument& e) {
            throw ParseError(std::string("bit log: ") + e.what());
        }
    };
    log.tx = row(lines[4], "TX ");
    log.rx = row(lines[5], "RX ");
    return log;
}

// --- calibration report --------------------------------------------------

struct CalibrationReport {
    Scenario scenario;
    SimulatedCalibration calibration;
};

inline Json calibration_report_json(const Scenario& scenario, const SimulatedCalibration& cal) {
    const auto& r = cal.result;
    const auto N = static_cast<Eigen::Index>(r.h.receivers());
    const auto M = static_cast<Eigen::Index>(r.h.elements());
    Json j;
    j["format_version"] = kFormatVersion;
    j["seed"] = cal.seed;
    j["started_at_s"] = cal.started_at;
    j["completed_at_s"] = cal.completed_at;
    j["transmissions"] = calibration_schedule(r.h.elements()).size();
    Json amps;
    amps["tx_only"] = r.measurements.tx_only;
    amps["both_zero"] = r.measurements.both_zero;
    amps["both_quadrature"] = r.measurements.both_quadrature;
    j["amplitudes"] = amps;
    j["magnitudes"] = Json::array();
    j["theta_deg"] = Json::array();
    j["h"] = Json::array();
    for (Eigen::Index n = 0; n < N; ++n) {
        Json mag = Json::array(), th = Json::array(), row = Json::array();
        for (Eigen::Index m = 0; m < M; ++m) {
            mag.push_back(r.csi.magnitudes(n, m));
            row.push_back(Json::array({r.h.entries()(n, m).real(), r.h.entries()(n, m).imag()}));
        }
        for (Eigen::Index m = 0; m + 1 < M; ++m) th.push_back(rad_to_deg(r.csi.theta(n, m)));
        j["magnitudes"].push_back(mag);
        j["theta_deg"].push_back(th);
        j["h"].push_back(row);
    }
    j["scenario"] = scenario_to_json(scenario);
    return j;
}

/// The raw amplitudes are authoritative: magnitudes and theta are recomputed
/// from them; the assembled H is read as written.
inline CalibrationReport parse_calibration_report(const Json& j) {
    using detail::require;
    detail::check_version(j, "calibration report");
    CalibrationReport rep;
    if (!j.contains("scenario")) throw ParseError("calibration report: missing field \"scenario\"");
    rep.scenario = scenario_from_json(j["scenario"]);
    auto& cal = rep.calibration;
    cal.seed = require<std::uint64_t>(j, "seed", "calibration report");
    cal.started_at = require<double>(j, "started_at_s", "calibration report");
    cal.completed_at = require<double>(j, "completed_at_s", "calibration report");
    if (!j.contains("amplitudes")) throw ParseError("calibration report: missing field \"amplitudes\"");
    using Sets = std::vector<std::vector<double>>;
    const auto& a = j["amplitudes"];
    cal.result.measurements.tx_only = require<Sets>(a, "tx_only", "amplitudes");
    cal.result.measurements.both_zero = require<Sets>(a, "both_zero", "amplitudes");
    cal.result.measurements.both_quadrature = require<Sets>(a, "both_quadrature", "amplitudes");
    try {
        cal.result.measurements.validate();
        cal.result.csi = estimate_csi(cal.result.measurements, rep.scenario.calibration.floor);
    } catch (const Error& e) {
        throw ParseError(std::string("calibration report: ") + e.what());
    }
    const auto rows = require<std::vector<std::vector<std::vector<double>>>>(j, "h", "calibration report");
    const auto N = cal.result.measurements.receivers();
    const auto M = cal.result.measurements.elements();
    if (rows.size() != N) throw ParseError("calibration report: field \"h\" has the wrong number of rows");
    CMatrix h(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(M));
    for (std::size_t n = 0; n < N; ++n) {
        if (rows[n].size() != M) throw ParseError("calibration report: field \"h\" has the wrong number of columns");
        for (std::size_t m = 0; m < M; ++m) {
            if (rows[n][m].size() != 2) throw ParseError("calibration report: field \"h\" entries must be [re, im]");
            h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = Complex(rows[n][m][0], rows[n][m][1]);
        }
    }
    try {
        cal.result.h = ChannelMatrix(std::move(h));
    } catch (const Error& e) {
        throw ParseError(std::string("calibration report: ") + e.what());
    }
    if (cal.result.h.receivers() != rep.scenario.receivers.size() ||
        cal.result.h.elements() != rep.scenario.element_positions_wavelengths.size())
        throw ParseError("calibration report: dimensions do not match the embedded scenario");
    return rep;
}

inline CalibrationReport load_calibration_report(const std::filesystem::path& path) {
    try {
        return parse_calibration_report(read_json_file(path));
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        if (msg.find(path.string()) != std::string::npos) throw;
        throw ParseError(path.string() + ": " + msg);
    }
}

// --- transmission summary ------------------------------------------------

/// Decoded bytes as UTF-8, each byte taken as its Latin-1 code point, so a
/// corrupted 8-bit character survives JSON intact.
inline std::string latin1_to_utf8(std::string_view bytes) {
    std::string out;
    out.reserve(bytes.size());
    for (unsigned char c : bytes) {
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back(static_cast<char>(0xC0 | (c >> 6)));
            out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
        }
    }
    return out;
}

inline Json link_options_json(const LinkOptions& o) {
    return {{"bits_per_symbol", o.bits_per_symbol},
            {"fec", o.fec},
            {"detector", std::string(to_string(o.detector))},
            {"fec_seed", o.fec_seed},
            {"fec_length", o.fec_length},
            {"terminator", o.terminator},
            {"transition_threshold_deg", rad_to_deg(o.detector_config.threshold_for(o.bits_per_symbol))},
            {"confirmation_window", o.detector_config.confirmation_window},
            {"refractory", o.detector_config.refractory}};
}

inline Json transmission_json(const Transmission& tx, std::uint64_t id) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["id"] = id;
    j["noise_seed"] = tx.noise_seed;
    j["start_time_s"] = tx.start_time;
    j["end_time_s"] = tx.end_time;
    j["symbols"] = tx.weights.symbols();
    j["options"] = link_options_json(tx.options);
    j["channels"] = Json::array();
    for (std::size_t n = 0; n < tx.channels.size(); ++n) {
        const auto& c = tx.channels[n];
        j["channels"].push_back({{"receiver_id", n + 1},
                                 {"message", c.message},
                                 {"decoded", latin1_to_utf8(c.decoded_text)},
                                 {"message_bits", c.message_bits()},
                                 {"tx_bits", c.tx_bits.size()},
                                 {"air_bits", c.air_bits.size()},
                                 {"rx_bits", c.rx_bits.size()},
                                 {"bit_errors", c.bit_errors},
                                 {"insertions", c.breakdown.insertions},
                                 {"deletions", c.breakdown.deletions},
                                 {"substitutions", c.breakdown.substitutions},
                                 {"fec_framing_lost", c.fec_framing_lost},
                                 {"fec_blocks_failed", c.fec_blocks_failed}});
    }
    return j;
}

// --- experiment statistics -----------------------------------------------

inline Json stats_json(const Scenario& scenario, const ExperimentResult& res) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["config"] = {{"num_messages", res.config.num_messages},
                   {"chars_per_message", res.config.chars_per_message},
                   {"link", link_options_json(res.config.link)}};
    j["seeds"] = {{"master", res.config.master_seed},
                  {"scenario", res.scenario_seed},
                  {"calibration", res.calibration.seed}};
    j["bits_per_channel"] = res.bits_per_channel;
    j["channels"] = Json::array();
    for (std::size_t n = 0; n < res.channels.size(); ++n) {
        const auto& c = res.channels[n];
        j["channels"].push_back({{"receiver_id", n + 1},
                                 {"total_bit_errors", c.stats.total_bit_errors},
                                 {"total_bits", c.stats.total_bits},
                                 {"num_messages", c.stats.num_messages},
                                 {"percent_bit_error", c.stats.percent_bit_error},
                                 {"percent_bit_error_2dp", c.stats.percent_2dp()},
                                 {"mean_bit_errors", c.stats.mean_bit_errors},
                                 {"mean_bit_errors_2dp", c.stats.mean_2dp()},
                                 {"std_bit_errors", c.stats.std_bit_errors},
                                 {"breakdown",
                                  {{"insertions", c.breakdown.insertions},
                                   {"deletions", c.breakdown.deletions},
                                   {"substitutions", c.breakdown.substitutions}}},
                                 {"messages_with_insertions", c.messages_with_insertions},
                                 {"per_message", c.stats.per_message}});
    }
    j["scenario"] = scenario_to_json(scenario);
    return j;
}

/// Parsed stats.json. The structure is kept as JSON after validation; the
/// per-channel statistics are re-derived and checked against the file.
struct StatsReport {
    Json document;
    std::vector<BerStats> channels;
};

inline StatsReport parse_stats(const Json& j) {
    using detail::require;
    detail::check_version(j, "stats");
    StatsReport rep;
    if (!j.contains("channels") || !j["channels"].is_array()) throw ParseError("stats: missing field \"channels\"");
    for (const auto& c : j["channels"]) {
        const auto counts = require<std::vector<std::uint64_t>>(c, "per_message", "channels[]");
        const auto bits = require<std::uint64_t>(c, "total_bits", "channels[]");
        const auto msgs = require<std::uint64_t>(c, "num_messages", "channels[]");
        BerStats s;
        try {
            s = ber_stats(counts, bits, msgs);
        } catch (const InvalidArgument& e) {
            throw ParseError(std::string("stats: ") + e.what());
        }
        if (s.total_bit_errors != require<std::uint64_t>(c, "total_bit_errors", "channels[]"))
            throw ParseError("stats: total_bit_errors disagrees with per_message");
        if (s.percent_2dp() != require<std::string>(c, "percent_bit_error_2dp", "channels[]"))
            throw ParseError("stats: percent_bit_error_2dp disagrees with per_message");
        rep.channels.push_back(std::move(s));
    }
    (void)scenario_from_json(j.value("scenario", Json::object()));
    rep.document = j;
    return rep;
}

inline Json stats_to_json(const StatsReport& rep) { return rep.document; }

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace dmtb

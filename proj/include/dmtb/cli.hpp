#pragma once

// Command-line front end. Exit codes: 0 success, 1 bad input or
// configuration, 2 calibration or precoding failure, 3 anything else.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dmtb/errors.hpp"
#include "dmtb/experiments.hpp"
#include "dmtb/exports.hpp"
#include "dmtb/fec.hpp"
#include "dmtb/link.hpp"
#include "dmtb/scenario.hpp"
#include "dmtb/service.hpp"

namespace dmtb {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitCalibration = 2;
inline constexpr int kExitInternal = 3;

namespace cli {

struct LinkFlags {
    int bits_per_symbol = 1;
    bool fec = false;
    std::string detector = "sync";
    double threshold_deg = 0.0;
    std::size_t window = 3;
    double refractory = 0.5;

    void add(CLI::App& app) {
        app.add_option("--bits-per-symbol,-b", bits_per_symbol, "DPSK bits per symbol")
            ->check(CLI::Range(1, 4));
        app.add_flag("--fec", fec, "Enable LDPC coding");
        app.add_option("--detector", detector, "sync | async")->check(CLI::IsMember({"sync", "async"}));
        app.add_option("--threshold-deg", threshold_deg, "Async transition threshold (0: default)");
        app.add_option("--window", window, "Async confirmation window, samples")->check(CLI::PositiveNumber);
        app.add_option("--refractory", refractory, "Async refractory, fraction of a symbol")
            ->check(CLI::Range(0.0, 0.999999));
    }

    LinkOptions options() const {
        LinkOptions o;
        o.bits_per_symbol = bits_per_symbol;
        o.fec = fec;
        o.detector = parse_detector(detector);
        o.detector_config.transition_threshold = deg_to_rad(threshold_deg);
        o.detector_config.confirmation_window = window;
        o.detector_config.refractory = refractory;
        return o;
    }
};

inline std::string with_thousands(std::uint64_t v) {
    std::string s = std::to_string(v);
    for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
    return s;
}

inline std::string fixed2(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

inline int cmd_calibrate(const std::string& scenario_path, const std::string& out_path, std::uint64_t seed,
                         std::optional<double> start, std::ostream& out) {
    const auto scenario = load_scenario(scenario_path);
    const auto cal =
        simulate_calibration(scenario, calibration_seed(scenario.noise.seed, seed), start.value_or(0.0));
    const auto report = calibration_report_json(scenario, cal);
    detail::write_file(out_path, [&](std::ostream& os) { os << dump_json(report); });
    out << "calibrated " << cal.result.h.receivers() << " receivers with " << report["transmissions"]
        << " transmissions\n";
    for (std::size_t n = 0; n < cal.result.h.receivers(); ++n) {
        out << "rx" << (n + 1) << " theta_deg";
        for (Eigen::Index m = 0; m < cal.result.csi.theta.cols(); ++m)
            out << ' ' << format_double(rad_to_deg(cal.result.csi.theta(static_cast<Eigen::Index>(n), m)));
        out << '\n';
    }
    out << "wrote " << out_path << '\n';
    return kExitOk;
}

inline void write_transmission_files(const std::filesystem::path& dir, const Transmission& tx, std::uint64_t id) {
    detail::write_file(dir / "weights.csv", [&](std::ostream& os) { write_weights_csv(os, tx.weights); });
    for (std::size_t n = 0; n < tx.channels.size(); ++n) {
        const auto rows = phase_rows(tx.traces[n], n + 1);
        detail::write_file(dir / ("phase_" + std::to_string(n + 1) + ".csv"),
                           [&](std::ostream& os) { write_phase_csv(os, rows); });
        const BitLog log{n + 1, 0, tx.channels[n].tx_bits, tx.channels[n].decoded_bits};
        detail::write_file(dir / ("bits_" + std::to_string(n + 1) + "_0.log"),
                           [&](std::ostream& os) { write_bit_log(os, log); });
    }
    detail::write_file(dir / "transmission.json", [&](std::ostream& os) { os << dump_json(transmission_json(tx, id)); });
}

inline int cmd_transmit(const std::string& calib_path, std::vector<std::string> messages, const LinkFlags& flags,
                        const std::string& out_dir, std::uint64_t seed, std::optional<double> start,
                        std::ostream& out) {
    const auto report = load_calibration_report(calib_path);
    const auto& scenario = report.scenario;
    if (messages.size() != scenario.receivers.size())
        throw InvalidArgument("scenario has " + std::to_string(scenario.receivers.size()) +
                              " receivers but " + std::to_string(messages.size()) + " messages were given");
    auto options = flags.options();
    options.terminator = true;
    const auto tx = transmit(scenario, report.calibration.result.h, messages, options,
                             transmission_noise_seed(scenario.noise.seed, seed),
                             start.value_or(report.calibration.completed_at));
    for (std::size_t n = 0; n < tx.channels.size(); ++n) {
        const auto& c = tx.channels[n];
        out << "rx" << (n + 1) << " decoded: " << c.decoded_text << '\n';
        out << "rx" << (n + 1) << " bit errors: " << c.bit_errors << " of " << c.tx_bits.size() << " bits ("
            << c.message.size() << " chars + " << c.padding_chars() << " NUL; " << c.air_bits.size()
            << " on air; " << c.breakdown.insertions << " insertions, " << c.breakdown.deletions << " deletions, "
            << c.breakdown.substitutions << " flips)\n";
    }
    if (!out_dir.empty()) {
        write_transmission_files(out_dir, tx, seed);
        out << "wrote " << out_dir << '\n';
    }
    return kExitOk;
}

inline void print_summary(std::ostream& out, const ExperimentResult& res) {
    out << "messages: " << res.config.num_messages << " x " << res.config.chars_per_message << " chars, "
        << with_thousands(res.bits_per_channel) << " bits transmitted on each channel\n";
    out << "Channel | Total Bit Errors | % Bit Error | Mean Bit Errors | STD Bit Errors | Ins/Del/Flip\n";
    for (std::size_t n = 0; n < res.channels.size(); ++n) {
        const auto& c = res.channels[n];
        out << (n + 1) << " | " << c.stats.total_bit_errors << " | " << c.stats.percent_2dp() << " | "
            << c.stats.mean_2dp() << " | " << fixed2(c.stats.std_bit_errors) << " | " << c.breakdown.insertions
            << '/' << c.breakdown.deletions << '/' << c.breakdown.substitutions << '\n';
    }
}

inline int cmd_ber(const std::string& scenario_path, const ExperimentConfig& cfg, const std::string& out_dir,
                   bool write_logs, std::ostream& out) {
    const auto scenario = load_scenario(scenario_path);
    const auto res = run_experiment(scenario, cfg);
    print_summary(out, res);
    if (out_dir.empty()) return kExitOk;
    const std::filesystem::path dir(out_dir);
    detail::write_file(dir / "stats.json", [&](std::ostream& os) { os << dump_json(stats_json(scenario, res)); });
    for (std::size_t n = 0; n < res.first_message_traces.size(); ++n) {
        const auto rows = phase_rows(res.first_message_traces[n], n + 1);
        detail::write_file(dir / ("phase_" + std::to_string(n + 1) + ".csv"),
                           [&](std::ostream& os) { write_phase_csv(os, rows); });
    }
    if (write_logs) {
        for (std::size_t n = 0; n < res.logs.size(); ++n)
            for (const auto& log : res.logs[n]) {
                const BitLog b{n + 1, log.index, log.tx_bits, log.rx_bits};
                detail::write_file(dir / ("bits_" + std::to_string(n + 1) + "_" + std::to_string(log.index) + ".log"),
                                   [&](std::ostream& os) { write_bit_log(os, b); });
            }
    }
    out << "wrote " << out_dir << '\n';
    return kExitOk;
}

inline int cmd_alist(std::uint64_t seed, std::size_t n, const std::string& out_path, std::ostream& out) {
    const auto code = ldpc_build(seed, n);
    if (out_path.empty()) {
        write_alist(out, code);
    } else {
        detail::write_file(out_path, [&](std::ostream& os) { write_alist(os, code); });
        out << "wrote " << out_path << " (n=" << code.n() << ", k=" << code.k() << ")\n";
    }
    return kExitOk;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Directional-modulation testbed simulator", "dmtb"};
    app.require_subcommand(1);

    std::string scenario_path, calib_path, out_path, out_dir;
    std::uint64_t seed = 1;
    std::string start_text;  // parsed with from_chars so printed doubles round-trip exactly

    auto* calibrate = app.add_subcommand("calibrate", "Amplitude-only calibration against a scenario");
    calibrate->add_option("scenario", scenario_path, "Scenario JSON")->required();
    calibrate->add_option("-o,--out", out_path, "Calibration report path")->required();
    calibrate->add_option("--seed", seed, "Calibration seed");
    calibrate->add_option("--start-time", start_text, "Simulated start time, seconds");

    cli::LinkFlags link;
    std::string msg1, msg2;
    std::vector<std::string> extra;
    auto* tx = app.add_subcommand("transmit", "Send one message per receiver using a calibration report");
    tx->add_option("calibration", calib_path, "Calibration report JSON")->required();
    auto* m1 = tx->add_option("--msg1", msg1, "Message for receiver 1");
    auto* m2 = tx->add_option("--msg2", msg2, "Message for receiver 2");
    tx->add_option("--msg", extra, "Messages for receivers 3.. (repeatable)");
    link.add(*tx);
    tx->add_option("--out-dir", out_dir, "Directory for phase CSVs, bit logs and weights");
    tx->add_option("--seed", seed, "Noise seed");
    tx->add_option("--start-time", start_text, "Simulated start time (default: end of calibration)");

    ExperimentConfig exp;
    bool no_logs = false;
    auto* ber = app.add_subcommand("ber", "Batch bit-error-rate experiment");
    ber->add_option("scenario", scenario_path, "Scenario JSON")->required();
    ber->add_option("--messages", exp.num_messages, "Messages per channel")->check(CLI::PositiveNumber);
    ber->add_option("--chars", exp.chars_per_message, "Characters per message")->check(CLI::PositiveNumber);
    ber->add_option("--seed", exp.master_seed, "Master seed");
    ber->add_option("--threads", exp.threads, "Worker threads (0: all cores)");
    ber->add_option("--out-dir", out_dir, "Directory for stats.json, bit logs and phase CSVs");
    ber->add_flag("--no-logs", no_logs, "Skip per-message bit logs");
    link.add(*ber);

    unsigned short port = 8080;
    std::string address = "127.0.0.1";
    double pace_ms = 1.0;
    auto* serve = app.add_subcommand("serve", "HTTP + WebSocket service for the operator console");
    serve->add_option("scenario", scenario_path, "Scenario JSON")->required();
    serve->add_option("--port", port, "TCP port");
    serve->add_option("--address", address, "Bind address");
    serve->add_option("--pace-ms", pace_ms, "Delay between streamed symbols, milliseconds")->check(CLI::NonNegativeNumber);

    std::size_t code_length = kDefaultCodeLength;
    std::uint64_t code_seed = kDefaultFecSeed;
    auto* alist = app.add_subcommand("ldpc-alist", "Export the LDPC parity-check matrix in alist format");
    alist->add_option("--seed", code_seed, "Construction seed");
    alist->add_option("--n", code_length, "Code length");
    alist->add_option("-o,--out", out_path, "Output path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitInput;
    }

    try {
        std::optional<double> start;
        if (!start_text.empty()) start = parse_double(start_text, "--start-time");
        if (*calibrate) return cli::cmd_calibrate(scenario_path, out_path, seed, start, out);
        if (*tx) {
            std::vector<std::string> messages;
            if (*m1 || *m2) {
                messages = {msg1, msg2};
            }
            messages.insert(messages.end(), extra.begin(), extra.end());
            return cli::cmd_transmit(calib_path, messages, link, out_dir, seed, start, out);
        }
        if (*ber) {
            exp.link = link.options();
            return cli::cmd_ber(scenario_path, exp, out_dir, !no_logs, out);
        }
        if (*serve) {
            ServiceOptions opts;
            opts.address = address;
            opts.port = port;
            opts.pace_ms = pace_ms;
            Service service(load_scenario(scenario_path), opts);
            service.start();
            out << "listening on http://" << address << ':' << service.port() << std::endl;
            service.wait();
            return kExitOk;
        }
        if (*alist) return cli::cmd_alist(code_seed, code_length, out_path, out);
    } catch (const MeasurementFloor& e) {
        err << "calibration failed: " << e.what() << '\n';
        return kExitCalibration;
    } catch (const DegenerateMagnitude& e) {
        err << "calibration failed: " << e.what() << '\n';
        return kExitCalibration;
    } catch (const RankDeficient& e) {
        err << "precoding failed: " << e.what() << '\n';
        return kExitCalibration;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const NonAscii& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitInput;
}

}  // namespace dmtb

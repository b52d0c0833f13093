#pragma once

// Single-session HTTP + WebSocket service for the operator console.
//
//   GET  /session           state, calibration age, counters, last transmission
//   POST /calibrate         {}
//   POST /transmit          {"messages": [..], "bits_per_symbol": 1..4, "fec": bool, "detector": "sync"|"async"}
//   POST /stop              abandon the running transmission's event stream
//   POST /generate_message  {"seed"?: int} -> {"messages": [..]} from the phrase pool
//   WS   /stream            newline-delimited JSON events, angles in degrees
//
// Each connection is served by its own thread. Mutations take the session's
// busy flag; a second mutation while one runs gets 409. Simulation runs on a
// single worker thread and calls exactly the library functions the CLI uses:
// calibration k uses seed k, transmission k uses seed k, both starting at the
// session clock, which the responses report.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <sys/socket.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "dmtb/experiments.hpp"
#include "dmtb/exports.hpp"
#include "dmtb/link.hpp"
#include "dmtb/phrases.hpp"
#include "dmtb/scenario.hpp"

namespace dmtb {

struct ServiceOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;  // 0: pick a free port
    double pace_ms = 1.0;        // delay between streamed symbols
};

namespace svc {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

/// One WebSocket subscriber's outbound queue.
class Subscriber {
public:
    static constexpr std::size_t kMaxQueued = 4096;  // frames

    void push(std::shared_ptr<const std::string> frame) {
        {
            std::lock_guard lock(mu_);
            if (queue_.size() >= kMaxQueued) {
                queue_.pop_front();
                ++dropped_;
            }
            queue_.push_back(std::move(frame));
        }
        cv_.notify_one();
    }

    std::shared_ptr<const std::string> pop(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty(); })) return nullptr;
        auto f = std::move(queue_.front());
        queue_.pop_front();
        return f;
    }

    std::uint64_t dropped() const {
        std::lock_guard lock(mu_);
        return dropped_;
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    std::uint64_t dropped_ = 0;
};

class Hub {
public:
    std::shared_ptr<Subscriber> subscribe() {
        auto s = std::make_shared<Subscriber>();
        std::lock_guard lock(mu_);
        subs_.push_back(s);
        return s;
    }
    void unsubscribe(const std::shared_ptr<Subscriber>& s) {
        std::lock_guard lock(mu_);
        subs_.remove(s);
    }
    /// `lines` is one or more newline-terminated JSON events.
    void publish(std::string lines) {
        if (lines.empty()) return;
        auto frame = std::make_shared<const std::string>(std::move(lines));
        std::lock_guard lock(mu_);
        for (auto& s : subs_) s->push(frame);
    }

private:
    std::mutex mu_;
    std::list<std::shared_ptr<Subscriber>> subs_;
};

struct HttpError {
    http::status status;
    std::string message;
};

inline std::string event_line(const Json& j) { return j.dump() + "\n"; }

}  // namespace svc

class Service {
public:
    Service(Scenario scenario, ServiceOptions opts)
        : scenario_(std::move(scenario)), opts_(std::move(opts)), acceptor_(io_), epoch_(Clock::now()) {
        scenario_.validate();
        counters_bits_.assign(scenario_.receivers.size(), 0);
        counters_errors_.assign(scenario_.receivers.size(), 0);
        const auto addr = boost::asio::ip::make_address(opts_.address);
        svc::tcp::endpoint ep(addr, opts_.port);
        acceptor_.open(ep.protocol());
        acceptor_.set_option(boost::asio::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen();
        port_ = acceptor_.local_endpoint().port();
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    ~Service() { stop(); }

    unsigned short port() const noexcept { return port_; }

    void start() {
        worker_ = std::jthread([this](std::stop_token st) { worker_loop(st); });
        acceptor_thread_ = std::jthread([this] { accept_loop(); });
    }

    /// Blocks until stop() is called from another thread.
    void wait() {
        std::unique_lock lock(stop_mu_);
        stop_cv_.wait(lock, [&] { return stopping_.load(); });
    }

    void stop() {
        if (stopping_.exchange(true)) {
            join_all();
            return;
        }
        stop_cv_.notify_all();
        cancel_.store(true);
        // Wake the blocking accept with a throwaway connection.
        try {
            boost::asio::io_context io;
            svc::tcp::socket s(io);
            s.connect(svc::tcp::endpoint(acceptor_.local_endpoint().address(), port_));
        } catch (const std::exception&) {
        }
        {
            std::lock_guard lock(conn_mu_);
            for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
        }
        join_all();
    }

    /// Snapshot served by GET /session.
    Json session_json() const {
        std::lock_guard lock(state_mu_);
        Json j;
        j["format_version"] = kFormatVersion;
        j["state"] = state_;
        j["clock_s"] = now_locked();
        j["receivers"] = scenario_.receivers.size();
        j["config"] = {{"bits_per_symbol", config_.bits_per_symbol},
                       {"fec", config_.fec},
                       {"detector", std::string(to_string(config_.detector))}};
        if (calibration_) {
            Json c = calibration_report_json(scenario_, *calibration_);
            c["age_s"] = now_locked() - calibration_->completed_at;
            c["wall_age_s"] = seconds_since(calibrated_wall_);
            j["calibration"] = std::move(c);
        } else {
            j["calibration"] = nullptr;
        }
        j["counters"] = {{"calibrations", calibrations_},
                         {"transmissions", transmissions_},
                         {"bits", counters_bits_},
                         {"bit_errors", counters_errors_}};
        j["last_transmission"] = last_transmission_.is_null() ? Json(nullptr) : last_transmission_;
        j["scenario"] = scenario_to_json(scenario_);
        return j;
    }

    /// Routes one request; exposed for in-process tests.
    std::pair<unsigned, Json> handle(const std::string& method, const std::string& target, const std::string& body) {
        try {
            if (target == "/session" && method == "GET") return {200, session_json()};
            if (method != "POST")
                throw svc::HttpError{svc::http::status::method_not_allowed, "method not allowed"};
            const Json req = parse_body(body);
            if (target == "/calibrate") return {200, do_calibrate()};
            if (target == "/transmit") return {202, do_transmit(req)};
            if (target == "/stop") return {200, do_stop()};
            if (target == "/generate_message") return {200, do_generate(req)};
            throw svc::HttpError{svc::http::status::not_found, "no such endpoint: " + target};
        } catch (const svc::HttpError& e) {
            return {static_cast<unsigned>(e.status), Json{{"error", e.message}}};
        } catch (const std::exception& e) {
            return {500, Json{{"error", e.what()}}};
        }
    }

private:
    using Clock = std::chrono::steady_clock;

    static double seconds_since(Clock::time_point t) {
        return std::chrono::duration<double>(Clock::now() - t).count();
    }

    /// Simulated time keeps pace with wall time while idle, so calibration
    /// ages and drift accumulates between operator actions.
    double now_locked() const { return std::max(sim_clock_, seconds_since(epoch_)); }

    static Json parse_body(const std::string& body) {
        if (body.empty()) return Json::object();
        try {
            auto j = Json::parse(body);
            if (!j.is_object()) throw svc::HttpError{svc::http::status::bad_request, "body must be a JSON object"};
            return j;
        } catch (const nlohmann::json::parse_error&) {
            throw svc::HttpError{svc::http::status::bad_request, "body is not valid JSON"};
        }
    }

    class BusyGuard {
    public:
        explicit BusyGuard(std::atomic<bool>& flag) : flag_(&flag) {
            bool expected = false;
            if (!flag.compare_exchange_strong(expected, true))
                throw svc::HttpError{svc::http::status::conflict, "busy"};
        }
        BusyGuard(const BusyGuard&) = delete;
        ~BusyGuard() {
            if (flag_) flag_->store(false);
        }
        void release_to_worker() { flag_ = nullptr; }

    private:
        std::atomic<bool>* flag_;
    };

    void set_state(std::string s) {
        {
            std::lock_guard lock(state_mu_);
            state_ = s;
        }
        hub_.publish(svc::event_line({{"type", "status"}, {"state", std::move(s)}}));
    }

    template <class Fn>
    auto run_on_worker(Fn&& fn) {
        using R = decltype(fn());
        auto task = std::make_shared<std::packaged_task<R()>>(std::forward<Fn>(fn));
        auto fut = task->get_future();
        post([task] { (*task)(); });
        return fut;
    }

    void post(std::function<void()> job) {
        {
            std::lock_guard lock(jobs_mu_);
            jobs_.push_back(std::move(job));
        }
        jobs_cv_.notify_one();
    }

    void worker_loop(std::stop_token st) {
        while (!st.stop_requested()) {
            std::function<void()> job;
            {
                std::unique_lock lock(jobs_mu_);
                jobs_cv_.wait_for(lock, std::chrono::milliseconds(100), [&] { return !jobs_.empty(); });
                if (jobs_.empty()) continue;
                job = std::move(jobs_.front());
                jobs_.pop_front();
            }
            job();
        }
    }

    Json do_calibrate() {
        BusyGuard guard(busy_);
        set_state("calibrating");
        std::uint64_t index = 0;
        double start = 0.0;
        {
            std::lock_guard lock(state_mu_);
            index = calibrations_ + 1;
            start = now_locked();
        }
        auto fut = run_on_worker(
            [&] { return simulate_calibration(scenario_, calibration_seed(scenario_.noise.seed, index), start); });
        SimulatedCalibration cal;
        try {
            cal = fut.get();
        } catch (const MeasurementFloor& e) {
            set_state("idle");
            throw svc::HttpError{svc::http::status::unprocessable_entity, std::string("calibration failed: ") + e.what()};
        } catch (const DegenerateMagnitude& e) {
            set_state("idle");
            throw svc::HttpError{svc::http::status::unprocessable_entity, std::string("calibration failed: ") + e.what()};
        }
        Json report = calibration_report_json(scenario_, cal);
        {
            std::lock_guard lock(state_mu_);
            calibration_ = cal;
            calibrations_ = index;
            calibrated_wall_ = Clock::now();
            sim_clock_ = std::max(sim_clock_, cal.completed_at);
            state_ = "idle";
        }
        hub_.publish(svc::event_line({{"type", "status"},
                                      {"state", "idle"},
                                      {"event", "calibrated"},
                                      {"calibration_seed_index", index},
                                      {"completed_at_s", cal.completed_at}}));
        report["seed_index"] = index;
        return report;
    }

    LinkOptions parse_transmit(const Json& req, std::vector<std::string>& messages) const {
        auto bad = [](const std::string& field, const std::string& why) {
            return svc::HttpError{svc::http::status::bad_request, field + ": " + why};
        };
        if (!req.contains("messages") || !req["messages"].is_array()) throw bad("messages", "required array of strings");
        for (const auto& m : req["messages"]) {
            if (!m.is_string()) throw bad("messages", "entries must be strings");
            messages.push_back(m.get<std::string>());
        }
        if (messages.size() != scenario_.receivers.size())
            throw bad("messages", "expected " + std::to_string(scenario_.receivers.size()) + " entries");
        for (const auto& m : messages)
            for (unsigned char c : m)
                if (c > 127) throw bad("messages", "must be 7-bit ASCII");
        LinkOptions o = config_;
        o.terminator = true;
        if (req.contains("bits_per_symbol")) {
            const auto& b = req["bits_per_symbol"];
            if (!b.is_number_integer() || b.get<int>() < 1 || b.get<int>() > 4)
                throw bad("bits_per_symbol", "must be an integer in 1..4");
            o.bits_per_symbol = b.get<int>();
        }
        if (req.contains("fec")) {
            if (!req["fec"].is_boolean()) throw bad("fec", "must be a boolean");
            o.fec = req["fec"].get<bool>();
        }
        if (req.contains("detector")) {
            if (!req["detector"].is_string()) throw bad("detector", "must be \"sync\" or \"async\"");
            try {
                o.detector = parse_detector(req["detector"].get<std::string>());
            } catch (const InvalidArgument&) {
                throw bad("detector", "must be \"sync\" or \"async\"");
            }
        }
        return o;
    }

    Json do_transmit(const Json& req) {
        std::vector<std::string> messages;
        LinkOptions options;
        {
            std::lock_guard lock(state_mu_);
            options = parse_transmit(req, messages);
            if (!calibration_) throw svc::HttpError{svc::http::status::conflict, "calibration required"};
        }
        BusyGuard guard(busy_);
        std::uint64_t id = 0;
        double start = 0.0;
        ChannelMatrix estimate = [&] {
            std::lock_guard lock(state_mu_);
            id = transmissions_started_ + 1;
            transmissions_started_ = id;
            start = now_locked();
            config_ = options;
            state_ = "transmitting";
            return calibration_->result.h;
        }();
        cancel_.store(false);
        const std::uint64_t noise_seed = transmission_noise_seed(scenario_.noise.seed, id);
        hub_.publish(svc::event_line({{"type", "status"},
                                      {"state", "transmitting"},
                                      {"id", id},
                                      {"bits_per_symbol", options.bits_per_symbol},
                                      {"fec", options.fec},
                                      {"detector", std::string(to_string(options.detector))},
                                      {"start_time_s", start}}));
        guard.release_to_worker();
        post([this, id, start, noise_seed, options, estimate, messages] {
            run_transmission(id, start, noise_seed, options, estimate, messages);
        });
        return {{"id", id}, {"status", "started"}, {"seed", id}, {"noise_seed", noise_seed}, {"start_time_s", start}};
    }

    void run_transmission(std::uint64_t id, double start, std::uint64_t noise_seed, const LinkOptions& options,
                          const ChannelMatrix& estimate, const std::vector<std::string>& messages) {
        struct Release {
            std::atomic<bool>& flag;
            ~Release() { flag.store(false); }
        } release{busy_};
        Transmission tx;
        try {
            tx = transmit(scenario_, estimate, messages, options, noise_seed, start);
        } catch (const std::exception& e) {
            {
                std::lock_guard lock(state_mu_);
                state_ = "idle";
            }
            hub_.publish(svc::event_line({{"type", "status"}, {"state", "idle"}, {"id", id}, {"error", e.what()}}));
            return;
        }
        const bool completed = stream_transmission(tx);
        Json summary = transmission_json(tx, id);
        summary["stopped"] = !completed;
        {
            std::lock_guard lock(state_mu_);
            if (completed) {
                transmissions_ = id;
                for (std::size_t n = 0; n < tx.channels.size(); ++n) {
                    counters_bits_[n] += tx.channels[n].tx_bits.size();
                    counters_errors_[n] += tx.channels[n].bit_errors;
                }
            }
            last_transmission_ = summary;
            sim_clock_ = std::max(sim_clock_, tx.end_time);
            state_ = "idle";
        }
        hub_.publish(svc::event_line(
            {{"type", "status"}, {"state", "idle"}, {"id", id}, {"event", completed ? "completed" : "stopped"}}));
    }

    /// Streams weights and phases symbol by symbol, then decoded characters and
    /// error counts. Returns false if stopped.
    bool stream_transmission(const Transmission& tx) {
        const std::size_t sps = tx.samples_per_symbol;
        const std::size_t samples = tx.traces.empty() ? 0 : tx.traces.front().size();
        const auto pace = std::chrono::duration<double, std::milli>(opts_.pace_ms);
        for (std::size_t k = 0; k < tx.weights.symbols(); ++k) {
            if (cancel_.load()) return false;
            std::string lines;
            const auto& w = tx.weights.weights[k];
            for (Eigen::Index m = 0; m < w.size(); ++m)
                lines += svc::event_line({{"type", "weight"},
                                          {"symbol", k},
                                          {"element", m + 1},
                                          {"re", w[m].real()},
                                          {"im", w[m].imag()}});
            for (std::size_t n = 0; n < tx.traces.size(); ++n)
                for (std::size_t i = k * sps; i < std::min(samples, (k + 1) * sps); ++i)
                    lines += svc::event_line({{"type", "phase"},
                                              {"rx", n + 1},
                                              {"t_s", tx.traces[n].time(i)},
                                              {"phase_deg", wrapped_degrees(tx.traces[n].phase[i])}});
            hub_.publish(std::move(lines));
            if (opts_.pace_ms > 0.0) std::this_thread::sleep_for(pace);
        }
        std::string lines;
        for (std::size_t n = 0; n < tx.channels.size(); ++n) {
            for (char c : tx.channels[n].decoded_text)
                lines += svc::event_line({{"type", "decoded_char"}, {"rx", n + 1}, {"char", latin1_to_utf8(std::string_view(&c, 1))}});
        }
        for (std::size_t n = 0; n < tx.channels.size(); ++n)
            lines += svc::event_line({{"type", "bit_errors"}, {"rx", n + 1}, {"count", tx.channels[n].bit_errors}});
        if (cancel_.load()) return false;
        hub_.publish(std::move(lines));
        return true;
    }

    Json do_stop() {
        const bool running = busy_.load();
        cancel_.store(true);
        return {{"stopped", running}};
    }

    Json do_generate(const Json& req) {
        std::uint64_t seed = 0;
        if (req.contains("seed")) {
            if (!req["seed"].is_number_unsigned())
                throw svc::HttpError{svc::http::status::bad_request, "seed: must be a non-negative integer"};
            seed = req["seed"].get<std::uint64_t>();
        } else {
            seed = generated_.fetch_add(1) + 1;
        }
        return {{"seed", seed}, {"messages", generate_phrases(scenario_.receivers.size(), seed)}};
    }

    // --- transport ---

    void accept_loop() {
        while (!stopping_.load()) {
            boost::system::error_code ec;
            svc::tcp::socket socket(io_);
            acceptor_.accept(socket, ec);
            if (stopping_.load()) break;
            if (ec) continue;
            std::lock_guard lock(conn_mu_);
            std::erase_if(connections_, [](const Connection& c) { return c.done->load(); });
            open_fds_.push_back(socket.native_handle());
            auto done = std::make_shared<std::atomic<bool>>(false);
            connections_.push_back({std::jthread([this, done, s = std::move(socket)]() mutable {
                                        serve_connection(std::move(s));
                                        done->store(true);
                                    }),
                                    done});
        }
        boost::system::error_code ignored;
        acceptor_.close(ignored);
    }

    void forget_fd(int fd) {
        std::lock_guard lock(conn_mu_);
        std::erase(open_fds_, fd);
    }

    template <class Body>
    static void add_common_headers(svc::http::response<Body>& res) {
        res.set(svc::http::field::server, "dmtb");
        res.set(svc::http::field::access_control_allow_origin, "*");
        res.set(svc::http::field::access_control_allow_headers, "Content-Type");
        res.set(svc::http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    }

    void serve_connection(svc::tcp::socket socket) {
        const int fd = socket.native_handle();
        svc::beast::flat_buffer buffer;
        boost::system::error_code ec;
        for (;;) {
            svc::http::request<svc::http::string_body> req;
            svc::http::read(socket, buffer, req, ec);
            if (ec) break;
            if (svc::websocket::is_upgrade(req)) {
                if (req.target() == "/stream") serve_stream(std::move(socket), std::move(req));
                forget_fd(fd);
                return;
            }
            svc::http::response<svc::http::string_body> res;
            res.version(req.version());
            res.keep_alive(req.keep_alive());
            add_common_headers(res);
            if (req.method() == svc::http::verb::options) {
                res.result(svc::http::status::no_content);
            } else {
                auto [status, body] =
                    handle(std::string(req.method_string()), std::string(req.target()), req.body());
                res.result(status);
                res.set(svc::http::field::content_type, "application/json");
                res.body() = body.dump();
            }
            res.prepare_payload();
            svc::http::write(socket, res, ec);
            if (ec || !req.keep_alive()) break;
        }
        socket.shutdown(svc::tcp::socket::shutdown_both, ec);
        forget_fd(fd);
    }

    void serve_stream(svc::tcp::socket socket, svc::http::request<svc::http::string_body> req) {
        svc::websocket::stream<svc::tcp::socket> ws(std::move(socket));
        boost::system::error_code ec;
        ws.accept(req, ec);
        if (ec) return;
        ws.text(true);
        auto sub = hub_.subscribe();
        {
            Json hello = {{"type", "status"}, {"state", current_state()}, {"event", "subscribed"}};
            ws.write(boost::asio::buffer(svc::event_line(hello)), ec);
        }
        svc::beast::flat_buffer inbound;
        while (!ec && !stopping_.load()) {
            auto frame = sub->pop(std::chrono::milliseconds(50));
            if (frame) {
                ws.write(boost::asio::buffer(*frame), ec);
                continue;
            }
            // Client frames are ignored, but reading them answers a close handshake.
            if (ws.next_layer().available(ec) > 0 && !ec) {
                ws.read(inbound, ec);
                inbound.consume(inbound.size());
            }
        }
        hub_.unsubscribe(sub);
        if (!ec) ws.close(svc::websocket::close_code::going_away, ec);
    }

    std::string current_state() const {
        std::lock_guard lock(state_mu_);
        return state_;
    }

    void join_all() {
        if (acceptor_thread_.joinable()) acceptor_thread_.join();
        std::list<Connection> conns;
        {
            std::lock_guard lock(conn_mu_);
            conns.swap(connections_);
        }
        conns.clear();
        if (worker_.joinable()) {
            worker_.request_stop();
            worker_.join();
        }
    }

    Scenario scenario_;
    ServiceOptions opts_;
    boost::asio::io_context io_;
    svc::tcp::acceptor acceptor_;
    unsigned short port_ = 0;
    svc::Hub hub_;

    mutable std::mutex state_mu_;
    std::string state_ = "idle";
    std::optional<SimulatedCalibration> calibration_;
    Clock::time_point calibrated_wall_{};
    Clock::time_point epoch_;
    double sim_clock_ = 0.0;
    LinkOptions config_;
    std::uint64_t calibrations_ = 0;
    std::uint64_t transmissions_ = 0;
    std::uint64_t transmissions_started_ = 0;
    std::vector<std::uint64_t> counters_bits_;
    std::vector<std::uint64_t> counters_errors_;
    Json last_transmission_;

    std::atomic<bool> busy_{false};
    std::atomic<bool> cancel_{false};
    std::atomic<std::uint64_t> generated_{0};

    std::mutex jobs_mu_;
    std::condition_variable jobs_cv_;
    std::deque<std::function<void()>> jobs_;

    std::mutex stop_mu_;
    std::condition_variable stop_cv_;
    std::atomic<bool> stopping_{false};

    std::mutex conn_mu_;
    std::vector<int> open_fds_;
    struct Connection {
        std::jthread thread;
        std::shared_ptr<std::atomic<bool>> done;
    };
    std::list<Connection> connections_;

    std::jthread worker_;
    std::jthread acceptor_thread_;
};

}  // namespace dmtb

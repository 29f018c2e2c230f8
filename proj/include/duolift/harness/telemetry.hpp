#pragma once

/**
 * @file telemetry.hpp
 * @brief Length-prefixed JSON over TCP between a live run and an operator.
 *
 * Each frame is a 4-byte big-endian payload length followed by that many
 * bytes of UTF-8 JSON (one object, at most 1 MiB). Every object carries a
 * "type":
 *
 *   snapshot       server -> client, at the telemetry rate
 *   force_command  client -> server, {"F": [x, y, z] N, "timestamp": s}
 *   error          server -> client, {"code": ..., "message": ...}
 *
 * "timestamp" is the sender's wall clock in seconds since the Unix epoch.
 * A command is used only while it is at most 200 ms old; after that the
 * run falls back to the scripted force (zero for live scenarios).
 *
 * The network thread and the simulation loop only exchange messages through
 * Channel queues.
 */

#include "duolift/harness/run_log.hpp"
#include "duolift/harness/simulation.hpp"
#include "duolift/types.hpp"

#include <json.hpp>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cmath>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace duolift {

inline constexpr std::size_t kMaxFrameBytes = 1u << 20;
inline constexpr double kCommandStaleness = 0.2;  // s

inline double wall_clock_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------- framing

inline std::string encode_frame(const nlohmann::json& message) {
  const std::string body = message.dump();
  if (body.size() > kMaxFrameBytes) {
    throw std::length_error("telemetry frame exceeds 1 MiB");
  }
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string frame(4, '\0');
  frame[0] = static_cast<char>((n >> 24) & 0xff);
  frame[1] = static_cast<char>((n >> 16) & 0xff);
  frame[2] = static_cast<char>((n >> 8) & 0xff);
  frame[3] = static_cast<char>(n & 0xff);
  return frame + body;
}

/// Incremental frame splitter for a byte stream.
class FrameDecoder {
 public:
  void feed(const char* data, std::size_t n) { buffer_.append(data, n); }

  /// Next complete payload, if any. Throws std::length_error on an
  /// oversized length prefix; the stream cannot be resynchronised after that.
  std::optional<std::string> next() {
    if (buffer_.size() < 4) return std::nullopt;
    const auto* b = reinterpret_cast<const unsigned char*>(buffer_.data());
    const std::uint32_t n = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
                            (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
    if (n > kMaxFrameBytes) {
      throw std::length_error("frame length " + std::to_string(n) + " exceeds 1 MiB");
    }
    if (buffer_.size() < 4 + std::size_t{n}) return std::nullopt;
    std::string payload = buffer_.substr(4, n);
    buffer_.erase(0, 4 + std::size_t{n});
    return payload;
  }

 private:
  std::string buffer_;
};

// ---------------------------------------------------------------- messages

namespace detail {
inline nlohmann::json v3(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }
}  // namespace detail

inline nlohmann::json snapshot_message(const LogRow& r, std::uint64_t seq) {
  using detail::v3;
  const SimState s{r.t, r.eta};
  return {
      {"type", "snapshot"},
      {"seq", seq},
      {"t", r.t},
      {"position", v3(s.position())},
      {"velocity", v3(s.velocity())},
      {"attitude", v3(s.attitude())},
      {"rates", v3(s.rates())},
      {"reference", {{"position", v3(r.reference.position)}, {"velocity", v3(r.reference.velocity)},
                     {"yaw", r.reference.yaw}}},
      {"attitude_reference", v3(r.attitude_reference.angle)},
      {"E_p", v3(r.position_error)},
      {"E_phi", v3(r.sliding.error)},
      {"S_phi", v3(r.sliding.surface)},
      {"U_th", r.wrench.thrust},
      {"U_m", v3(r.wrench.moments)},
      {"kv_hat", v3(r.kv_hat)},
      {"F_h", v3(r.force_gated)},
      {"F_applied", v3(r.force_applied)},
      {"gate_open", r.gate_open},
      {"diverged", r.diverged},
  };
}

inline nlohmann::json error_message(const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"code", code}, {"message", message}};
}

inline nlohmann::json force_command_message(const Vec3& force, double timestamp) {
  return {{"type", "force_command"}, {"F", detail::v3(force)}, {"timestamp", timestamp}};
}

struct ForceCommand {
  Vec3 force = Vec3::Zero();
  double timestamp = 0.0;  // s, sender wall clock
};

/// Parses a force_command payload. Throws std::invalid_argument with a
/// reason on anything malformed.
inline ForceCommand parse_force_command(const std::string& payload) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(payload);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw std::invalid_argument("message must be an object with a string \"type\"");
  }
  if (j["type"] != "force_command") {
    throw std::invalid_argument("unsupported message type \"" + j["type"].get<std::string>() + "\"");
  }
  const auto& f = j.contains("F") ? j["F"] : nlohmann::json();
  if (!f.is_array() || f.size() != 3 || !f[0].is_number() || !f[1].is_number() || !f[2].is_number()) {
    throw std::invalid_argument("force_command needs \"F\" as three numbers");
  }
  if (!j.contains("timestamp") || !j["timestamp"].is_number()) {
    throw std::invalid_argument("force_command needs a numeric \"timestamp\"");
  }
  ForceCommand c{{f[0].get<double>(), f[1].get<double>(), f[2].get<double>()}, j["timestamp"].get<double>()};
  if (!c.force.allFinite() || !std::isfinite(c.timestamp)) {
    throw std::invalid_argument("force_command values must be finite");
  }
  return c;
}

// ---------------------------------------------------------------- channels

/// Bounded multi-producer queue; the oldest message is dropped when full.
template <typename T>
class Channel {
 public:
  explicit Channel(std::size_t capacity = 64) : capacity_(capacity) {}

  void send(T value) {
    std::lock_guard lock(mutex_);
    if (queue_.size() >= capacity_) queue_.pop_front();
    queue_.push_back(std::move(value));
  }

  std::vector<T> drain() {
    std::lock_guard lock(mutex_);
    std::vector<T> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
    queue_.clear();
    return out;
  }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::deque<T> queue_;
};

/// Simulation-side holder of the latest operator command.
class CommandReceiver {
 public:
  CommandReceiver(double max_force, double staleness = kCommandStaleness)
      : max_force_(max_force), staleness_(staleness) {}

  void accept(const ForceCommand& c) {
    if (!latest_ || c.timestamp >= latest_->timestamp) latest_ = c;
  }

  /// Clamped force of the latest command if it is still fresh at `now`.
  std::optional<Vec3> current(double now) const {
    if (!latest_ || !is_fresh(latest_->timestamp, now)) return std::nullopt;
    const double n = latest_->force.norm();
    return n > max_force_ ? Vec3(latest_->force * (max_force_ / n)) : latest_->force;
  }

  bool is_fresh(double timestamp, double now) const {
    const double age = now - timestamp;
    return age <= staleness_ && age >= -staleness_;
  }

 private:
  double max_force_;
  double staleness_;
  std::optional<ForceCommand> latest_;
};

// ---------------------------------------------------------------- sockets

namespace detail {

inline void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.release();
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

}  // namespace detail

/**
 * TCP endpoint for live sessions. Runs its own thread; snapshots go out
 * through publish(), validated commands come back through poll_commands().
 */
class TelemetryServer {
 public:
  struct Options {
    std::uint16_t port = 0;  // 0 picks a free port
    std::string bind_address = "127.0.0.1";
    double staleness = kCommandStaleness;
    std::function<double()> clock = wall_clock_seconds;
  };

  explicit TelemetryServer(Options opt) : opt_(std::move(opt)) {
    listener_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (listener_.get() < 0) throw std::runtime_error("socket: " + std::string(std::strerror(errno)));
    const int yes = 1;
    ::setsockopt(listener_.get(), SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(opt_.port);
    if (::inet_pton(AF_INET, opt_.bind_address.c_str(), &addr.sin_addr) != 1) {
      throw std::invalid_argument("bad bind address " + opt_.bind_address);
    }
    if (::bind(listener_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
        ::listen(listener_.get(), 8) < 0) {
      throw std::runtime_error("cannot listen on port " + std::to_string(opt_.port) + ": " +
                               std::strerror(errno));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listener_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    detail::set_nonblocking(listener_.get());
    thread_ = std::thread([this] { loop(); });
  }

  TelemetryServer(const TelemetryServer&) = delete;
  TelemetryServer& operator=(const TelemetryServer&) = delete;
  ~TelemetryServer() { stop(); }

  void stop() {
    running_ = false;
    if (thread_.joinable()) thread_.join();
  }

  std::uint16_t port() const { return port_; }

  void publish(const nlohmann::json& message) { outbound_.send(encode_frame(message)); }

  /// Commands that passed validation and the staleness check on arrival.
  std::vector<ForceCommand> poll_commands() { return inbound_.drain(); }

  std::size_t client_count() const { return clients_.load(); }

 private:
  struct Client {
    detail::Fd fd;
    FrameDecoder decoder;
    std::string out;
    bool closing = false;
  };

  static constexpr std::size_t kMaxPendingBytes = 4u << 20;

  void loop() {
    std::vector<Client> clients;
    std::vector<pollfd> fds;
    char buf[4096];
    while (running_) {
      for (auto& frame : outbound_.drain()) {
        for (auto& c : clients) {
          if (c.out.size() < kMaxPendingBytes) c.out += frame;
        }
      }
      fds.clear();
      fds.push_back({listener_.get(), POLLIN, 0});
      for (auto& c : clients) {
        fds.push_back({c.fd.get(), static_cast<short>(POLLIN | (c.out.empty() ? 0 : POLLOUT)), 0});
      }
      if (::poll(fds.data(), fds.size(), 5) < 0 && errno != EINTR) break;

      for (std::size_t i = 0; i < clients.size(); ++i) {
        auto& c = clients[i];
        const short re = fds[i + 1].revents;
        if (re & (POLLERR | POLLNVAL)) {
          c.out.clear();
          c.closing = true;
          continue;
        }
        if (re & (POLLIN | POLLHUP)) {
          const ssize_t n = ::recv(c.fd.get(), buf, sizeof buf, 0);
          if (n <= 0) {
            if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK)) {
              c.out.clear();
              c.closing = true;
            }
          } else {
            handle_input(c, buf, static_cast<std::size_t>(n));
          }
        }
        if (!c.out.empty()) {
          const ssize_t n = ::send(c.fd.get(), c.out.data(), c.out.size(), MSG_NOSIGNAL);
          if (n > 0) {
            c.out.erase(0, static_cast<std::size_t>(n));
          } else if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) {
            c.out.clear();
            c.closing = true;
          }
        }
      }
      if (fds[0].revents & POLLIN) {
        int fd;
        while ((fd = ::accept(listener_.get(), nullptr, nullptr)) >= 0) {
          detail::set_nonblocking(fd);
          const int yes = 1;
          ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof yes);
          clients.push_back(Client{detail::Fd(fd), {}, {}, false});
        }
      }
      std::erase_if(clients, [](const Client& c) { return c.closing && c.out.empty(); });
      clients_ = clients.size();
    }
  }

  void handle_input(Client& c, const char* data, std::size_t n) {
    c.decoder.feed(data, n);
    try {
      while (auto payload = c.decoder.next()) {
        try {
          const ForceCommand cmd = parse_force_command(*payload);
          const double now = opt_.clock();
          const double age = now - cmd.timestamp;
          if (age > opt_.staleness || age < -opt_.staleness) {
            c.out += encode_frame(error_message("stale_command", "command timestamp is " + std::to_string(age) +
                                                                     " s from server time, limit " +
                                                                     std::to_string(opt_.staleness) + " s"));
            continue;
          }
          inbound_.send(cmd);
        } catch (const std::invalid_argument& e) {
          c.out += encode_frame(error_message("malformed", e.what()));
        }
      }
    } catch (const std::length_error& e) {
      c.out += encode_frame(error_message("frame_too_large", e.what()));
      c.closing = true;
    }
  }

  Options opt_;
  detail::Fd listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{true};
  std::atomic<std::size_t> clients_{0};
  Channel<std::string> outbound_{16};
  Channel<ForceCommand> inbound_{256};
  std::thread thread_;
};

/// Wires a server into run(): snapshots out at the telemetry rate, fresh
/// commands in.
class LiveSession {
 public:
  LiveSession(TelemetryServer& server, double max_force, std::function<double()> clock = wall_clock_seconds)
      : server_(server), receiver_(max_force), clock_(std::move(clock)) {}

  LiveHooks hooks() {
    LiveHooks h;
    h.command = [this](double) {
      for (const auto& c : server_.poll_commands()) receiver_.accept(c);
      return receiver_.current(clock_());
    };
    h.publish = [this](const LogRow& row) { server_.publish(snapshot_message(row, seq_++)); };
    return h;
  }

 private:
  TelemetryServer& server_;
  CommandReceiver receiver_;
  std::function<double()> clock_;
  std::uint64_t seq_ = 0;
};

/// Minimal blocking client, used by tests and scripts.
class TelemetryClient {
 public:
  TelemetryClient(const std::string& host, std::uint16_t port) {
    fd_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
    if (fd_.get() < 0 || ::connect(fd_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port));
    }
    const int yes = 1;
    ::setsockopt(fd_.get(), IPPROTO_TCP, TCP_NODELAY, &yes, sizeof yes);
  }

  void send_raw(const std::string& bytes) {
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::send(fd_.get(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n <= 0) throw std::runtime_error("send failed");
      off += static_cast<std::size_t>(n);
    }
  }

  void send(const nlohmann::json& message) { send_raw(encode_frame(message)); }

  void send_force(const Vec3& force, double timestamp = wall_clock_seconds()) {
    send(force_command_message(force, timestamp));
  }

  /// Next message, or nullopt if none arrives within `timeout_s`.
  std::optional<nlohmann::json> receive(double timeout_s = 1.0) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    char buf[4096];
    while (true) {
      if (auto payload = decoder_.next()) return nlohmann::json::parse(*payload);
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{fd_.get(), POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) continue;
      const ssize_t n = ::recv(fd_.get(), buf, sizeof buf, 0);
      if (n <= 0) return std::nullopt;
      decoder_.feed(buf, static_cast<std::size_t>(n));
    }
  }

  /// Next message of the given type, skipping others.
  std::optional<nlohmann::json> receive_type(const std::string& type, double timeout_s = 1.0) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    while (std::chrono::steady_clock::now() < deadline) {
      const double left = std::chrono::duration<double>(deadline - std::chrono::steady_clock::now()).count();
      auto m = receive(left);
      if (!m) return std::nullopt;
      if ((*m)["type"] == type) return m;
    }
    return std::nullopt;
  }

  void close() { fd_.reset(); }

 private:
  detail::Fd fd_;
  FrameDecoder decoder_;
};

}  // namespace duolift
